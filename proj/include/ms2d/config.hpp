#pragma once

#include <algorithm>
#include <cctype>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "ms2d/crystal.hpp"
#include "ms2d/errors.hpp"
#include "ms2d/noise.hpp"

// Declarative run configuration: a flat sectioned key = value text file
// ('#' or ';' comments), or the same content as a JSON object of sections.
// All frequencies in the file are ordinary (MHz); conversion to angular units
// happens when sections are turned into domain objects.

namespace ms2d {

struct TrapSection {
    double omega_x_mhz = 0.803;
    double omega_y_mhz = 2.284;
    double omega_z_mhz = 0.553;
    std::string species = "yb171";
    double ion_mass_amu = 0.0;  // overrides species when > 0
    double rf_mhz = 37.0;
    double mathieu_q = 0.12;

    TrapConfig to_trap() const {
        TrapConfig t = TrapConfig::from_mhz(omega_x_mhz, omega_y_mhz, omega_z_mhz);
        if (ion_mass_amu > 0.0)
            t.ion_mass = ion_mass_amu * atomic_mass_unit;
        else if (species == "yb171")
            t.ion_mass = yb171_mass;
        else
            throw ValidationError("[trap] unknown species '" + species + "'");
        t.rf_frequency = mhz_to_angular(rf_mhz);
        t.mathieu_q = mathieu_q;
        return t;
    }
};

struct CrystalSection {
    int n_ions = 4;
    std::uint64_t seed = 1;
};

struct GateSection {
    std::string pair = "L,R";           // labels, "i,j" indices, or "center"
    std::string rule = "LR";            // LR | UD | LU (designed gates)
    std::string style = "alternating";  // simultaneous | alternating (optimizer)
    double gap_us = 2.0;
    double total_time_us = 300.0;
    int n_seg = 240;
    double nbar = 0.5;  // uniform thermal occupation for the optimizer cost
    double robustness_weight = 0.0;
    double scan_min_mhz = 0.0;
    double scan_max_mhz = 0.0;
    int scan_points = 0;
    int samples_per_segment = 64;
};

struct NoiseSection {
    double tau_s_ms = 4.0;
    double tau_m_ms = 3.0;
    std::vector<double> heating_per_mode = {120.0, 10.0, 10.0, 10.0};
    double sigma_intensity = 0.01;
    std::vector<double> nbar = {0.1};
    bool laser_dephasing_collective = false;
    int phonon_cutoff = 6;
    std::vector<int> active_modes;  // empty: automatic nearest-detuned pair

    // Broadcast scalar lists onto the actual mode count.
    NoiseModel to_model(int n_modes) const {
        NoiseModel m;
        m.laser_dephasing_time = tau_s_ms * 1e-3;
        m.motional_dephasing_time = tau_m_ms * 1e-3;
        m.intensity_sigma = sigma_intensity;
        m.collective_laser_dephasing = laser_dephasing_collective;
        auto broadcast = [n_modes](const std::vector<double>& v, const char* what) {
            if (v.empty()) throw ValidationError(std::string("[noise] empty ") + what);
            Eigen::VectorXd out(n_modes);
            if (static_cast<int>(v.size()) == 1)
                out.setConstant(v[0]);
            else if (static_cast<int>(v.size()) == n_modes)
                for (int i = 0; i < n_modes; ++i) out(i) = v[i];
            else
                throw ValidationError(std::string("[noise] ") + what +
                                      " must have 1 or n_modes entries");
            return out;
        };
        m.heating_rates = broadcast(heating_per_mode, "heating_per_mode");
        m.nbar = broadcast(nbar, "nbar");
        return m;
    }
};

struct MicromotionSection {
    double waist_um = 1.5;
    double grid_max_a_over_r = 3.0;
    int grid_points = 100;
    std::vector<double> amplitudes_nm;  // per addressed pair ion
    std::string sequence_file;
};

struct ReadoutSection {
    double flip = 0.07;
    double crosstalk = 0.01;
    std::vector<std::pair<int, int>> adjacency = {{0, 2}, {0, 3}, {1, 2}, {1, 3}};
    int mc_samples = 1000;
    std::uint64_t seed = 7;
    std::string matrix_file;
    std::string counts_file;
};

struct OutputSection {
    std::string directory = "out";
    std::vector<std::string> formats = {"csv", "json"};
};

struct RunConfig {
    TrapSection trap;
    CrystalSection crystal;
    GateSection gate;
    NoiseSection noise;
    MicromotionSection micromotion;
    ReadoutSection readout;
    OutputSection output;

    void validate() const {
        trap.to_trap().validate();
        if (crystal.n_ions < 1) throw ValidationError("[crystal] n_ions must be positive");
        if (gate.rule != "LR" && gate.rule != "UD" && gate.rule != "LU")
            throw ValidationError("[gate] rule must be LR, UD or LU");
        if (gate.style != "simultaneous" && gate.style != "alternating")
            throw ValidationError("[gate] style must be simultaneous or alternating");
        if (gate.n_seg < 1) throw ValidationError("[gate] n_seg must be positive");
        if (gate.gap_us < 0.0) throw ValidationError("[gate] gap_us must be nonnegative");
        if (gate.total_time_us <= 0.0)
            throw ValidationError("[gate] total_time_us must be positive");
        if (gate.scan_points < 0 || (gate.scan_points > 0 &&
                                     !(gate.scan_max_mhz > gate.scan_min_mhz)))
            throw ValidationError("[gate] scan window is empty or inverted");
        if (noise.phonon_cutoff < 3)
            throw ValidationError("[noise] phonon_cutoff must be at least 3");
        if (readout.flip < 0.0 || readout.flip >= 0.5 || readout.crosstalk < 0.0 ||
            readout.crosstalk >= 0.5)
            throw ValidationError("[readout] flip/crosstalk must lie in [0, 0.5)");
        if (readout.mc_samples < 100)
            throw ValidationError("[readout] mc_samples must be at least 100");
        if (output.directory.empty()) throw ValidationError("[output] directory is empty");
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(trim(cur));
    return out;
}

// Raw section/key/value view of either format.
using RawConfig = std::map<std::string, std::map<std::string, std::string>>;

inline RawConfig parse_ini(const std::string& text) {
    RawConfig raw;
    std::string section;
    std::size_t pos = 0;
    int lineno = 0;
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        std::string line = text.substr(pos, nl == std::string::npos ? nl : nl - pos);
        pos = nl == std::string::npos ? text.size() + 1 : nl + 1;
        ++lineno;
        const auto comment = line.find_first_of("#;");
        if (comment != std::string::npos) line = line.substr(0, comment);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ValidationError("config line " + std::to_string(lineno) +
                                      ": malformed section header");
            section = trim(line.substr(1, line.size() - 2));
            raw[section];
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ValidationError("config line " + std::to_string(lineno) +
                                  ": expected key = value");
        if (section.empty())
            throw ValidationError("config line " + std::to_string(lineno) +
                                  ": key outside any section");
        raw[section][trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return raw;
}

inline RawConfig parse_json_config(const std::string& text) {
    RawConfig raw;
    const auto j = nlohmann::json::parse(text);
    for (const auto& [section, body] : j.items()) {
        for (const auto& [key, value] : body.items()) {
            std::string str;
            if (value.is_string())
                str = value.get<std::string>();
            else if (value.is_array()) {
                for (const auto& v : value) {
                    if (!str.empty()) str += ",";
                    str += v.is_string() ? v.get<std::string>() : v.dump();
                }
            } else {
                str = value.dump();
            }
            raw[section][key] = str;
        }
    }
    return raw;
}

struct SectionReader {
    const std::map<std::string, std::string>* kv;
    std::string section;
    std::vector<std::string>* unknown;

    bool has(const std::string& key) const { return kv && kv->count(key); }

    template <typename F>
    void get(const std::string& key, F&& assign) const {
        if (!has(key)) return;
        try {
            assign(kv->at(key));
        } catch (const ValidationError&) {
            throw;
        } catch (const std::exception& e) {
            throw ValidationError("[" + section + "] " + key + ": " + e.what());
        }
    }
};

inline double to_double(const std::string& s) {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw ValidationError("trailing characters in number '" + s + "'");
    return v;
}

inline std::vector<double> to_doubles(const std::string& s) {
    std::vector<double> out;
    for (const auto& tok : split(s, ','))
        if (!tok.empty()) out.push_back(to_double(tok));
    return out;
}

inline bool to_bool(const std::string& s) {
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw ValidationError("expected a boolean, got '" + s + "'");
}

}  // namespace detail

inline RunConfig parse_config(const std::string& text) {
    const std::string trimmed = detail::trim(text);
    const detail::RawConfig raw = (!trimmed.empty() && trimmed.front() == '{')
                                      ? detail::parse_json_config(text)
                                      : detail::parse_ini(text);
    static const std::vector<std::string> known_sections{
        "trap", "crystal", "gate", "noise", "micromotion", "readout", "output"};
    for (const auto& [section, _] : raw)
        if (std::find(known_sections.begin(), known_sections.end(), section) ==
            known_sections.end())
            throw ValidationError("unknown config section [" + section + "]");

    RunConfig cfg;
    auto reader = [&](const std::string& name) {
        return detail::SectionReader{raw.count(name) ? &raw.at(name) : nullptr, name, nullptr};
    };
    using detail::to_bool;
    using detail::to_double;
    using detail::to_doubles;

    {
        auto r = reader("trap");
        r.get("omega_x_mhz", [&](const std::string& v) { cfg.trap.omega_x_mhz = to_double(v); });
        r.get("omega_y_mhz", [&](const std::string& v) { cfg.trap.omega_y_mhz = to_double(v); });
        r.get("omega_z_mhz", [&](const std::string& v) { cfg.trap.omega_z_mhz = to_double(v); });
        r.get("species", [&](const std::string& v) { cfg.trap.species = v; });
        r.get("ion_mass_amu",
              [&](const std::string& v) { cfg.trap.ion_mass_amu = to_double(v); });
        r.get("rf_mhz", [&](const std::string& v) { cfg.trap.rf_mhz = to_double(v); });
        r.get("mathieu_q", [&](const std::string& v) { cfg.trap.mathieu_q = to_double(v); });
    }
    {
        auto r = reader("crystal");
        r.get("n_ions", [&](const std::string& v) { cfg.crystal.n_ions = std::stoi(v); });
        r.get("seed", [&](const std::string& v) { cfg.crystal.seed = std::stoull(v); });
    }
    {
        auto r = reader("gate");
        r.get("pair", [&](const std::string& v) { cfg.gate.pair = v; });
        r.get("rule", [&](const std::string& v) { cfg.gate.rule = v; });
        r.get("style", [&](const std::string& v) { cfg.gate.style = v; });
        r.get("gap_us", [&](const std::string& v) { cfg.gate.gap_us = to_double(v); });
        r.get("total_time_us",
              [&](const std::string& v) { cfg.gate.total_time_us = to_double(v); });
        r.get("n_seg", [&](const std::string& v) { cfg.gate.n_seg = std::stoi(v); });
        r.get("nbar", [&](const std::string& v) { cfg.gate.nbar = to_double(v); });
        r.get("robustness_weight",
              [&](const std::string& v) { cfg.gate.robustness_weight = to_double(v); });
        r.get("scan_min_mhz",
              [&](const std::string& v) { cfg.gate.scan_min_mhz = to_double(v); });
        r.get("scan_max_mhz",
              [&](const std::string& v) { cfg.gate.scan_max_mhz = to_double(v); });
        r.get("scan_points",
              [&](const std::string& v) { cfg.gate.scan_points = std::stoi(v); });
        r.get("samples_per_segment",
              [&](const std::string& v) { cfg.gate.samples_per_segment = std::stoi(v); });
    }
    {
        auto r = reader("noise");
        r.get("tau_s_ms", [&](const std::string& v) { cfg.noise.tau_s_ms = to_double(v); });
        r.get("tau_m_ms", [&](const std::string& v) { cfg.noise.tau_m_ms = to_double(v); });
        r.get("heating_per_mode",
              [&](const std::string& v) { cfg.noise.heating_per_mode = to_doubles(v); });
        r.get("sigma_intensity",
              [&](const std::string& v) { cfg.noise.sigma_intensity = to_double(v); });
        r.get("nbar", [&](const std::string& v) { cfg.noise.nbar = to_doubles(v); });
        r.get("laser_dephasing_collective", [&](const std::string& v) {
            cfg.noise.laser_dephasing_collective = to_bool(v);
        });
        r.get("phonon_cutoff",
              [&](const std::string& v) { cfg.noise.phonon_cutoff = std::stoi(v); });
        r.get("active_modes", [&](const std::string& v) {
            cfg.noise.active_modes.clear();
            if (v == "auto") return;
            for (const auto& tok : detail::split(v, ','))
                if (!tok.empty()) cfg.noise.active_modes.push_back(std::stoi(tok));
        });
    }
    {
        auto r = reader("micromotion");
        r.get("waist_um",
              [&](const std::string& v) { cfg.micromotion.waist_um = to_double(v); });
        r.get("grid_max_a_over_r",
              [&](const std::string& v) { cfg.micromotion.grid_max_a_over_r = to_double(v); });
        r.get("grid_points",
              [&](const std::string& v) { cfg.micromotion.grid_points = std::stoi(v); });
        r.get("amplitudes_nm",
              [&](const std::string& v) { cfg.micromotion.amplitudes_nm = to_doubles(v); });
        r.get("sequence_file",
              [&](const std::string& v) { cfg.micromotion.sequence_file = v; });
    }
    {
        auto r = reader("readout");
        r.get("flip", [&](const std::string& v) { cfg.readout.flip = to_double(v); });
        r.get("crosstalk",
              [&](const std::string& v) { cfg.readout.crosstalk = to_double(v); });
        r.get("adjacency", [&](const std::string& v) {
            cfg.readout.adjacency.clear();
            for (const auto& tok : detail::split(v, ',')) {
                if (tok.empty()) continue;
                const auto dash = tok.find('-');
                if (dash == std::string::npos)
                    throw ValidationError("[readout] adjacency entries look like 0-2");
                cfg.readout.adjacency.emplace_back(std::stoi(tok.substr(0, dash)),
                                                   std::stoi(tok.substr(dash + 1)));
            }
        });
        r.get("mc_samples",
              [&](const std::string& v) { cfg.readout.mc_samples = std::stoi(v); });
        r.get("seed", [&](const std::string& v) { cfg.readout.seed = std::stoull(v); });
        r.get("matrix_file", [&](const std::string& v) { cfg.readout.matrix_file = v; });
        r.get("counts_file", [&](const std::string& v) { cfg.readout.counts_file = v; });
    }
    {
        auto r = reader("output");
        r.get("directory", [&](const std::string& v) { cfg.output.directory = v; });
        r.get("formats",
              [&](const std::string& v) { cfg.output.formats = detail::split(v, ','); });
    }
    cfg.validate();
    return cfg;
}

// Resolve the configured pair string against a crystal: four-ion label pairs
// ("L,R"), explicit indices ("0,2"), or "center" (ion nearest the centroid
// plus its nearest neighbor).
inline std::array<int, 2> resolve_pair(const std::string& pair, const IonCrystal& crystal) {
    if (pair == "center") {
        int center = 0;
        double best = 1e300;
        for (int i = 0; i < crystal.n_ions(); ++i) {
            const double d = crystal.positions.row(i).norm();
            if (d < best) {
                best = d;
                center = i;
            }
        }
        int neighbor = -1;
        best = 1e300;
        for (int i = 0; i < crystal.n_ions(); ++i) {
            if (i == center) continue;
            const double d = (crystal.positions.row(i) - crystal.positions.row(center)).norm();
            if (d < best) {
                best = d;
                neighbor = i;
            }
        }
        if (neighbor < 0) throw ValidationError("pair 'center' needs at least two ions");
        return {center, neighbor};
    }
    const auto parts = detail::split(pair, ',');
    if (parts.size() != 2) throw ValidationError("[gate] pair must name two ions");
    auto resolve_one = [&](const std::string& tok) {
        if (tok == "L" || tok == "R" || tok == "U" || tok == "D")
            return crystal.label_to_index(tok);
        const int idx = std::stoi(tok);
        if (idx < 0 || idx >= crystal.n_ions())
            throw ValidationError("[gate] pair index " + tok + " out of range");
        return idx;
    };
    const int a = resolve_one(parts[0]), b = resolve_one(parts[1]);
    if (a == b) throw ValidationError("[gate] pair must name two distinct ions");
    return {a, b};
}

}  // namespace ms2d
