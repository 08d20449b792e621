#pragma once

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ms2d/crystal.hpp"
#include "ms2d/dynamics.hpp"
#include "ms2d/micromotion.hpp"
#include "ms2d/noise.hpp"
#include "ms2d/readout.hpp"
#include "ms2d/sequence.hpp"

// File formats.  CSV files carry a single header row; JSON uses nlohmann with
// sorted keys.  Doubles are printed with "%.17g" so that identical runs are
// byte-identical and values round-trip exactly.

namespace ms2d {

inline std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open '" + path + "' for writing");
    out << content;
    if (!out) throw Error("failed writing '" + path + "'");
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// ---- crystal ----

inline std::string positions_csv(const IonCrystal& crystal) {
    std::string out = "ion,x,y,z\n";
    for (int i = 0; i < crystal.n_ions(); ++i)
        out += std::to_string(i) + "," + fmt(crystal.positions(i, 0)) + "," +
               fmt(crystal.positions(i, 1)) + "," + fmt(crystal.positions(i, 2)) + "\n";
    return out;
}

inline std::string modes_csv(const ModeSpectrum& spec) {
    const int n = static_cast<int>(spec.mode_matrix.rows());
    std::string out = "mode,frequency_MHz";
    for (int i = 0; i < n; ++i) out += ",b" + std::to_string(i + 1);
    out += ",eta\n";
    for (int k = 0; k < spec.n_modes(); ++k) {
        out += std::to_string(k + 1) + "," + fmt(angular_to_mhz(spec.frequencies(k)));
        for (int i = 0; i < n; ++i) out += "," + fmt(spec.mode_matrix(i, k));
        out += "," + fmt(spec.lamb_dicke(k)) + "\n";
    }
    return out;
}

inline nlohmann::json crystal_json(const IonCrystal& crystal, const ModeSpectrum& spec) {
    nlohmann::json j;
    j["trap"] = {{"omega_x_mhz", angular_to_mhz(crystal.trap.omega_x)},
                 {"omega_y_mhz", angular_to_mhz(crystal.trap.omega_y)},
                 {"omega_z_mhz", angular_to_mhz(crystal.trap.omega_z)},
                 {"ion_mass_kg", crystal.trap.ion_mass},
                 {"mathieu_q", crystal.trap.mathieu_q}};
    j["ions"] = nlohmann::json::array();
    for (int i = 0; i < crystal.n_ions(); ++i)
        j["ions"].push_back({{"index", i},
                             {"x", crystal.positions(i, 0)},
                             {"y", crystal.positions(i, 1)},
                             {"z", crystal.positions(i, 2)}});
    j["modes"] = nlohmann::json::array();
    for (int k = 0; k < spec.n_modes(); ++k) {
        std::vector<double> b(spec.mode_matrix.rows());
        for (int i = 0; i < spec.mode_matrix.rows(); ++i) b[i] = spec.mode_matrix(i, k);
        j["modes"].push_back({{"index", k + 1},
                              {"frequency_MHz", angular_to_mhz(spec.frequencies(k))},
                              {"b", b},
                              {"eta", spec.lamb_dicke(k)}});
    }
    return j;
}

// ---- sequences ----

inline nlohmann::json sequence_to_json(const PulseSequence& seq) {
    nlohmann::json j;
    j["detuning_hz"] = angular_to_hz(seq.detuning);
    j["pair"] = {seq.pair[0], seq.pair[1]};
    j["segments"] = nlohmann::json::array();
    for (const auto& s : seq.segments)
        j["segments"].push_back({{"ion", s.target_ion},
                                 {"start_us", s.start_time * 1e6},
                                 {"duration_us", s.duration * 1e6},
                                 {"rabi_hz", angular_to_hz(s.rabi_rate)},
                                 {"motional_phase_rad", s.motional_phase},
                                 {"spin_phase_rad", s.spin_phase}});
    return j;
}

inline PulseSequence sequence_from_json(const nlohmann::json& j) {
    PulseSequence seq;
    seq.detuning = hz_to_angular(j.at("detuning_hz").get<double>());
    seq.pair = {j.at("pair").at(0).get<int>(), j.at("pair").at(1).get<int>()};
    for (const auto& js : j.at("segments")) {
        Segment s;
        s.target_ion = js.at("ion").get<int>();
        s.start_time = js.at("start_us").get<double>() * 1e-6;
        s.duration = js.at("duration_us").get<double>() * 1e-6;
        s.rabi_rate = hz_to_angular(js.at("rabi_hz").get<double>());
        s.motional_phase = js.at("motional_phase_rad").get<double>();
        s.spin_phase = js.at("spin_phase_rad").get<double>();
        seq.segments.push_back(s);
    }
    seq.sort_segments();
    double end = 0.0, gap = 0.0;
    for (std::size_t i = 0; i < seq.segments.size(); ++i) {
        end = std::max(end, seq.segments[i].end_time());
        if (i > 0)
            gap = std::max(gap, seq.segments[i].start_time - seq.segments[i - 1].end_time());
    }
    seq.total_time = end;
    seq.gap = std::max(0.0, gap);
    seq.style = SequenceStyle::two_segment;
    return seq;
}

inline std::string sequence_csv(const PulseSequence& seq) {
    std::string out = "segment,ion,start_us,duration_us,rabi_hz,motional_phase_rad,spin_phase_rad\n";
    for (std::size_t i = 0; i < seq.segments.size(); ++i) {
        const auto& s = seq.segments[i];
        out += std::to_string(i) + "," + std::to_string(s.target_ion) + "," +
               fmt(s.start_time * 1e6) + "," + fmt(s.duration * 1e6) + "," +
               fmt(angular_to_hz(s.rabi_rate)) + "," + fmt(s.motional_phase) + "," +
               fmt(s.spin_phase) + "\n";
    }
    return out;
}

// ---- trajectories & observables ----

inline std::string trajectory_csv(const GateTrajectory& traj) {
    std::string out = "time_us,mode_index,re_alpha,im_alpha,segment_index\n";
    for (int s = 0; s < traj.times.size(); ++s)
        for (int k = 0; k < traj.alpha_sum.rows(); ++k)
            out += fmt(traj.times(s) * 1e6) + "," + std::to_string(k + 1) + "," +
                   fmt(traj.alpha_sum(k, s).real()) + "," + fmt(traj.alpha_sum(k, s).imag()) +
                   "," + std::to_string(traj.segment_index[s]) + "\n";
    return out;
}

inline nlohmann::json observables_json(const PulseSequence& seq, const GateTrajectory& traj,
                                       double coherent_fid) {
    nlohmann::json j;
    j["theta_rad"] = traj.two_qubit_phase;
    j["total_time_us"] = seq.total_time * 1e6;
    j["coherent_fidelity"] = coherent_fid;
    j["final_displacements"] = nlohmann::json::array();
    for (int ion : seq.pair)
        for (int k = 0; k < traj.final_displacements.cols(); ++k)
            j["final_displacements"].push_back(
                {{"ion", ion},
                 {"mode", k + 1},
                 {"re", traj.final_displacements(ion, k).real()},
                 {"im", traj.final_displacements(ion, k).imag()}});
    double worst = 0.0;
    for (int k = 0; k < traj.alpha_sum.rows(); ++k)
        worst = std::max(worst, std::abs(traj.alpha_sum(k, traj.times.size() - 1)));
    j["max_closure_residual"] = worst;
    return j;
}

// ---- scans & budgets ----

inline std::string scan_csv(const std::vector<std::pair<double, double>>& rows) {
    std::string out = "detuning_hz,optimized_infidelity\n";
    for (const auto& [hz, infid] : rows) {
        out += fmt(hz) + ",";
        out += std::isnan(infid) ? "nan" : fmt(infid);
        out += "\n";
    }
    return out;
}

inline std::string budget_csv(const ErrorBudget& budget) {
    std::string out = "channel,infidelity\n";
    for (const auto& [name, value] : budget.contributions) out += name + "," + fmt(value) + "\n";
    out += "total," + fmt(budget.total) + "\n";
    return out;
}

inline nlohmann::json budget_json(const ErrorBudget& budget) {
    nlohmann::json j;
    for (const auto& [name, value] : budget.contributions) j["contributions"][name] = value;
    j["total"] = budget.total;
    return j;
}

// ---- micromotion ----

inline std::string rabi_reduction_csv(double waist, double max_a_over_r, int points) {
    std::string out = "a_over_r,r\n";
    for (int i = 0; i < points; ++i) {
        const double x = max_a_over_r * i / (points - 1);
        out += fmt(x) + "," + fmt(rabi_reduction(x * waist, waist)) + "\n";
    }
    return out;
}

inline nlohmann::json recalibration_json(const std::map<int, double>& amplitudes,
                                         double waist) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& [ion, amp] : amplitudes) {
        const double r = rabi_reduction(amp, waist);
        j.push_back({{"ion", ion},
                     {"A_nm", amp * 1e9},
                     {"r", r},
                     {"intensity_factor", 1.0 / r}});
    }
    return j;
}

// ---- readout ----

inline std::string confusion_csv(const ConfusionMatrix& cm) {
    std::string out;
    for (int c = 0; c < cm.dim(); ++c)
        out += (c ? "," : "") + basis_bitstring(c, cm.n_ions);
    out += "\n";
    for (int r = 0; r < cm.dim(); ++r) {
        for (int c = 0; c < cm.dim(); ++c) out += (c ? "," : "") + fmt(cm.matrix(r, c));
        out += "\n";
    }
    return out;
}

inline ConfusionMatrix confusion_from_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw ValidationError("empty confusion matrix file");
    const int dim = 1 + static_cast<int>(std::count(line.begin(), line.end(), ','));
    int n_ions = 0;
    while ((1 << n_ions) < dim) ++n_ions;
    if ((1 << n_ions) != dim) throw ValidationError("confusion matrix is not 2^N wide");
    Eigen::MatrixXd m(dim, dim);
    for (int r = 0; r < dim; ++r) {
        if (!std::getline(in, line)) throw ValidationError("confusion matrix file truncated");
        std::istringstream row(line);
        std::string cell;
        for (int c = 0; c < dim; ++c) {
            if (!std::getline(row, cell, ',')) throw ValidationError("short confusion row");
            m(r, c) = std::stod(cell);
        }
    }
    ConfusionMatrix cm;
    cm.n_ions = n_ions;
    cm.matrix = m;
    cm.validate();
    return cm;
}

inline std::string counts_csv(const Eigen::VectorXd& counts, int n_ions) {
    std::string out = "bitstring,count\n";
    for (int i = 0; i < counts.size(); ++i)
        out += basis_bitstring(i, n_ions) + "," + fmt(counts(i)) + "\n";
    return out;
}

inline Eigen::VectorXd counts_from_csv(const std::string& text, int n_ions) {
    std::istringstream in(text);
    std::string line;
    std::getline(in, line);  // header
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(1 << n_ions);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) throw ValidationError("bad counts row: " + line);
        const std::string bits = line.substr(0, comma);
        if (static_cast<int>(bits.size()) != n_ions)
            throw ValidationError("bitstring '" + bits + "' does not match the ion count");
        int idx = 0;
        for (int i = 0; i < n_ions; ++i) {
            if (bits[i] == '1')
                idx |= 1 << i;
            else if (bits[i] != '0')
                throw ValidationError("bad bitstring '" + bits + "'");
        }
        counts(idx) += std::stod(line.substr(comma + 1));
    }
    return counts;
}

inline nlohmann::json estimate_json(const PopulationEstimate& est, int n_ions) {
    nlohmann::json j;
    j["shots"] = est.shots;
    j["log_likelihood"] = est.log_likelihood;
    j["basis"] = nlohmann::json::array();
    j["probabilities"] = nlohmann::json::array();
    j["std_errors"] = nlohmann::json::array();
    for (int i = 0; i < est.probabilities.size(); ++i) {
        j["basis"].push_back(basis_bitstring(i, n_ions));
        j["probabilities"].push_back(est.probabilities(i));
        j["std_errors"].push_back(est.std_errors(i));
    }
    return j;
}

// ---- schema descriptions (--schema) ----

inline std::string schema_text() {
    return R"(File formats (all CSV files carry one header row; doubles use %.17g):

positions.csv     ion,x,y,z                      -- equilibrium positions, meters
modes.csv         mode,frequency_MHz,b1..bN,eta  -- transverse modes, descending;
                                                    mode 1 is the COM mode
modes.json        {trap, ions:[{index,x,y,z}], modes:[{index,frequency_MHz,b,eta}]}
sequence.json     {detuning_hz, pair:[i,j], segments:[{ion,start_us,duration_us,
                   rabi_hz,motional_phase_rad,spin_phase_rad}]}
sequence.csv      segment,ion,start_us,duration_us,rabi_hz,motional_phase_rad,
                   spin_phase_rad
trajectory.csv    time_us,mode_index,re_alpha,im_alpha,segment_index
                   (alpha summed over the pair ions: the |++> branch)
gate_report.json  {theta_rad,total_time_us,coherent_fidelity,max_closure_residual,
                   final_displacements:[{ion,mode,re,im}]}
scan.csv          detuning_hz,optimized_infidelity   (nan for failed points)
budget.csv        channel,infidelity                 (plus a total row)
budget.json       {contributions:{...}, total}
micromotion.csv   a_over_r,r
recalibration.json [{ion,A_nm,r,intensity_factor}]
confusion.csv     2^N x 2^N column-stochastic matrix; header row lists the
                   prepared-state bitstrings; rows are observed outcomes.
                   Bitstrings are little-endian over ion labels: character i is
                   ion i (L,R,U,D -> bits 0..3 for the four-ion crystal).
counts.csv        bitstring,count
estimate.json     {basis, probabilities, std_errors, shots, log_likelihood}
)";
}

}  // namespace ms2d
