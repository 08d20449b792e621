#pragma once

#include <atomic>
#include <filesystem>
#include <optional>
#include <thread>

#include "ms2d/config.hpp"
#include "ms2d/micromotion.hpp"
#include "ms2d/optimize.hpp"
#include "ms2d/report.hpp"

// Command implementations behind the ms2d executable.  Each command validates
// the full configuration, computes, then writes its report files and returns
// their paths.  All randomness is seeded from the config (or the --seed
// override), so identical inputs give byte-identical outputs.

namespace ms2d {

struct CliOverrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
    int jobs = 1;
};

namespace detail {

inline std::string out_path(const RunConfig& cfg, const CliOverrides& ov,
                            const std::string& name) {
    const std::string dir = ov.out_dir.value_or(cfg.output.directory);
    std::filesystem::create_directories(dir);
    return (std::filesystem::path(dir) / name).string();
}

inline bool wants(const RunConfig& cfg, const std::string& format) {
    return std::find(cfg.output.formats.begin(), cfg.output.formats.end(), format) !=
           cfg.output.formats.end();
}

struct CrystalBundle {
    IonCrystal crystal;
    ModeSpectrum spectrum;
};

inline CrystalBundle build_crystal(const RunConfig& cfg, const CliOverrides& ov) {
    const std::uint64_t seed = ov.seed.value_or(cfg.crystal.seed);
    CrystalBundle b{solve_equilibrium(cfg.trap.to_trap(), cfg.crystal.n_ions, seed), {}};
    b.spectrum = transverse_modes(b.crystal);
    return b;
}

inline PulseSequence design_from_config(const RunConfig& cfg, const CrystalBundle& b) {
    const auto pair = resolve_pair(cfg.gate.pair, b.crystal);
    PulseSequence seq;
    if (cfg.gate.rule == "LR")
        seq = design_two_segment(b.spectrum, pair, TwoSegmentRule::lr);
    else if (cfg.gate.rule == "UD")
        seq = design_two_segment(b.spectrum, pair, TwoSegmentRule::ud);
    else
        seq = design_alternating_diagonal(b.spectrum, pair, cfg.gate.gap_us * 1e-6);
    return scale_to_phase(seq, b.spectrum, pi / 4.0);
}

}  // namespace detail

inline std::vector<std::string> cmd_crystal(const RunConfig& cfg, const CliOverrides& ov) {
    cfg.validate();
    const auto b = detail::build_crystal(cfg, ov);
    std::vector<std::string> written;
    if (detail::wants(cfg, "csv")) {
        const auto pos = detail::out_path(cfg, ov, "positions.csv");
        write_text_file(pos, positions_csv(b.crystal));
        written.push_back(pos);
        const auto modes = detail::out_path(cfg, ov, "modes.csv");
        write_text_file(modes, modes_csv(b.spectrum));
        written.push_back(modes);
    }
    if (detail::wants(cfg, "json")) {
        const auto path = detail::out_path(cfg, ov, "modes.json");
        write_text_file(path, crystal_json(b.crystal, b.spectrum).dump(2) + "\n");
        written.push_back(path);
    }
    for (const auto& w : cfg.trap.to_trap().validate()) std::fprintf(stderr, "warning: %s\n", w.c_str());
    return written;
}

inline std::vector<std::string> cmd_design(const RunConfig& cfg, const CliOverrides& ov) {
    cfg.validate();
    const auto b = detail::build_crystal(cfg, ov);
    const auto seq = detail::design_from_config(cfg, b);
    const auto traj = trajectory(seq, b.spectrum, cfg.gate.samples_per_segment);
    const Eigen::VectorXd nbar =
        uniform_nbar(b.spectrum.n_modes(), cfg.gate.nbar);
    const double fid = coherent_fidelity(seq, b.spectrum, nbar);

    std::vector<std::string> written;
    const auto seq_path = detail::out_path(cfg, ov, "sequence.json");
    write_text_file(seq_path, sequence_to_json(seq).dump(2) + "\n");
    written.push_back(seq_path);
    if (detail::wants(cfg, "csv")) {
        const auto p1 = detail::out_path(cfg, ov, "sequence.csv");
        write_text_file(p1, sequence_csv(seq));
        written.push_back(p1);
        const auto p2 = detail::out_path(cfg, ov, "trajectory.csv");
        write_text_file(p2, trajectory_csv(traj));
        written.push_back(p2);
    }
    const auto report = detail::out_path(cfg, ov, "gate_report.json");
    write_text_file(report, observables_json(seq, traj, fid).dump(2) + "\n");
    written.push_back(report);
    return written;
}

inline std::vector<std::string> cmd_scan(const RunConfig& cfg, const CliOverrides& ov) {
    cfg.validate();
    if (cfg.gate.scan_points < 1)
        throw ValidationError("[gate] scan_points must be set for a detuning scan");
    const auto b = detail::build_crystal(cfg, ov);
    const auto pair = resolve_pair(cfg.gate.pair, b.crystal);
    const auto style = cfg.gate.style == "simultaneous" ? ModulationStyle::simultaneous
                                                        : ModulationStyle::alternating;
    const Eigen::VectorXd nbar = uniform_nbar(b.spectrum.n_modes(), cfg.gate.nbar);
    OptimizeOptions opt;
    opt.robustness_weight = cfg.gate.robustness_weight;

    std::vector<std::pair<double, double>> rows(cfg.gate.scan_points);
    std::atomic<int> next{0};
    auto worker = [&] {
        for (int i = next.fetch_add(1); i < cfg.gate.scan_points; i = next.fetch_add(1)) {
            const double f_mhz =
                cfg.gate.scan_points == 1
                    ? cfg.gate.scan_min_mhz
                    : cfg.gate.scan_min_mhz + (cfg.gate.scan_max_mhz - cfg.gate.scan_min_mhz) *
                                                  i / (cfg.gate.scan_points - 1);
            const double mu = mhz_to_angular(f_mhz);
            double infid = std::numeric_limits<double>::quiet_NaN();
            try {
                infid = optimize_amplitudes(b.spectrum, pair, cfg.gate.total_time_us * 1e-6,
                                            cfg.gate.n_seg, style, mu, nbar, opt)
                            .coherent_infidelity;
            } catch (const Error&) {
                // recorded as nan; the scan continues
            }
            rows[i] = {angular_to_hz(mu), infid};
        }
    };
    const int jobs = std::max(1, ov.jobs);
    std::vector<std::thread> pool;
    for (int j = 1; j < jobs; ++j) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();

    const auto path = detail::out_path(cfg, ov, "scan.csv");
    write_text_file(path, scan_csv(rows));
    return {path};
}

inline std::vector<std::string> cmd_errors(const RunConfig& cfg, const CliOverrides& ov) {
    cfg.validate();
    const auto b = detail::build_crystal(cfg, ov);
    const auto seq = detail::design_from_config(cfg, b);
    const auto noise = cfg.noise.to_model(b.spectrum.n_modes());
    SolverOptions opt;
    opt.phonon_cutoff = cfg.noise.phonon_cutoff;
    opt.active_modes = cfg.noise.active_modes;
    const auto budget = error_budget(seq, b.spectrum, noise, opt);

    std::vector<std::string> written;
    if (detail::wants(cfg, "json")) {
        const auto path = detail::out_path(cfg, ov, "budget.json");
        write_text_file(path, budget_json(budget).dump(2) + "\n");
        written.push_back(path);
    }
    if (detail::wants(cfg, "csv")) {
        const auto path = detail::out_path(cfg, ov, "budget.csv");
        write_text_file(path, budget_csv(budget));
        written.push_back(path);
    }
    return written;
}

inline std::vector<std::string> cmd_micromotion(const RunConfig& cfg, const CliOverrides& ov) {
    cfg.validate();
    const double waist = cfg.micromotion.waist_um * 1e-6;
    std::vector<std::string> written;
    const auto grid = detail::out_path(cfg, ov, "micromotion.csv");
    write_text_file(grid, rabi_reduction_csv(waist, cfg.micromotion.grid_max_a_over_r,
                                             cfg.micromotion.grid_points));
    written.push_back(grid);

    if (!cfg.micromotion.amplitudes_nm.empty()) {
        const auto b = detail::build_crystal(cfg, ov);
        const auto pair = resolve_pair(cfg.gate.pair, b.crystal);
        if (cfg.micromotion.amplitudes_nm.size() != 2)
            throw ValidationError("[micromotion] amplitudes_nm needs one value per pair ion");
        std::map<int, double> amps{{pair[0], cfg.micromotion.amplitudes_nm[0] * 1e-9},
                                   {pair[1], cfg.micromotion.amplitudes_nm[1] * 1e-9}};
        const auto report = detail::out_path(cfg, ov, "recalibration.json");
        write_text_file(report, recalibration_json(amps, waist).dump(2) + "\n");
        written.push_back(report);
        if (!cfg.micromotion.sequence_file.empty()) {
            auto seq = sequence_from_json(
                nlohmann::json::parse(read_text_file(cfg.micromotion.sequence_file)));
            seq = recalibrate_intensity(seq, amps, waist);
            const auto out = detail::out_path(cfg, ov, "recalibrated_sequence.json");
            write_text_file(out, sequence_to_json(seq).dump(2) + "\n");
            written.push_back(out);
        }
    }
    return written;
}

inline std::vector<std::string> cmd_readout_correct(const RunConfig& cfg,
                                                    const CliOverrides& ov) {
    cfg.validate();
    ConfusionMatrix cm;
    if (!cfg.readout.matrix_file.empty()) {
        cm = confusion_from_csv(read_text_file(cfg.readout.matrix_file));
    } else {
        cm = build_confusion(cfg.crystal.n_ions,
                             {cfg.readout.flip, cfg.readout.crosstalk, cfg.readout.adjacency});
    }
    std::vector<std::string> written;
    if (cfg.readout.counts_file.empty()) {
        // No measurement record: emit the (synthetic or loaded) matrix only.
        const auto path = detail::out_path(cfg, ov, "confusion.csv");
        write_text_file(path, confusion_csv(cm));
        written.push_back(path);
        return written;
    }
    const Eigen::VectorXd counts =
        counts_from_csv(read_text_file(cfg.readout.counts_file), cm.n_ions);
    auto est = mle_recover(counts, cm);
    est.std_errors = monte_carlo_errors(est, cm, est.shots, cfg.readout.mc_samples,
                                        ov.seed.value_or(cfg.readout.seed));
    const auto path = detail::out_path(cfg, ov, "estimate.json");
    write_text_file(path, estimate_json(est, cm.n_ions).dump(2) + "\n");
    written.push_back(path);
    return written;
}

}  // namespace ms2d
