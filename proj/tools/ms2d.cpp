// ms2d command-line front end: crystal structure, gate design, detuning
// scans, error budgets, micromotion compensation, and readout correction,
// driven by a sectioned config file.

#include <CLI11.hpp>
#include <cstdio>
#include <cstdlib>

#include "ms2d/cli.hpp"

namespace {

ms2d::RunConfig load_config(const std::string& path) {
    if (path.empty()) return ms2d::RunConfig{};
    return ms2d::parse_config(ms2d::read_text_file(path));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Individually addressed entangling gates on 2D ion crystals"};
    app.require_subcommand(1);

    std::string config_path;
    ms2d::CliOverrides ov;
    std::uint64_t seed_flag = 0;
    std::string out_flag;
    bool show_schema = false;

    app.add_option("--config", config_path, "run configuration file (ini or json)");
    auto* seed_opt = app.add_option("--seed", seed_flag, "override every configured seed");
    auto* out_opt = app.add_option("--out", out_flag, "output directory");
    app.add_option("--jobs", ov.jobs, "worker threads for scans")->default_val(1);
    app.add_flag("--schema", show_schema, "print the output file formats and exit");

    struct Cmd {
        const char* name;
        const char* help;
        std::vector<std::string> (*fn)(const ms2d::RunConfig&, const ms2d::CliOverrides&);
    };
    const Cmd cmds[] = {
        {"crystal", "equilibrium positions and transverse mode tables", ms2d::cmd_crystal},
        {"design", "build a gate sequence and its trajectory report", ms2d::cmd_design},
        {"scan", "optimized gate infidelity vs laser detuning", ms2d::cmd_scan},
        {"errors", "channel-by-channel gate error budget", ms2d::cmd_errors},
        {"micromotion", "Rabi reduction curve and intensity recalibration",
         ms2d::cmd_micromotion},
        {"readout-correct", "maximum-likelihood readout correction", ms2d::cmd_readout_correct},
    };
    const Cmd* selected = nullptr;
    for (const auto& c : cmds) {
        CLI::App* sub = app.add_subcommand(c.name, c.help);
        sub->fallthrough();  // global flags may follow the subcommand
        sub->callback([&selected, &c] { selected = &c; });
    }

    // readout-correct convenience flags mirroring the config keys.
    std::string matrix_file, counts_file;
    int mc_samples = -1;
    CLI::App* rc = app.get_subcommand("readout-correct");
    rc->add_option("--matrix", matrix_file, "confusion matrix CSV");
    rc->add_option("--counts", counts_file, "measurement record CSV");
    rc->add_option("--mc-samples", mc_samples, "Monte Carlo samples for error bars");

    CLI11_PARSE(app, argc, argv);

    if (show_schema) {
        std::fputs(ms2d::schema_text().c_str(), stdout);
        return 0;
    }

    try {
        ms2d::RunConfig cfg = load_config(config_path);
        if (seed_opt->count()) ov.seed = seed_flag;
        if (out_opt->count())
            ov.out_dir = out_flag;
        else if (const char* env = std::getenv("MS2D_OUT"))
            ov.out_dir = std::string(env);
        if (!matrix_file.empty()) cfg.readout.matrix_file = matrix_file;
        if (!counts_file.empty()) cfg.readout.counts_file = counts_file;
        if (mc_samples > 0) cfg.readout.mc_samples = mc_samples;

        const auto written = selected->fn(cfg, ov);
        for (const auto& path : written) std::printf("%s\n", path.c_str());
        return 0;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
