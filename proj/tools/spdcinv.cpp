#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include <spdcinv/commands.hpp>
#include <spdcinv/validate.hpp>

#ifndef SPDCINV_SCENARIO_DIR
#define SPDCINV_SCENARIO_DIR "scenarios"
#endif

int main(int argc, char** argv) {
    using namespace spdcinv;
    CLI::App app{"SPDC forward model and inverse design"};
    app.require_subcommand(1);

    CommandOptions o;
    std::string config, checkpoint, out, log_level;
    std::uint64_t seed = 0;
    unsigned workers = 0;
    std::string scenario_dir = SPDCINV_SCENARIO_DIR;

    auto common = [&](CLI::App* sub, bool needs_config) {
        auto* c = sub->add_option("--config", config, "run configuration (JSON)");
        if (needs_config) c->check(CLI::ExistingFile);
        sub->add_option("--seed", seed, "master seed (overrides the config)");
        sub->add_option("--out", out, "output directory");
        sub->add_option("--workers", workers, "worker threads (0: SPDCINV_WORKERS or hardware)");
        sub->add_option("--log-level", log_level, "debug, info, warn, error or quiet");
    };

    auto* fwd = app.add_subcommand("forward", "propagate and export coincidences");
    common(fwd, true);
    fwd->add_option("--checkpoint", checkpoint, "take parameters from a checkpoint")->check(CLI::ExistingFile);
    fwd->add_option("--pump-override", o.pump_overrides, "replace the pump, e.g. 'LG(1,0)+1:120*LG(-1,0)'");

    auto* trn = app.add_subcommand("train", "inverse design against the configured target");
    common(trn, true);
    trn->add_option("--resume", checkpoint, "continue from a checkpoint")->check(CLI::ExistingFile);
    trn->add_option("--pump-override", o.pump_overrides, "extra pump for the final inference");

    auto* tom = app.add_subcommand("tomography", "reconstruct the two-photon density matrix");
    common(tom, true);
    tom->add_option("--checkpoint", checkpoint, "take parameters from a checkpoint")->check(CLI::ExistingFile);
    tom->add_option("--pump-override", o.pump_overrides, "replace the pump");

    auto* val = app.add_subcommand("validate", "run the acceptance suite");
    common(val, false);
    val->add_option("--scenarios", scenario_dir, "directory of scenario presets");

    auto* exp = app.add_subcommand("export-crystal", "binary poling voxels from a checkpoint");
    common(exp, true);
    exp->add_option("--checkpoint", checkpoint, "checkpoint with crystal parameters")->check(CLI::ExistingFile);
    exp->add_option("--unit-cells", o.unit_cells, "poling periods along z");
    exp->add_option("--samples-per-period", o.samples_per_period, "voxels per poling period");
    exp->add_option("--threshold", o.threshold, "unpoled below this fraction of the peak envelope");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (!log_level.empty()) {
            Log::instance().set_level(parse_log_level(log_level));
            o.log_level = log_level;
        }
        o.config = config;
        o.checkpoint = checkpoint;
        o.out = out;
        for (auto* sub : {fwd, trn, tom, val, exp})
            if (sub->count("--seed")) o.seed = seed;
        if (workers) o.workers = workers;

        if (fwd->parsed()) return cmd_forward(o);
        if (trn->parsed()) return cmd_train(o);
        if (tom->parsed()) return cmd_tomography(o);
        if (exp->parsed()) return cmd_export_crystal(o);
        if (val->parsed()) return cmd_validate(o, scenario_dir);
    } catch (const Error& e) {
        std::fprintf(stderr, "spdcinv: %s\n", e.what());
        return e.exit_code();
    } catch (const std::exception& e) {
        std::fprintf(stderr, "spdcinv: %s\n", e.what());
        return 1;
    }
    return 1;
}
