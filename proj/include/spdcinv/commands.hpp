#pragma once

#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "config.hpp"
#include "io.hpp"
#include "log.hpp"
#include "workflow.hpp"

namespace spdcinv {

struct CommandOptions {
    fs::path config;
    fs::path checkpoint;
    fs::path out;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> workers;
    std::optional<std::string> log_level;  // overrides the config
    std::vector<std::string> pump_overrides;
    long unit_cells = 3;
    long samples_per_period = 64;
    double threshold = 0.05;
};

inline LogLevel parse_log_level(const std::string& s) {
    if (s == "debug") return LogLevel::debug;
    if (s == "info") return LogLevel::info;
    if (s == "warn") return LogLevel::warn;
    if (s == "error") return LogLevel::error;
    if (s == "quiet") return LogLevel::quiet;
    throw ConfigError("log_level: must be debug, info, warn, error or quiet");
}

/// Config plus optional starting state, resolved from --config / --checkpoint.
struct LoadedRun {
    RunConfig cfg;
    std::optional<Checkpoint> checkpoint;
};

inline LoadedRun load_run(const CommandOptions& o) {
    LoadedRun r;
    if (!o.checkpoint.empty()) {
        r.checkpoint = load_checkpoint(o.checkpoint);
        r.cfg = o.config.empty() ? r.checkpoint->config : load_config(o.config);
    } else if (!o.config.empty()) {
        r.cfg = load_config(o.config);
    } else {
        throw ConfigError("either --config or --checkpoint is required");
    }
    if (o.seed) r.cfg.seed = *o.seed;
    if (o.workers) r.cfg.workers = *o.workers;
    Log::instance().set_level(parse_log_level(o.log_level.value_or(r.cfg.log_level)));
    validate_config(r.cfg);
    return r;
}

inline fs::path output_root(const CommandOptions& o, const RunConfig& cfg, const std::string& command) {
    return o.out.empty() ? fs::path(cfg.output_dir) / command : o.out;
}

// Artifact writers ---------------------------------------------------------------

inline void write_coincidences(RunDirectory& dir, const std::string& prefix, const CoincidenceMatrix& m) {
    dir.write(prefix + "g2.csv", coincidence_csv(m), "coincidence matrix");
    dir.write(prefix + "g2.json", dump_json(coincidence_json(m)), "coincidence matrix");
    dir.write(prefix + "g2.pgm", heatmap_pgm(m.values), "coincidence heatmap");
}

inline void write_density(RunDirectory& dir, const std::string& prefix, const DensityMatrix& d,
                          const std::optional<double>& td) {
    const RMatrix re = d.rho.real(), im = d.rho.imag();
    dir.write(prefix + "rho_re.csv", matrix_csv(d.labels, d.labels, re, "rho"), "density matrix, real part");
    dir.write(prefix + "rho_im.csv", matrix_csv(d.labels, d.labels, im, "rho"), "density matrix, imaginary part");
    dir.write(prefix + "rho.json", dump_json(density_json(d, td)), "density matrix");
    const double scale = std::max(d.rho.cwiseAbs().maxCoeff(), 1e-300);
    dir.write(prefix + "rho_re.pgm", signed_heatmap_pgm(re, scale), "density heatmap, real part");
    dir.write(prefix + "rho_im.pgm", signed_heatmap_pgm(im, scale), "density heatmap, imaginary part");
}

inline json report_json(const EvalReport& r) {
    json j = json::object();
    if (r.loss) j["loss"] = *r.loss;
    if (r.trace_distance) j["trace_distance"] = *r.trace_distance;
    j["clamped_mass"] = r.g2.clamped_mass;
    return j;
}

inline void write_report(RunDirectory& dir, const std::string& prefix, const EvalReport& r) {
    write_coincidences(dir, prefix, r.g2);
    if (r.rho) write_density(dir, prefix, *r.rho, r.trace_distance);
}

inline std::string checkpoint_name(int iteration) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "checkpoint_%05d.json", iteration);
    return buf;
}

inline json waists_json(const ParamVector& p) {
    return {{"pump", p.pump_waists}, {"crystal", p.crystal_waists}};
}

/// Runs the learned (or configured) pump plus every override through the
/// evaluation ensemble and writes the results under `prefix`.
inline json write_inference(RunDirectory& dir, const std::string& prefix, const Scenario& sc, const ParamVector& theta,
                            const std::vector<std::string>& overrides) {
    json notes;
    const auto base = sc.evaluate(theta);
    write_report(dir, prefix, base);
    notes["final"] = report_json(base);
    json ov = json::array();
    for (std::size_t k = 0; k < overrides.size(); ++k) {
        const auto pump = sc.override_pump(overrides[k], theta);
        const auto r = sc.evaluate(theta, &pump);
        const std::string p = prefix + "override" + std::to_string(k) + "_";
        write_report(dir, p, r);
        json e = report_json(r);
        e["pump"] = overrides[k];
        e["prefix"] = p;
        ov.push_back(e);
    }
    if (!overrides.empty()) notes["overrides"] = ov;
    return notes;
}

/// Training loop with periodic and final checkpoints.
inline TrainState train_with_checkpoints(RunDirectory& dir, const std::string& prefix, const Scenario& sc,
                                         TrainState state, const OptimizerSettings& opt) {
    const auto& cfg = sc.config();
    TrainState last = state;
    try {
        state = sc.train(std::move(state), opt, [&](const TrainState& s, const GradientResult& r) {
            last = s;
            log_info(prefix + "epoch " + std::to_string(s.iteration) + " loss " + format_double(r.loss));
            if (s.iteration % cfg.checkpoint_every == 0)
                dir.write(prefix + "checkpoints/" + checkpoint_name(s.iteration), dump_json(checkpoint_json(cfg, s)),
                          "checkpoint");
        });
    } catch (const NumericalError&) {
        dir.write(prefix + "checkpoints/last.json", dump_json(checkpoint_json(cfg, last)), "last good checkpoint");
        dir.write(prefix + "loss.csv", loss_curve_csv(last.loss_history), "loss curve");
        throw;
    }
    dir.write(prefix + "loss.csv", loss_curve_csv(state.loss_history), "loss curve");
    dir.write(prefix + "checkpoints/last.json", dump_json(checkpoint_json(cfg, state)), "last checkpoint");
    TrainState best = state;
    best.theta = state.best_theta;
    dir.write(prefix + "checkpoints/best.json", dump_json(checkpoint_json(cfg, best)), "best checkpoint");
    return state;
}

/// Wraps a command body so failures still produce a manifest.
template <class Body>
int run_command(RunDirectory& dir, Body&& body) {
    try {
        body();
        dir.finish("ok");
        return 0;
    } catch (const NormalizationError& e) {
        dir.finish("no_coincidences", e.what());
        throw;
    } catch (const NumericalError& e) {
        dir.finish("numerical_error", e.what());
        throw;
    } catch (const Error& e) {
        dir.finish("error", e.what());
        throw;
    }
}

// Commands -----------------------------------------------------------------------

inline int cmd_forward(const CommandOptions& o) {
    const auto run = load_run(o);
    const Scenario sc(run.cfg);
    RunDirectory dir(output_root(o, run.cfg, "forward"), "forward", run.cfg);
    return run_command(dir, [&] {
        const auto theta = run.checkpoint ? run.checkpoint->state.theta : sc.initial_params();
        dir.write("params.json", dump_json(params_json(theta)), "parameters");
        std::optional<PumpProfile> pump;
        if (o.pump_overrides.size() > 1) throw ConfigError("forward: at most one --pump-override");
        if (!o.pump_overrides.empty()) pump = sc.override_pump(o.pump_overrides.front(), theta);
        const auto r = sc.evaluate(theta, pump ? &*pump : nullptr);
        write_report(dir, "", r);
        dir.note("evaluation", report_json(r));
        if (pump) dir.note("pump_override", o.pump_overrides.front());
    });
}

inline int cmd_tomography(const CommandOptions& o) {
    const auto run = load_run(o);
    const Scenario sc(run.cfg);
    if (!sc.tomography().dimension)
        throw ConfigError("tomography: no qudit subspace configured (set tomography or a density target)");
    RunDirectory dir(output_root(o, run.cfg, "tomography"), "tomography", run.cfg);
    return run_command(dir, [&] {
        const auto theta = run.checkpoint ? run.checkpoint->state.theta : sc.initial_params();
        std::optional<PumpProfile> pump;
        if (o.pump_overrides.size() > 1) throw ConfigError("tomography: at most one --pump-override");
        if (!o.pump_overrides.empty()) pump = sc.override_pump(o.pump_overrides.front(), theta);
        const auto r = sc.evaluate(theta, pump ? &*pump : nullptr);
        write_density(dir, "", *r.rho, r.trace_distance);
        json n = report_json(r);
        n["min_eigenvalue_raw"] = r.rho->min_eigenvalue_raw;
        n["clipped_mass"] = r.rho->clipped_mass;
        dir.note("tomography", n);
    });
}

inline int cmd_train(const CommandOptions& o) {
    const auto run = load_run(o);
    const Scenario sc(run.cfg);
    const auto& cfg = run.cfg;
    sc.objective();  // a target is required
    RunDirectory dir(output_root(o, cfg, "train"), "train", cfg);
    auto overrides = cfg.pump_overrides;
    overrides.insert(overrides.end(), o.pump_overrides.begin(), o.pump_overrides.end());

    return run_command(dir, [&] {
        switch (cfg.workflow.kind) {
        case WorkflowKind::standard: {
            TrainState state = run.checkpoint ? run.checkpoint->state
                                              : make_train_state(sc.initial_params(), cfg.seed);
            if (cfg.optimizer.epochs == 0 && !run.checkpoint) {
                dir.note("inference", write_inference(dir, "", sc, state.theta, overrides));
                dir.note("epochs", 0);
                return;
            }
            dir.note("initial_waists", waists_json(state.theta));
            state = train_with_checkpoints(dir, "", sc, std::move(state), cfg.optimizer);
            dir.note("epochs", state.iteration);
            dir.note("final_train_loss", state.loss_history.empty() ? json(nullptr) : json(state.loss_history.back()));
            dir.note("final_waists", waists_json(state.theta));
            dir.note("inference", write_inference(dir, "", sc, state.theta, overrides));
            return;
        }
        case WorkflowKind::joint_vs_single: {
            const auto arms = joint_vs_single(sc);
            json summary;
            for (const auto& a : arms) {
                const std::string p = a.name + "/";
                dir.write(p + "loss.csv", loss_curve_csv(a.state.loss_history), "loss curve");
                dir.write(p + "checkpoints/last.json", dump_json(checkpoint_json(cfg, a.state)), "last checkpoint");
                write_report(dir, p, a.eval);
                json e = report_json(a.eval);
                e["final_train_loss"] = a.state.loss_history.empty() ? json(nullptr) : json(a.state.loss_history.back());
                summary[a.name] = e;
            }
            dir.note("arms", summary);
            return;
        }
        case WorkflowKind::imperfection: {
            const auto r = imperfection_recovery(sc);
            dir.write("clean/checkpoints/last.json", dump_json(checkpoint_json(cfg, r.clean_state)), "clean checkpoint");
            dir.write("clean/loss.csv", loss_curve_csv(r.clean_state.loss_history), "loss curve");
            write_report(dir, "clean/", r.clean_eval);
            write_report(dir, "perturbed/", r.perturbed_eval);
            dir.write("perturbed/params.json", dump_json(params_json(r.perturbed)), "perturbed parameters");
            write_report(dir, "recovered/", r.recovered_eval);
            dir.write("recovered/loss.csv", loss_curve_csv(r.recovery_state.loss_history), "loss curve");
            dir.write("recovered/params.json", dump_json(params_json(r.recovered)), "recovered parameters");
            dir.note("losses", {{"clean", r.clean_loss}, {"perturbed", r.perturbed_loss}, {"recovered", r.recovered_loss}});
            dir.note("perturbation", {{"sigma", r.sigma_used},
                                      {"attempts", r.attempts},
                                      {"reached_loss_factor", r.reached_factor}});
            dir.note("pump_waist", {{"before", r.perturbed.pump_waists}, {"after", r.recovered.pump_waists}});
            return;
        }
        }
    });
}

inline int cmd_export_crystal(const CommandOptions& o) {
    if (o.checkpoint.empty() && o.config.empty()) throw ConfigError("export-crystal: --checkpoint is required");
    const auto run = load_run(o);
    RunDirectory dir(output_root(o, run.cfg, "export"), "export-crystal", run.cfg);
    return run_command(dir, [&] {
        const auto theta = run.checkpoint ? run.checkpoint->state.theta : initial_params(run.cfg);
        const auto f = forward_config(run.cfg, false);
        const auto crystal = synth_crystal(theta, f.grid, f.waves, f.medium);
        const auto vol = export_binary_poling(crystal, o.unit_cells, o.samples_per_period, o.threshold);
        dir.write("crystal.bin", voxel_bytes(vol), "poling voxels (int8)");
        dir.write("crystal.json", dump_json(voxel_header_json(vol, o.samples_per_period)), "voxel header");
        dir.write("crystal_xy.pgm", pgm_p2(voxel_xy_slice(vol, 0), vol.nx, vol.ny), "transverse slice");
        dir.write("crystal_xz.pgm", pgm_p2(voxel_xz_slice(vol), vol.nz, vol.nx), "longitudinal slice");
        dir.note("unpoled_pixels", vol.unpoled_count);
    });
}

} // namespace spdcinv
