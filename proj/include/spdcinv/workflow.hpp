#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "config.hpp"
#include "inverse.hpp"
#include "log.hpp"
#include "model.hpp"

namespace spdcinv {

struct EvalReport {
    CoincidenceMatrix g2;
    std::optional<DensityMatrix> rho;
    std::optional<double> loss;            // objective on the evaluation ensemble
    std::optional<double> trace_distance;  // physical rho vs density target
};

/// A configured experiment: training and evaluation models plus the objective.
class Scenario {
public:
    explicit Scenario(RunConfig cfg)
        : cfg_(std::move(cfg)), train_(forward_config(cfg_, false)), eval_(forward_config(cfg_, true)) {
        if (cfg_.target) objective_.emplace(*cfg_.target, train_.config().idler, train_.config().signal);
        tomo_ = cfg_.effective_tomography();
    }

    const RunConfig& config() const { return cfg_; }
    const ForwardModel& train_model() const { return train_; }
    const ForwardModel& eval_model() const { return eval_; }
    bool has_target() const { return objective_.has_value(); }
    const Objective& objective() const {
        if (!objective_) throw ConfigError("target: this command needs a target");
        return *objective_;
    }
    const TomographyConfig& tomography() const { return tomo_; }

    ParamVector initial_params() const { return spdcinv::initial_params(cfg_); }

    PumpProfile override_pump(const std::string& spec, const ParamVector& theta) const {
        const auto& f = eval_.config();
        return pump_from_terms(parse_modespec(spec, theta.pump_waists.front()), f.grid, f.waves, f.medium);
    }

    EvalReport evaluate(const ParamVector& theta, const PumpProfile* pump = nullptr) const {
        EvalReport r;
        const auto inf = infer(theta, eval_, pump, tomo_.dimension, tomo_.qudit_idler, tomo_.qudit_signal);
        r.g2 = inf.coincidences;
        r.rho = inf.density;
        if (r.rho) {
            const auto& f = eval_.config();
            r.rho->labels.clear();
            for (auto a : tomo_.qudit_idler)
                for (auto b : tomo_.qudit_signal) r.rho->labels.push_back(f.idler[a].label() + "|" + f.signal[b].label());
        }
        if (objective_) r.loss = (*objective_)(inf.eval.corr, nullptr);
        if (r.rho && cfg_.target && cfg_.target->kind == TargetKind::density_matrix &&
            cfg_.target->dimension == r.rho->d)
            r.trace_distance = trace_distance(r.rho->rho, cfg_.target->density);
        return r;
    }

    /// Continues `state` until it has run `opt.epochs` iterations in total.
    TrainState train(TrainState state, OptimizerSettings opt, const EpochCallback& cb = {}) const {
        const int total = opt.epochs;
        opt.epochs = std::max(0, total - state.iteration);
        if (state.schedule_epochs <= 0) state.schedule_epochs = total;
        return spdcinv::train(std::move(state), train_, objective(), opt, cb);
    }

private:
    RunConfig cfg_;
    ForwardModel train_, eval_;
    std::optional<Objective> objective_;
    TomographyConfig tomo_;
};

// Joint versus single-sided learning ------------------------------------------

struct ArmResult {
    std::string name;
    ParamVector theta0;
    TrainState state;
    EvalReport eval;
};

/// Three runs from one seed and epoch budget: pump and crystal together, the
/// crystal under a fixed fundamental pump, and the pump with a uniform crystal.
inline std::vector<ArmResult> joint_vs_single(const Scenario& sc, const EpochCallback& cb = {}) {
    const auto base = sc.initial_params();
    const auto& cfg = sc.config();

    ParamVector fund = base;  // pump reduced to its fundamental mode
    for (std::size_t i = 0; i < fund.n_pump(); ++i) fund.pump_coeffs[i] = i == 0 ? cd{1.0, 0.0} : cd{};

    ParamVector joint = fund;
    joint.trainable_mask = make_mask(joint, MaskPreset::all);
    ParamVector crystal = fund;
    crystal.trainable_mask = make_mask(crystal, MaskPreset::crystal_only);
    ParamVector pump = base;
    pump.crystal_basis = ModeSet{};
    pump.crystal_coeffs.clear();
    pump.crystal_waists.clear();
    pump.trainable_mask = make_mask(pump, MaskPreset::pump_only);

    std::vector<ArmResult> out;
    for (auto& [name, theta] : std::vector<std::pair<std::string, ParamVector>>{
             {"joint", joint}, {"crystal_only", crystal}, {"pump_only", pump}}) {
        log_info("joint_vs_single: training arm " + name);
        ArmResult a;
        a.name = name;
        a.theta0 = theta;
        a.state = sc.train(make_train_state(theta, cfg.seed), cfg.optimizer, cb);
        a.eval = sc.evaluate(a.state.theta);
        out.push_back(std::move(a));
    }
    return out;
}

// Imperfection recovery ---------------------------------------------------------

struct ImperfectionResult {
    TrainState clean_state;
    ParamVector clean, perturbed, recovered;
    double clean_loss = 0, perturbed_loss = 0, recovered_loss = 0;
    double sigma_used = 0;
    int attempts = 0;
    bool reached_factor = false;
    TrainState recovery_state;
    EvalReport clean_eval, perturbed_eval, recovered_eval;
};

/// Learns the crystal, perturbs its coefficients until the evaluation loss
/// grows by the configured factor, then retrains only the pump waists.
inline ImperfectionResult imperfection_recovery(const Scenario& sc, const EpochCallback& cb = {}) {
    const auto& cfg = sc.config();
    const auto& pc = cfg.workflow.perturbation;
    ImperfectionResult r;
    r.clean_state = sc.train(make_train_state(sc.initial_params(), cfg.seed), cfg.optimizer, cb);
    r.clean = r.clean_state.theta;
    r.clean_eval = sc.evaluate(r.clean);
    r.clean_loss = *r.clean_eval.loss;

    double sigma = pc.sigma;
    for (r.attempts = 1; r.attempts <= pc.max_attempts; ++r.attempts, sigma *= pc.growth) {
        r.perturbed = perturb_crystal(r.clean, sigma, pc.mode, pc.seed);
        r.perturbed_eval = sc.evaluate(r.perturbed);
        r.perturbed_loss = *r.perturbed_eval.loss;
        r.sigma_used = sigma;
        if (r.perturbed_loss >= pc.min_loss_factor * r.clean_loss) {
            r.reached_factor = true;
            break;
        }
    }
    r.attempts = std::min(r.attempts, pc.max_attempts);

    ParamVector start = r.perturbed;
    start.trainable_mask = make_mask(start, MaskPreset::pump_waists_only);
    OptimizerSettings opt = cfg.optimizer;
    opt.epochs = cfg.workflow.recovery_epochs;
    opt.lr_waist = cfg.workflow.recovery_lr_waist;
    r.recovery_state = sc.train(make_train_state(start, cfg.seed), opt, cb);
    // lowest training loss seen, not the last iterate
    r.recovered = r.recovery_state.best_theta;
    r.recovered_eval = sc.evaluate(r.recovered);
    r.recovered_loss = *r.recovered_eval.loss;
    return r;
}

} // namespace spdcinv
