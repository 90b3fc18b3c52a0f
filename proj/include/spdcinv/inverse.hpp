#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "errors.hpp"
#include "log.hpp"
#include "medium.hpp"
#include "model.hpp"
#include "observables.hpp"
#include "rng.hpp"
#include "tomography.hpp"

namespace spdcinv {

enum class TargetKind { coincidence, density_matrix };

struct TargetSpec {
    TargetKind kind = TargetKind::coincidence;
    RMatrix coincidence;  // over the post-selected detection subspace
    CMatrix density;      // over the qudit subspace, idler-major
    int dimension = 0;    // qudit dimension for density targets
    std::vector<std::size_t> qudit_idler, qudit_signal;  // indices into the detection sets
    double w_kl = 1.0, w_l1 = 1.0, w_trace = 1.0;
    double kl_floor = 1e-7;

    void validate() const {
        if (w_kl < 0 || w_l1 < 0 || w_trace < 0) throw ConfigError("target: loss weights must be >= 0");
        if (kind == TargetKind::coincidence) {
            if (coincidence.size() == 0) throw ConfigError("target: empty coincidence matrix");
            if ((coincidence.array() < 0).any()) throw ConfigError("target: coincidence entries must be >= 0");
            if (std::abs(coincidence.sum() - 1.0) > 1e-9) throw ConfigError("target: coincidence matrix must sum to 1");
        } else {
            const int dd = dimension * dimension;
            if (density.rows() != dd || density.cols() != dd)
                throw ConfigError("target: density matrix must be d^2 x d^2");
            if ((density - density.adjoint()).cwiseAbs().maxCoeff() > 1e-9)
                throw ConfigError("target: density matrix must be Hermitian");
            if (std::abs(density.trace().real() - 1.0) > 1e-9) throw ConfigError("target: density matrix must have unit trace");
            if (qudit_idler.size() != static_cast<std::size_t>(dimension) ||
                qudit_signal.size() != static_cast<std::size_t>(dimension))
                throw ConfigError("target: qudit mode lists must have d entries");
        }
    }
};

namespace detail {

inline RMatrix floored(const RMatrix& p, double eps, std::vector<bool>* active = nullptr) {
    RMatrix q = p;
    if (active) active->assign(static_cast<std::size_t>(p.size()), true);
    for (Eigen::Index i = 0; i < q.size(); ++i)
        if (q.data()[i] < eps) {
            q.data()[i] = eps;
            if (active) (*active)[static_cast<std::size_t>(i)] = false;
        }
    return q / q.sum();
}

} // namespace detail

/// KL(p || q) after flooring both at eps and renormalizing.
inline double kl_divergence(const RMatrix& p, const RMatrix& q, double eps = 1e-7) {
    if (p.rows() != q.rows() || p.cols() != q.cols()) throw ShapeError("kl: shape mismatch");
    const RMatrix ps = detail::floored(p, eps), qs = detail::floored(q, eps);
    double s = 0;
    for (Eigen::Index i = 0; i < ps.size(); ++i) s += ps.data()[i] * std::log(ps.data()[i] / qs.data()[i]);
    return s;
}

inline double l1_distance(const RMatrix& a, const RMatrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError("l1: shape mismatch");
    return (a - b).cwiseAbs().sum();
}

/// Coincidence loss and its gradient with respect to the observed matrix.
inline double coincidence_loss(const RMatrix& observed, const TargetSpec& t, RMatrix* grad = nullptr) {
    if (observed.rows() != t.coincidence.rows() || observed.cols() != t.coincidence.cols())
        throw ShapeError("loss: observed " + std::to_string(observed.rows()) + "x" + std::to_string(observed.cols()) +
                         " vs target " + std::to_string(t.coincidence.rows()) + "x" + std::to_string(t.coincidence.cols()));
    const double kl = t.w_kl > 0 ? kl_divergence(t.coincidence, observed, t.kl_floor) : 0.0;
    const double l1 = t.w_l1 > 0 ? l1_distance(observed, t.coincidence) : 0.0;
    if (grad) {
        *grad = RMatrix::Zero(observed.rows(), observed.cols());
        if (t.w_kl > 0) {
            std::vector<bool> active;
            const RMatrix ps = detail::floored(t.coincidence, t.kl_floor);
            RMatrix qf = observed;
            for (Eigen::Index i = 0; i < qf.size(); ++i) qf.data()[i] = std::max(qf.data()[i], t.kl_floor);
            const double sq = qf.sum();
            detail::floored(observed, t.kl_floor, &active);
            // KL = sum p log p - sum p log(qf_k / sq)
            const double psum = ps.sum();
            for (Eigen::Index i = 0; i < qf.size(); ++i) {
                if (!active[static_cast<std::size_t>(i)]) continue;
                grad->data()[i] += t.w_kl * (-ps.data()[i] / qf.data()[i] + psum / sq);
            }
        }
        if (t.w_l1 > 0)
            for (Eigen::Index i = 0; i < observed.size(); ++i) {
                const double d = observed.data()[i] - t.coincidence.data()[i];
                grad->data()[i] += t.w_l1 * (d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0));
            }
    }
    return t.w_kl * kl + t.w_l1 * l1;
}

inline double density_loss(const CMatrix& rho, const TargetSpec& t) { return t.w_trace * trace_distance(rho, t.density); }

/// Tomographic reconstruction over the qudit subspace, with the pieces needed
/// to back-propagate a density-matrix loss.
struct TomographyPass {
    std::vector<std::vector<double>> raw;  // G2 over plan state pairs
    double total = 0;                      // G2 summed over computational pairs
    std::vector<std::vector<double>> prob;
    CMatrix rho_raw;
};

inline TomographyPass run_tomography(const CorrelationData& c, const TomographyOperator& op,
                                     const std::vector<std::size_t>& qi, const std::vector<std::size_t>& qs) {
    const auto eval = correlation_evaluator(c, qi, qs);
    const auto& st = op.plan.states;
    TomographyPass t;
    t.raw.assign(st.size(), std::vector<double>(st.size(), 0.0));
    for (std::size_t k = 0; k < st.size(); ++k)
        for (std::size_t l = 0; l < st.size(); ++l) t.raw[k][l] = eval(st[k].vec, st[l].vec);
    for (int a = 0; a < op.d; ++a)
        for (int b = 0; b < op.d; ++b)
            t.total += eval(Eigen::VectorXcd::Unit(op.d, a), Eigen::VectorXcd::Unit(op.d, b));
    if (!(t.total > 0) || !std::isfinite(t.total))
        throw NormalizationError("no coincidences: tomography subspace carries no coincidence mass");
    t.prob = t.raw;
    for (auto& row : t.prob)
        for (auto& v : row) v /= t.total;
    t.rho_raw = op.apply(t.prob);
    return t;
}

/// Builds the loss over correlation data for a target.
class Objective {
public:
    Objective(TargetSpec target, const ModeSet& idler, const ModeSet& signal)
        : t_(std::move(target)), sel_i_(idler.selected()), sel_s_(signal.selected()),
          n_i_(idler.size()), n_s_(signal.size()) {
        t_.validate();
        if (t_.kind == TargetKind::coincidence) {
            if (t_.coincidence.rows() != static_cast<Eigen::Index>(sel_i_.size()) ||
                t_.coincidence.cols() != static_cast<Eigen::Index>(sel_s_.size()))
                throw ConfigError("target: coincidence matrix is " + std::to_string(t_.coincidence.rows()) + "x" +
                                  std::to_string(t_.coincidence.cols()) + " but the post-selected detection space is " +
                                  std::to_string(sel_i_.size()) + "x" + std::to_string(sel_s_.size()));
        } else {
            for (auto i : t_.qudit_idler)
                if (i >= n_i_) throw ConfigError("target: qudit idler index out of range");
            for (auto i : t_.qudit_signal)
                if (i >= n_s_) throw ConfigError("target: qudit signal index out of range");
            op_ = TomographyOperator::build(t_.dimension);
        }
    }

    const TargetSpec& target() const { return t_; }
    const std::vector<std::size_t>& selected_idler() const { return sel_i_; }
    const std::vector<std::size_t>& selected_signal() const { return sel_s_; }

    double operator()(const CorrelationData& c, CorrelationGrad* grad) const {
        if (t_.kind == TargetKind::coincidence) {
            const auto n = normalize_coincidences(g2_raw(c, sel_i_, sel_s_));
            RMatrix dp;
            const double loss = coincidence_loss(n.p, t_, grad ? &dp : nullptr);
            if (grad) g2_backward(c, sel_i_, sel_s_, dp, *grad);
            return loss;
        }
        const auto tp = run_tomography(c, *op_, t_.qudit_idler, t_.qudit_signal);
        const double loss = density_loss(tp.rho_raw, t_);
        if (grad) {
            const CMatrix G = t_.w_trace * trace_distance_grad(tp.rho_raw, t_.density);
            const auto& st = op_->plan.states;
            double d_total = 0;
            std::vector<std::vector<double>> dprob(st.size(), std::vector<double>(st.size(), 0.0));
            for (std::size_t k = 0; k < st.size(); ++k)
                for (std::size_t l = 0; l < st.size(); ++l) {
                    dprob[k][l] = (G.conjugate().cwiseProduct(op_->response[k][l])).sum().real();
                    d_total -= dprob[k][l] * tp.prob[k][l] / tp.total;
                }
            for (std::size_t k = 0; k < st.size(); ++k)
                for (std::size_t l = 0; l < st.size(); ++l)
                    g2_entry_backward(c, embed(st[k].vec, t_.qudit_idler, n_i_), embed(st[l].vec, t_.qudit_signal, n_s_),
                                      dprob[k][l] / tp.total, *grad);
            for (int a = 0; a < op_->d; ++a)
                for (int b = 0; b < op_->d; ++b)
                    g2_entry_backward(c, embed(Eigen::VectorXcd::Unit(op_->d, a), t_.qudit_idler, n_i_),
                                      embed(Eigen::VectorXcd::Unit(op_->d, b), t_.qudit_signal, n_s_), d_total, *grad);
        }
        return loss;
    }

    /// Observed quantity used by the loss, for reporting.
    RMatrix observed_coincidences(const CorrelationData& c) const { return normalize_coincidences(g2_raw(c, sel_i_, sel_s_)).p; }

private:
    TargetSpec t_;
    std::vector<std::size_t> sel_i_, sel_s_;
    std::size_t n_i_, n_s_;
    std::optional<TomographyOperator> op_;
};

struct OptimizerSettings {
    int epochs = 50;
    double lr_coeff = 1e-2;
    double lr_waist = 1e-6;  // meters
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    bool cosine_decay = true;
    double divergence_factor = 1e3;
};

struct TrainState {
    ParamVector theta;
    int iteration = 0;
    int schedule_epochs = 0;  // length of the cosine schedule
    std::vector<double> loss_history;
    std::vector<double> m, v;  // Adam moments, flat layout
    std::uint64_t master_seed = 1;
    ParamVector best_theta;
    double best_loss = INFINITY;
};

inline TrainState make_train_state(const ParamVector& theta, std::uint64_t seed) {
    TrainState s;
    s.theta = theta;
    s.best_theta = theta;
    s.master_seed = seed;
    s.m.assign(theta.n_scalars(), 0.0);
    s.v.assign(theta.n_scalars(), 0.0);
    return s;
}

/// Seeded initialization: Gaussian coefficients of std `std_dev` per quadrature,
/// with the lowest-order mode of each basis set to 1.
inline ParamVector init_params(const ModeSet& pump_basis, const std::vector<double>& pump_waists,
                               const ModeSet& crystal_basis, const std::vector<double>& crystal_waists, std::uint64_t seed,
                               double std_dev = 0.1) {
    ParamVector p;
    p.pump_basis = pump_basis;
    p.crystal_basis = crystal_basis;
    p.pump_waists = pump_waists;
    p.crystal_waists = crystal_waists;
    const NormalStream rng(seed, StreamId::parameter_init, 0);
    std::uint32_t idx = 0;
    auto fill = [&](const ModeSet& basis, std::vector<cd>& coeffs) {
        coeffs.clear();
        bool fundamental = false;
        for (const auto& m : basis.modes) {
            const auto [a, b] = rng.pair(idx++);
            if (m.order() == 0 && !fundamental) {
                coeffs.push_back({1.0, 0.0});
                fundamental = true;
            } else {
                coeffs.push_back({std_dev * a, std_dev * b});
            }
        }
    };
    fill(pump_basis, p.pump_coeffs);
    fill(crystal_basis, p.crystal_coeffs);
    p.validate();
    return p;
}

using EpochCallback = std::function<void(const TrainState&, const GradientResult&)>;

/// Adam with optional cosine decay. loss_history[t] is the loss at the
/// parameters entering epoch t.
inline TrainState train(TrainState state, const ForwardModel& model, const Objective& objective,
                        const OptimizerSettings& opt, const EpochCallback& on_epoch = {}) {
    if (opt.epochs < 0) throw ConfigError("train: epochs must be >= 0");
    if (state.schedule_epochs <= 0) state.schedule_epochs = state.iteration + opt.epochs;
    const std::size_t n = state.theta.n_scalars();
    if (state.m.size() != n) state.m.assign(n, 0.0);
    if (state.v.size() != n) state.v.assign(n, 0.0);
    const auto& g = model.config().grid;
    const double min_waist = model.config().medium.min_points_per_waist * std::max(g.dx, g.dy) * (1.0 + 1e-9);
    const CorrelationObjective obj = [&objective](const CorrelationData& c, CorrelationGrad* gr) { return objective(c, gr); };

    for (int e = 0; e < opt.epochs; ++e) {
        const auto r = model.gradient(state.theta, obj);
        if (!state.loss_history.empty() && r.loss > opt.divergence_factor * state.loss_history.front()) {
            std::ostringstream os;
            os << "train: diverged at epoch " << state.iteration << " (loss " << r.loss << " > " << opt.divergence_factor
               << " x initial " << state.loss_history.front() << ")";
            throw NumericalError(os.str());
        }
        state.loss_history.push_back(r.loss);
        if (r.loss < state.best_loss) {
            state.best_loss = r.loss;
            state.best_theta = state.theta;
        }
        const int t = state.iteration + 1;
        double scale = 1.0;
        if (opt.cosine_decay && state.schedule_epochs > 0)
            scale = 0.5 * (1.0 + std::cos(pi * static_cast<double>(state.iteration) / state.schedule_epochs));
        auto flat = state.theta.flat();
        for (std::size_t i = 0; i < n; ++i) {
            if (!state.theta.trainable(i)) continue;
            const double gi = r.grad[i];
            state.m[i] = opt.beta1 * state.m[i] + (1 - opt.beta1) * gi;
            state.v[i] = opt.beta2 * state.v[i] + (1 - opt.beta2) * gi * gi;
            const double mh = state.m[i] / (1 - std::pow(opt.beta1, t));
            const double vh = state.v[i] / (1 - std::pow(opt.beta2, t));
            const double lr = (state.theta.is_waist(i) ? opt.lr_waist : opt.lr_coeff) * scale;
            flat[i] -= lr * mh / (std::sqrt(vh) + opt.eps);
            if (state.theta.is_waist(i) && flat[i] < min_waist) {
                log_info("train: waist " + state.theta.scalar_name(i) + " held at the resolution limit");
                flat[i] = min_waist;
            }
        }
        state.theta.set_flat(flat);
        state.iteration = t;
        if (on_epoch) on_epoch(state, r);
    }
    return state;
}

struct InferenceResult {
    Evaluation eval;
    CoincidenceMatrix coincidences;
    std::optional<DensityMatrix> density;
};

/// Forward evaluation; optionally replaces the learned pump and reconstructs
/// the state over the given qudit modes.
inline InferenceResult infer(const ParamVector& theta, const ForwardModel& model,
                             const PumpProfile* override_pump = nullptr, int tomography_dim = 0,
                             const std::vector<std::size_t>& qudit_idler = {},
                             const std::vector<std::size_t>& qudit_signal = {}) {
    InferenceResult out;
    out.eval = model.evaluate(theta, override_pump);
    out.coincidences = g2(out.eval.corr, model.config().idler, model.config().signal);
    if (tomography_dim) {
        const auto plan = measurement_plan(tomography_dim);
        const auto rec = simulate_projections(plan, correlation_evaluator(out.eval.corr, qudit_idler, qudit_signal));
        out.density = reconstruct_rho(rec, tomography_dim);
    }
    return out;
}

/// Loss at theta without gradients.
inline double evaluate_loss(const ParamVector& theta, const ForwardModel& model, const Objective& objective) {
    return objective(model.evaluate(theta).corr, nullptr);
}

} // namespace spdcinv
