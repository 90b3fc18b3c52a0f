#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "commands.hpp"
#include "config.hpp"
#include "inverse.hpp"
#include "io.hpp"
#include "tomography.hpp"
#include "workflow.hpp"

namespace spdcinv {

struct CheckResult {
    int id = 0;
    std::string name;
    bool passed = false;
    json details = json::object();
    double seconds = 0;
};

struct ValidationSettings {
    fs::path scenario_dir;
    unsigned workers = 0;
};

namespace validation {

inline ModeSet lg_set(const std::vector<std::pair<int, int>>& idx, double waist) {
    ModeSet s;
    for (auto [l, p] : idx) s.modes.push_back(ModeSpec{Basis::LG, l, p, waist, 0.0});
    return s;
}

/// 64x64 low-gain configuration for the oracle comparison.
inline RunConfig oracle_config(int l_pump) {
    RunConfig c;
    c.scenario = "oracle_check";
    c.seed = 7;
    c.grid = {64, 64, 2.5e-6, 2.5e-6, 1e-3, 2e-5};
    c.waves.n_p = 1.692;
    c.waves.n_s = c.waves.n_i = 1.69;
    c.pump.modes = {ModeSpec{Basis::LG, l_pump, 0, 25e-6, 0.0}};
    c.pump.coeffs = {cd{1.0, 0.0}};
    c.detection.idler = lg_set({{-2, 0}, {-1, 0}, {0, 0}, {1, 0}, {2, 0}}, 15e-6);
    c.detection.signal = c.detection.idler;
    c.noise.eval_realizations = 2000;
    c.mask_preset = "none";
    return c;
}

inline double second_moment_width(const ComplexField2D& f, const SimGrid& g) {
    double num = 0, den = 0;
    for (long iy = 0; iy < g.ny; ++iy)
        for (long ix = 0; ix < g.nx; ++ix) {
            const double I = std::norm(f.data[static_cast<std::size_t>(iy * g.nx + ix)]);
            num += I * (g.x[static_cast<std::size_t>(ix)] * g.x[static_cast<std::size_t>(ix)] +
                        g.y[static_cast<std::size_t>(iy)] * g.y[static_cast<std::size_t>(iy)]);
            den += I;
        }
    return std::sqrt(2.0 * num / den);
}

template <class F>
CheckResult timed(int id, std::string name, F&& f) {
    CheckResult r;
    r.id = id;
    r.name = std::move(name);
    const auto t0 = std::chrono::steady_clock::now();
    try {
        f(r);
    } catch (const std::exception& e) {
        r.passed = false;
        r.details["error"] = e.what();
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

inline RunConfig scenario(const ValidationSettings& s, const std::string& name) {
    auto c = load_config(s.scenario_dir / (name + ".json"));
    if (s.workers) c.workers = s.workers;
    return c;
}

inline double coincidence_entry(const CoincidenceMatrix& m, int l_idler, int l_signal) {
    for (Eigen::Index a = 0; a < m.rows(); ++a)
        for (Eigen::Index b = 0; b < m.cols(); ++b)
            if (m.idler_modes[static_cast<std::size_t>(a)].index1 == l_idler &&
                m.signal_modes[static_cast<std::size_t>(b)].index1 == l_signal)
                return m(a, b);
    throw ConfigError("coincidence_entry: mode pair not in the detection set");
}

// Individual checks ---------------------------------------------------------------

inline CheckResult diffraction(const ValidationSettings&) {
    return timed(1, "diffraction fidelity", [](CheckResult& r) {
        const double w0 = 30e-6;
        WaveInputs wi;
        wi.n_p = 1.692;
        wi.n_s = wi.n_i = 1.69;
        const auto waves = wave_params(wi, qpm_period(wi), 3.64e-12);
        const double zr = 0.5 * waves.k_i * w0 * w0;
        GridConfig gc;  // default transverse grid
        gc.length = zr;
        gc.dz = zr / 100.0;
        const auto g = build_grid(gc);
        auto coupling = std::make_shared<CouplingProfile>();
        coupling->chi = ComplexField2D(g);
        coupling->product = {ComplexField2D(g)};
        coupling->pump = {ComplexField2D(g)};
        const Propagator prop(g, waves, coupling);
        FieldQuartet q(g);
        q.i_out = synth_mode(ModeSpec{Basis::LG, 0, 0, w0, 0.0}, g, 0.0, waves.k_i, 1.0);
        prop.run(q);
        const double w = second_moment_width(q.i_out, g);
        const double expected = w0 * std::sqrt(2.0);
        const double rel = std::abs(w - expected) / expected;
        r.passed = rel < 0.01;
        r.details = {{"w0", w0}, {"z_R", zr}, {"w_measured", w}, {"w_expected", expected}, {"relative_error", rel}};
    });
}

inline CheckResult null_test(const ValidationSettings& s) {
    return timed(2, "null test (kappa = 0)", [&](CheckResult& r) {
        auto c = oracle_config(0);
        c.grid = {32, 32, 4e-6, 4e-6, 2e-4, 1e-5};
        c.detection.idler = lg_set({{-1, 0}, {0, 0}, {1, 0}}, 20e-6);
        c.detection.signal = c.detection.idler;
        c.medium.min_points_per_waist = 2;
        c.medium.pump_amplitude = 0.0;
        c.noise.eval_realizations = 1000;
        if (s.workers) c.workers = s.workers;
        const ForwardModel m(forward_config(c, true));
        ParamVector theta = initial_params(c);
        const auto corr = m.evaluate(theta).corr;
        double worst = 0, max_abs = 0;
        bool ok = true;
        auto scan = [&](const CMatrix& v, const RMatrix& se) {
            for (Eigen::Index i = 0; i < v.size(); ++i) {
                const double a = std::abs(v.data()[i]), e = se.data()[i];
                max_abs = std::max(max_abs, a);
                if (a > 5.0 * e) ok = false;
                if (e > 0) worst = std::max(worst, a / e);
            }
        };
        scan(corr.n_i, corr.n_i_se);
        scan(corr.n_s, corr.n_s_se);
        scan(corr.pair, corr.pair_se);
        scan(corr.cross, corr.cross_se);
        r.passed = ok;
        r.details = {{"realizations", corr.n_realizations}, {"max_abs_value", max_abs}, {"max_sigma_ratio", worst}};
    });
}

struct OracleRun {
    double rel_l1 = 0, off_diagonal = 0, oracle_off_diagonal = 0;
    CoincidenceMatrix g2, oracle;
};

inline OracleRun oracle_run(int l_pump, unsigned workers, bool broken_sign = false, long realizations = 2000) {
    auto c = oracle_config(l_pump);
    c.noise.eval_realizations = realizations;
    if (workers) c.workers = workers;
    auto f = forward_config(c, true);
    f.propagator.flip_signal_coupling = broken_sign;
    const ForwardModel m(f);
    const auto theta = initial_params(c);
    OracleRun o;
    o.g2 = g2(m.evaluate(theta).corr, f.idler, f.signal);
    o.oracle = first_order_oracle(theta, f.waves, f.grid, f.medium, f.idler, f.signal);
    o.rel_l1 = relative_l1(o.g2.values, o.oracle.values);
    o.off_diagonal = oam_off_diagonal_mass(o.g2, l_pump);
    o.oracle_off_diagonal = oam_off_diagonal_mass(o.oracle, l_pump);
    return o;
}

inline CheckResult oracle_and_oam(const ValidationSettings& s, CheckResult* oam) {
    OracleRun a, b;
    auto r = timed(3, "oracle equivalence", [&](CheckResult& r) {
        a = oracle_run(0, s.workers);
        b = oracle_run(1, s.workers);
        r.passed = a.rel_l1 < 0.05 && b.rel_l1 < 0.05;
        r.details = {{"gaussian_pump_rel_l1", a.rel_l1}, {"lg1_pump_rel_l1", b.rel_l1}, {"realizations", 2000}};
    });
    *oam = timed(4, "OAM conservation", [&](CheckResult& o) {
        if (!r.details.contains("gaussian_pump_rel_l1")) throw Error("oracle runs failed");
        o.passed = a.off_diagonal < 0.02 && b.off_diagonal < 0.02;
        o.details = {{"gaussian_pump_off_diagonal", a.off_diagonal}, {"lg1_pump_off_diagonal", b.off_diagonal}};
    });
    return r;
}

inline CheckResult gradient_check(const ValidationSettings& s) {
    return timed(5, "gradient vs finite differences", [&](CheckResult& r) {
        RunConfig c;
        c.seed = 7;
        c.grid = {32, 32, 5e-6, 5e-6, 1e-3, 5e-5};  // 20 steps
        c.waves.n_p = 1.9;
        c.medium.pump_amplitude = 3e6;
        c.medium.min_points_per_waist = 2;
        c.pump.modes = {ModeSpec{Basis::LG, 0, 0, 25e-6, 0.0}, ModeSpec{Basis::LG, 1, 0, 22e-6, 0.0}};
        c.crystal.modes = {ModeSpec{Basis::LG, 0, 0, 40e-6, 0.0}, ModeSpec{Basis::LG, -1, 0, 35e-6, 0.0}};
        c.pump.init_std = c.crystal.init_std = 0.3;
        c.detection.idler = lg_set({{-1, 0}, {0, 0}, {1, 0}}, 20e-6);
        c.detection.signal = c.detection.idler;
        c.noise.train_realizations = 24;
        if (s.workers) c.workers = s.workers;
        TargetSpec t;
        t.coincidence = RMatrix::Constant(3, 3, 0.02);
        t.coincidence(0, 2) = 0.4;
        t.coincidence(1, 1) = 0.3;
        t.coincidence /= t.coincidence.sum();
        c.target = t;
        const ForwardModel m(forward_config(c, false));
        const Objective obj(t, m.config().idler, m.config().signal);
        const auto theta = initial_params(c);
        const auto g = m.gradient(theta, [&](const CorrelationData& d, CorrelationGrad* gr) { return obj(d, gr); });
        const auto f0 = theta.flat();
        double worst = 0;
        std::string worst_name;
        for (std::size_t i = 0; i < f0.size(); ++i) {
            const double h = theta.is_waist(i) ? 1e-9 : 1e-5;
            auto f = f0;
            ParamVector tp = theta;
            f[i] = f0[i] + h;
            tp.set_flat(f);
            const double lp = evaluate_loss(tp, m, obj);
            f[i] = f0[i] - h;
            tp.set_flat(f);
            const double lm = evaluate_loss(tp, m, obj);
            const double fd = (lp - lm) / (2 * h);
            const double rel = std::abs(fd - g.grad[i]) / std::max(std::abs(fd), 1e-12);
            if (rel > worst) {
                worst = rel;
                worst_name = theta.scalar_name(i);
            }
        }
        r.passed = worst < 1e-4;
        r.details = {{"scalars", f0.size()}, {"worst_relative_error", worst}, {"worst_scalar", worst_name}};
    });
}

/// Largest rise over the previous epoch after `warmup` epochs, relative to
/// the previous loss.
inline double max_relative_rise(const std::vector<double>& loss, std::size_t warmup) {
    double worst = 0;
    for (std::size_t t = std::max<std::size_t>(warmup, 1); t < loss.size(); ++t)
        worst = std::max(worst, (loss[t] - loss[t - 1]) / loss[t - 1]);
    return worst;
}

inline CheckResult pump_waist(const ValidationSettings& s) {
    return timed(6, "pump waist learning", [&](CheckResult& r) {
        const Scenario sc(scenario(s, "fig4_pump_waist"));
        const auto st = sc.train(make_train_state(sc.initial_params(), sc.config().seed), sc.config().optimizer);
        const double w = st.theta.pump_waists.front();
        const double target = 13.8e-6;
        const std::size_t warmup = 3;
        const double rise = max_relative_rise(st.loss_history, warmup);
        r.passed = std::abs(w - target) <= 0.1 * target && rise <= 1e-4;
        r.details = {{"final_waist", w},           {"target_waist", target},
                     {"relative_error", (w - target) / target}, {"warmup_epochs", warmup},
                     {"max_relative_rise_after_warmup", rise},  {"loss_history", st.loss_history}};
    });
}

inline void qubit_design(const ValidationSettings& s, CheckResult& c7, CheckResult& c8) {
    ParamVector learned;
    std::optional<Scenario> sc;
    c7 = timed(7, "qubit inverse design", [&](CheckResult& r) {
        sc.emplace(scenario(s, "fig5a_qubit"));
        const auto st = sc->train(make_train_state(sc->initial_params(), sc->config().seed), sc->config().optimizer);
        learned = st.theta;
        const auto e = sc->evaluate(learned);
        const double a = coincidence_entry(e.g2, 1, -1), b = coincidence_entry(e.g2, -1, 1);
        r.passed = std::abs(a - 0.5) <= 0.15 && std::abs(b - 0.5) <= 0.15 && a + b >= 0.7;
        r.details = {{"p(1,-1)", a}, {"p(-1,1)", b}, {"target_mass", a + b}, {"eval_loss", *e.loss}};
    });
    c8 = timed(8, "all-optical control", [&](CheckResult& r) {
        if (!sc) throw Error("qubit design did not run");
        const auto pump = sc->override_pump("LG(1,0)", learned);
        const auto e = sc->evaluate(learned, &pump);
        const double on = 1.0 - oam_off_diagonal_mass(e.g2, 1);
        r.passed = on >= 0.7;
        r.details = {{"diagonal_l_sum_1_mass", on}, {"p(1,0)", coincidence_entry(e.g2, 1, 0)},
                     {"p(0,1)", coincidence_entry(e.g2, 0, 1)}};
    });
}

inline CheckResult tomography_roundtrip(const ValidationSettings& s) {
    return timed(9, "tomography round trip", [&](CheckResult& r) {
        Eigen::VectorXcd bell = Eigen::VectorXcd::Zero(4);
        bell(1) = bell(2) = 1.0 / std::sqrt(2.0);
        Eigen::VectorXcd qutrit = Eigen::VectorXcd::Zero(9);
        qutrit(2) = qutrit(4) = qutrit(6) = 1.0 / std::sqrt(3.0);
        double worst = 0;
        for (const auto& [d, psi] : std::vector<std::pair<int, Eigen::VectorXcd>>{{2, bell}, {3, qutrit}}) {
            const CMatrix rho = pure_state(psi);
            const auto rec = reconstruct_rho(analytic_projections(measurement_plan(d), rho), d);
            worst = std::max(worst, trace_distance(rec.rho, rho));
        }
        const Scenario sc(scenario(s, "fig6a_bell_rho"));
        const auto st = sc.train(make_train_state(sc.initial_params(), sc.config().seed), sc.config().optimizer);
        const auto e = sc.evaluate(st.theta);
        const double td = *e.trace_distance;
        r.passed = worst < 1e-6 && td < 0.15;
        r.details = {{"analytic_trace_distance_max", worst},
                     {"trained_bell_trace_distance", td},
                     {"eval_realizations", sc.config().noise.eval_realizations},
                     {"min_eigenvalue_raw", e.rho->min_eigenvalue_raw}};
    });
}

inline CheckResult joint_learning(const ValidationSettings& s) {
    return timed(10, "joint vs single-sided learning", [&](CheckResult& r) {
        const Scenario sc(scenario(s, "suppB_joint_vs_single"));
        const auto arms = joint_vs_single(sc);
        const double joint = *arms[0].eval.loss;
        bool ok = true;
        json arms_j;
        for (const auto& a : arms) {
            arms_j[a.name] = {{"eval_loss", *a.eval.loss}, {"final_train_loss", a.state.loss_history.back()}};
            if (a.name != "joint" && joint > 1.05 * *a.eval.loss) ok = false;
        }
        r.passed = ok;
        r.details = {{"arms", arms_j}, {"slack", 0.05}};
    });
}

inline CheckResult imperfection(const ValidationSettings& s) {
    return timed(11, "imperfection recovery", [&](CheckResult& r) {
        const Scenario sc(scenario(s, "suppC_imperfection"));
        const auto res = imperfection_recovery(sc);
        r.passed = res.perturbed_loss >= 2.0 * res.clean_loss && res.recovered_loss < res.perturbed_loss;
        r.details = {{"clean_loss", res.clean_loss},
                     {"perturbed_loss", res.perturbed_loss},
                     {"recovered_loss", res.recovered_loss},
                     {"sigma", res.sigma_used},
                     {"pump_waist_before", res.perturbed.pump_waists.front()},
                     {"pump_waist_after", res.recovered.pump_waists.front()}};
    });
}

inline CheckResult determinism(const ValidationSettings& s) {
    return timed(12, "determinism across worker counts", [&](CheckResult& r) {
        auto c = scenario(s, "fig5a_qubit");
        c.noise.eval_realizations = 300;
        std::vector<std::string> csv;
        for (unsigned w : {1u, 2u, 5u}) {
            c.workers = w;
            c.block_size = 8;
            const Scenario sc(c);
            csv.push_back(coincidence_csv(sc.evaluate(sc.initial_params()).g2));
        }
        r.passed = csv[0] == csv[1] && csv[0] == csv[2];
        r.details = {{"workers", {1, 2, 5}}, {"sha256", sha256_hex(csv[0])}};
    });
}

} // namespace validation

/// Sensitivity of the oracle gate: a sign-flipped nonlinear step must fail it.
inline CheckResult broken_sign_fixture(unsigned workers, long realizations = 500) {
    return validation::timed(0, "broken-sign fixture fails the oracle gate", [&](CheckResult& r) {
        const auto o = validation::oracle_run(0, workers, true, realizations);
        r.passed = !(o.rel_l1 < 0.05);
        r.details = {{"rel_l1", o.rel_l1}, {"realizations", realizations}};
    });
}

using CheckCallback = std::function<void(const CheckResult&)>;

inline std::vector<CheckResult> run_acceptance(const ValidationSettings& s, const CheckCallback& cb = {}) {
    using namespace validation;
    std::vector<CheckResult> out;
    auto push = [&](CheckResult r) {
        if (cb) cb(r);
        out.push_back(std::move(r));
    };
    push(diffraction(s));
    push(null_test(s));
    CheckResult oam;
    push(oracle_and_oam(s, &oam));
    push(oam);
    push(gradient_check(s));
    push(pump_waist(s));
    CheckResult c7, c8;
    qubit_design(s, c7, c8);
    push(c7);
    push(c8);
    push(tomography_roundtrip(s));
    push(joint_learning(s));
    push(imperfection(s));
    push(determinism(s));
    return out;
}

inline json validation_report(const std::vector<CheckResult>& checks, const std::vector<CheckResult>& fixtures) {
    json j;
    j["schema"] = "spdcinv.validation/1";
    bool all = true;
    auto list = [&](const std::vector<CheckResult>& v) {
        json a = json::array();
        for (const auto& c : v) {
            all = all && c.passed;
            a.push_back({{"id", c.id}, {"name", c.name}, {"passed", c.passed}, {"seconds", c.seconds}, {"details", c.details}});
        }
        return a;
    };
    j["checks"] = list(checks);
    j["fixtures"] = list(fixtures);
    j["passed"] = all;
    return j;
}

inline std::string check_line(const CheckResult& r) {
    char buf[64];
    std::snprintf(buf, sizeof buf, " (%.1f s)", r.seconds);
    std::string s = (r.passed ? "PASS " : "FAIL ") + std::to_string(r.id) + " " + r.name + buf;
    if (r.details.contains("error")) s += ": " + r.details["error"].get<std::string>();
    return s;
}

inline int cmd_validate(const CommandOptions& o, const fs::path& scenario_dir) {
    ValidationSettings s;
    s.scenario_dir = scenario_dir;
    if (o.workers) s.workers = *o.workers;
    const auto print = [](const CheckResult& r) { std::printf("%s\n", check_line(r).c_str()), std::fflush(stdout); };
    const auto checks = run_acceptance(s, print);
    std::vector<CheckResult> fixtures{broken_sign_fixture(s.workers)};
    print(fixtures.back());
    const auto report = validation_report(checks, fixtures);
    const fs::path out = o.out.empty() ? fs::path("runs/validate") : o.out;
    write_file_atomic(out / "report.json", dump_json(report));
    if (!report["passed"].get<bool>()) throw ValidationFailure("validate: one or more checks failed");
    return 0;
}

} // namespace spdcinv
