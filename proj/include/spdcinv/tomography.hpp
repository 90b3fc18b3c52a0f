#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "errors.hpp"
#include "grid.hpp"
#include "log.hpp"
#include "observables.hpp"

namespace spdcinv {

/// Hermitian operator basis for one qudit: identity first, then the traceless
/// Pauli (d = 2) or Gell-Mann (d = 3) matrices, with eigensystems.
struct GeneratorSet {
    int d = 0;
    std::vector<CMatrix> sigma;
    std::vector<std::vector<double>> eigenvalues;
    std::vector<std::vector<Eigen::VectorXcd>> eigenvectors;
    std::vector<double> norm;  // Tr(sigma_m^2)
};

inline GeneratorSet generators(int d) {
    if (d != 2 && d != 3)
        throw FeatureError("tomography: unsupported dimension " + std::to_string(d) + " (supported: 2, 3)");
    GeneratorSet g;
    g.d = d;
    const cd j{0.0, 1.0};
    g.sigma.push_back(CMatrix::Identity(d, d));
    if (d == 2) {
        CMatrix x(2, 2), y(2, 2), z(2, 2);
        x << 0, 1, 1, 0;
        y << 0, -j, j, 0;
        z << 1, 0, 0, -1;
        g.sigma.insert(g.sigma.end(), {x, y, z});
    } else {
        auto e = [](int a, int b) {
            CMatrix m = CMatrix::Zero(3, 3);
            m(a, b) = 1;
            return m;
        };
        g.sigma.push_back(e(0, 1) + e(1, 0));
        g.sigma.push_back(-j * e(0, 1) + j * e(1, 0));
        g.sigma.push_back(e(0, 0) - e(1, 1));
        g.sigma.push_back(e(0, 2) + e(2, 0));
        g.sigma.push_back(-j * e(0, 2) + j * e(2, 0));
        g.sigma.push_back(e(1, 2) + e(2, 1));
        g.sigma.push_back(-j * e(1, 2) + j * e(2, 1));
        g.sigma.push_back((e(0, 0) + e(1, 1) - 2.0 * e(2, 2)) / std::sqrt(3.0));
    }
    for (const auto& s : g.sigma) {
        Eigen::SelfAdjointEigenSolver<CMatrix> es(s);
        std::vector<double> vals;
        std::vector<Eigen::VectorXcd> vecs;
        for (int i = 0; i < d; ++i) {
            vals.push_back(es.eigenvalues()(i));
            vecs.push_back(es.eigenvectors().col(i));
        }
        g.eigenvalues.push_back(vals);
        g.eigenvectors.push_back(vecs);
        g.norm.push_back((s * s).trace().real());
    }
    return g;
}

/// Single-photon projector: state `index` of basis `basis` (basis 0 is the
/// computational basis).
struct ProjectorState {
    int basis = 0;
    int index = 0;
    Eigen::VectorXcd vec;
    std::string label() const { return "b" + std::to_string(basis) + "s" + std::to_string(index); }
};

struct ProjectionRecord {
    int idler_state = 0;   // index into MeasurementPlan::states
    int signal_state = 0;
    Eigen::VectorXcd idler, signal;
    double probability = 0;
};

/// Complete set of d + 1 mutually unbiased bases and every idler/signal pair.
struct MeasurementPlan {
    int d = 0;
    std::vector<ProjectorState> states;
    std::vector<ProjectionRecord> records;
};

inline std::vector<std::vector<Eigen::VectorXcd>> mutually_unbiased_bases(int d) {
    if (d != 2 && d != 3)
        throw FeatureError("tomography: unsupported dimension " + std::to_string(d) + " (supported: 2, 3)");
    std::vector<std::vector<Eigen::VectorXcd>> bases;
    std::vector<Eigen::VectorXcd> comp;
    for (int k = 0; k < d; ++k) comp.push_back(Eigen::VectorXcd::Unit(d, k));
    bases.push_back(comp);
    const double s = 1.0 / std::sqrt(static_cast<double>(d));
    if (d == 2) {
        const cd j{0.0, 1.0};
        Eigen::VectorXcd v(2);
        std::vector<Eigen::VectorXcd> x, y;
        v << s, s;
        x.push_back(v);
        v << s, -s;
        x.push_back(v);
        v << s, j * s;
        y.push_back(v);
        v << s, -j * s;
        y.push_back(v);
        bases.push_back(x);
        bases.push_back(y);
        return bases;
    }
    // odd prime d: psi_b^a[k] = omega^(a k^2 + b k) / sqrt(d)
    for (int a = 0; a < d; ++a) {
        std::vector<Eigen::VectorXcd> basis;
        for (int b = 0; b < d; ++b) {
            Eigen::VectorXcd v(d);
            for (int k = 0; k < d; ++k) v(k) = std::polar(s, 2.0 * pi * ((a * k * k + b * k) % d) / d);
            basis.push_back(v);
        }
        bases.push_back(basis);
    }
    return bases;
}

inline MeasurementPlan measurement_plan(int d) {
    MeasurementPlan plan;
    plan.d = d;
    const auto bases = mutually_unbiased_bases(d);
    for (std::size_t a = 0; a < bases.size(); ++a)
        for (std::size_t b = 0; b < bases[a].size(); ++b)
            plan.states.push_back({static_cast<int>(a), static_cast<int>(b), bases[a][b]});
    for (std::size_t k = 0; k < plan.states.size(); ++k)
        for (std::size_t l = 0; l < plan.states.size(); ++l)
            plan.records.push_back(
                {static_cast<int>(k), static_cast<int>(l), plan.states[k].vec, plan.states[l].vec, 0.0});
    return plan;
}

/// Coincidence evaluator over arbitrary idler/signal superpositions of the
/// qudit modes; returns the raw (unnormalized) Gaussian-factorized G2.
using CoincidenceEvaluator = std::function<double(const Eigen::VectorXcd&, const Eigen::VectorXcd&)>;

/// Embeds qudit vectors into the full detection sets at the given indices.
inline Eigen::VectorXcd embed(const Eigen::VectorXcd& v, const std::vector<std::size_t>& idx, std::size_t full) {
    Eigen::VectorXcd out = Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(full));
    for (std::size_t k = 0; k < idx.size(); ++k) out(static_cast<Eigen::Index>(idx[k])) = v(static_cast<Eigen::Index>(k));
    return out;
}

inline CoincidenceEvaluator correlation_evaluator(const CorrelationData& c, std::vector<std::size_t> idx_i,
                                                  std::vector<std::size_t> idx_s) {
    const auto ni = static_cast<std::size_t>(c.n_i.rows()), ns = static_cast<std::size_t>(c.n_s.rows());
    return [&c, idx_i = std::move(idx_i), idx_s = std::move(idx_s), ni, ns](const Eigen::VectorXcd& u,
                                                                            const Eigen::VectorXcd& v) {
        return g2_entry(c, embed(u, idx_i, ni), embed(v, idx_s, ns));
    };
}

/// Fills record probabilities: G2 of every pair divided by the total G2 over
/// the computational product basis.
inline std::vector<ProjectionRecord> simulate_projections(const MeasurementPlan& plan, const CoincidenceEvaluator& eval) {
    double total = 0;
    for (int a = 0; a < plan.d; ++a)
        for (int b = 0; b < plan.d; ++b) total += eval(Eigen::VectorXcd::Unit(plan.d, a), Eigen::VectorXcd::Unit(plan.d, b));
    if (!(total > 0) || !std::isfinite(total))
        throw NormalizationError("no coincidences: tomography subspace carries no coincidence mass");
    auto out = plan.records;
    for (auto& r : out) r.probability = eval(r.idler, r.signal) / total;
    return out;
}

/// Exact probabilities of a known two-qudit state.
inline std::vector<ProjectionRecord> analytic_projections(const MeasurementPlan& plan, const CMatrix& rho) {
    auto out = plan.records;
    for (auto& r : out) {
        Eigen::VectorXcd uv(plan.d * plan.d);
        for (int a = 0; a < plan.d; ++a)
            for (int b = 0; b < plan.d; ++b) uv(a * plan.d + b) = r.idler(a) * r.signal(b);
        r.probability = (uv.adjoint() * rho * uv)(0, 0).real();
    }
    return out;
}

struct DensityMatrix {
    int d = 0;
    CMatrix rho;  // physical (Hermitized, clipped, unit trace)
    CMatrix raw;  // linear reconstruction before the physicality projection
    double min_eigenvalue_raw = 0;
    double clipped_mass = 0;
    std::vector<std::string> labels;  // "idler|signal" per row
};

namespace detail {

inline CMatrix kron(const CMatrix& a, const CMatrix& b) {
    CMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j) out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return out;
}

/// Linear reconstruction from a full table prob[k][l] over plan states.
inline CMatrix reconstruct_linear(const GeneratorSet& gen, const MeasurementPlan& plan,
                                  const std::vector<std::vector<double>>& prob) {
    const int d = gen.d;
    const std::size_t ns = plan.states.size();
    // Each eigenprojector P = sum_k c_k Q_k with c_k = Tr(Q_k P) - Tr(P) [k in basis 0].
    const std::size_t m_count = gen.sigma.size();
    std::vector<std::vector<std::vector<double>>> coef(m_count);
    for (std::size_t m = 0; m < m_count; ++m)
        for (int i = 0; i < d; ++i) {
            const auto& v = gen.eigenvectors[m][static_cast<std::size_t>(i)];
            std::vector<double> c(ns);
            for (std::size_t k = 0; k < ns; ++k) {
                c[k] = std::norm(plan.states[k].vec.dot(v));
                if (plan.states[k].basis == 0) c[k] -= 1.0;
            }
            coef[m].push_back(std::move(c));
        }
    CMatrix rho = CMatrix::Zero(d * d, d * d);
    for (std::size_t m = 0; m < m_count; ++m)
        for (std::size_t n = 0; n < m_count; ++n) {
            double rmn = 0;
            for (int i = 0; i < d; ++i)
                for (int j = 0; j < d; ++j) {
                    // <lambda_m^i lambda_n^j| rho |lambda_m^i lambda_n^j>
                    const auto& ci = coef[m][static_cast<std::size_t>(i)];
                    const auto& cj = coef[n][static_cast<std::size_t>(j)];
                    double expect = 0;
                    for (std::size_t k = 0; k < ns; ++k) {
                        if (ci[k] == 0) continue;
                        for (std::size_t l = 0; l < ns; ++l) expect += ci[k] * cj[l] * prob[k][l];
                    }
                    rmn += gen.eigenvalues[m][static_cast<std::size_t>(i)] * gen.eigenvalues[n][static_cast<std::size_t>(j)] *
                           expect;
                }
            if (rmn != 0) rho += (rmn / (gen.norm[m] * gen.norm[n])) * kron(gen.sigma[m], gen.sigma[n]);
        }
    return rho;
}

} // namespace detail

/// Maps records onto the full probability table; throws if any pair is missing.
inline std::vector<std::vector<double>> probability_table(const MeasurementPlan& plan,
                                                          const std::vector<ProjectionRecord>& records) {
    const std::size_t ns = plan.states.size();
    std::vector<std::vector<double>> prob(ns, std::vector<double>(ns, 0.0));
    std::vector<std::vector<bool>> seen(ns, std::vector<bool>(ns, false));
    for (const auto& r : records) {
        if (r.idler_state < 0 || r.signal_state < 0 || static_cast<std::size_t>(r.idler_state) >= ns ||
            static_cast<std::size_t>(r.signal_state) >= ns)
            throw CoverageError("tomography: record refers to an unknown projector state");
        prob[static_cast<std::size_t>(r.idler_state)][static_cast<std::size_t>(r.signal_state)] = r.probability;
        seen[static_cast<std::size_t>(r.idler_state)][static_cast<std::size_t>(r.signal_state)] = true;
    }
    std::ostringstream missing;
    int count = 0;
    for (std::size_t k = 0; k < ns; ++k)
        for (std::size_t l = 0; l < ns; ++l)
            if (!seen[k][l]) {
                if (count < 20) missing << (count ? ", " : "") << "(" << plan.states[k].label() << ", " << plan.states[l].label() << ")";
                ++count;
            }
    if (count)
        throw CoverageError("tomography: " + std::to_string(count) + " projection pairs missing: " + missing.str() +
                            (count > 20 ? ", ..." : ""));
    return prob;
}

/// Hermitize, clip negative eigenvalues and renormalize the trace.
inline CMatrix physical_projection(const CMatrix& raw, double* min_eig = nullptr, double* clipped = nullptr) {
    const CMatrix h = 0.5 * (raw + raw.adjoint());
    Eigen::SelfAdjointEigenSolver<CMatrix> es(h);
    Eigen::VectorXd lam = es.eigenvalues();
    if (min_eig) *min_eig = lam.minCoeff();
    double cut = 0;
    for (Eigen::Index i = 0; i < lam.size(); ++i)
        if (lam(i) < 0) {
            cut += -lam(i);
            lam(i) = 0;
        }
    if (clipped) *clipped = cut;
    const double tr = lam.sum();
    if (!(tr > 0)) throw NumericalError("tomography: reconstructed state has no positive part");
    if (cut > 1e-12) {
        std::ostringstream os;
        os << "tomography: clipped negative eigenvalue mass " << cut;
        log_info(os.str());
    }
    return es.eigenvectors() * (lam / tr).asDiagonal() * es.eigenvectors().adjoint();
}

inline DensityMatrix reconstruct_rho(const std::vector<ProjectionRecord>& records, int d) {
    const auto gen = generators(d);
    const auto plan = measurement_plan(d);
    const auto prob = probability_table(plan, records);
    DensityMatrix out;
    out.d = d;
    out.raw = detail::reconstruct_linear(gen, plan, prob);
    out.rho = physical_projection(out.raw, &out.min_eigenvalue_raw, &out.clipped_mass);
    return out;
}

/// rho_raw = sum_{k,l} prob[k][l] * R[k][l]; used for gradients.
struct TomographyOperator {
    int d = 0;
    MeasurementPlan plan;
    std::vector<std::vector<CMatrix>> response;

    static TomographyOperator build(int d) {
        TomographyOperator op;
        op.d = d;
        op.plan = measurement_plan(d);
        const auto gen = generators(d);
        const std::size_t ns = op.plan.states.size();
        op.response.assign(ns, std::vector<CMatrix>(ns));
        std::vector<std::vector<double>> unit(ns, std::vector<double>(ns, 0.0));
        for (std::size_t k = 0; k < ns; ++k)
            for (std::size_t l = 0; l < ns; ++l) {
                unit[k][l] = 1.0;
                op.response[k][l] = detail::reconstruct_linear(gen, op.plan, unit);
                unit[k][l] = 0.0;
            }
        return op;
    }

    CMatrix apply(const std::vector<std::vector<double>>& prob) const {
        CMatrix rho = CMatrix::Zero(d * d, d * d);
        for (std::size_t k = 0; k < response.size(); ++k)
            for (std::size_t l = 0; l < response.size(); ++l) rho += prob[k][l] * response[k][l];
        return rho;
    }
};

inline double trace_distance(const CMatrix& a, const CMatrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError("trace_distance: dimension mismatch");
    Eigen::JacobiSVD<CMatrix> svd(a - b);
    return 0.5 * svd.singularValues().sum();
}

/// d TD(a, b) / d a for Hermitian arguments, as dL/dRe + i dL/dIm per entry.
inline CMatrix trace_distance_grad(const CMatrix& a, const CMatrix& b) {
    const CMatrix diff = 0.5 * ((a - b) + (a - b).adjoint());
    Eigen::SelfAdjointEigenSolver<CMatrix> es(diff);
    Eigen::VectorXd s = es.eigenvalues();
    for (Eigen::Index i = 0; i < s.size(); ++i) s(i) = s(i) > 0 ? 0.5 : (s(i) < 0 ? -0.5 : 0.0);
    return es.eigenvectors() * s.asDiagonal() * es.eigenvectors().adjoint();
}

/// Pure state from amplitudes over the idler-major product basis.
inline CMatrix pure_state(const Eigen::VectorXcd& psi) {
    const Eigen::VectorXcd n = psi / psi.norm();
    return n * n.adjoint();
}

} // namespace spdcinv
