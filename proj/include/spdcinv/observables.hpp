#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "errors.hpp"
#include "grid.hpp"
#include "log.hpp"
#include "medium.hpp"
#include "modes.hpp"
#include "parallel.hpp"
#include "propagator.hpp"

namespace spdcinv {

using CMatrix = Eigen::MatrixXcd;
using RMatrix = Eigen::MatrixXd;

/// Mode projections of every realization, row-major [r][q].
struct ModeAmplitudeSamples {
    long n_realizations = 0;
    std::size_t n_i = 0, n_s = 0;
    std::vector<cd> i_out, i_vac, s_out, s_vac;

    ModeAmplitudeSamples() = default;
    ModeAmplitudeSamples(long n, std::size_t ni, std::size_t ns)
        : n_realizations(n), n_i(ni), n_s(ns),
          i_out(static_cast<std::size_t>(n) * ni), i_vac(static_cast<std::size_t>(n) * ni),
          s_out(static_cast<std::size_t>(n) * ns), s_vac(static_cast<std::size_t>(n) * ns) {}

    cd io(long r, std::size_t q) const { return i_out[static_cast<std::size_t>(r) * n_i + q]; }
    cd iv(long r, std::size_t q) const { return i_vac[static_cast<std::size_t>(r) * n_i + q]; }
    cd so(long r, std::size_t q) const { return s_out[static_cast<std::size_t>(r) * n_s + q]; }
    cd sv(long r, std::size_t q) const { return s_vac[static_cast<std::size_t>(r) * n_s + q]; }

    bool all_finite() const {
        for (const auto* v : {&i_out, &i_vac, &s_out, &s_vac})
            for (const auto& x : *v)
                if (!std::isfinite(x.real()) || !std::isfinite(x.imag())) return false;
        return true;
    }
};

/// Detection modes sampled at the output facet.
class DetectionBank {
public:
    DetectionBank(const ModeSet& idler, const ModeSet& signal, const SimGrid& g, const WaveParams& waves,
                  double min_ppw = default_min_points_per_waist)
        : idler_set_(idler), signal_set_(signal), area_(g.cell_area()) {
        idler.validate();
        signal.validate();
        if (idler.empty() || signal.empty()) throw ConfigError("detection: idler and signal mode sets must be non-empty");
        for (const auto& m : idler.modes) idler_.push_back(synth_mode(m, g, g.length, waves.k_i, 1.0, min_ppw));
        for (const auto& m : signal.modes) signal_.push_back(synth_mode(m, g, g.length, waves.k_s, 1.0, min_ppw));
    }

    std::size_t n_i() const { return idler_.size(); }
    std::size_t n_s() const { return signal_.size(); }
    const ModeSet& idler_set() const { return idler_set_; }
    const ModeSet& signal_set() const { return signal_set_; }
    const ComplexField2D& idler_mode(std::size_t q) const { return idler_[q]; }
    const ComplexField2D& signal_mode(std::size_t q) const { return signal_[q]; }

    void project(const FieldQuartet& f, cd* io, cd* iv, cd* so, cd* sv) const {
        for (std::size_t q = 0; q < idler_.size(); ++q) {
            io[q] = overlap(idler_[q], f.i_out);
            iv[q] = overlap(idler_[q], f.i_vac);
        }
        for (std::size_t q = 0; q < signal_.size(); ++q) {
            so[q] = overlap(signal_[q], f.s_out);
            sv[q] = overlap(signal_[q], f.s_vac);
        }
    }

    /// Adjoint of project: grad_E = sum_q mode_q * grad_A[q] * dx dy.
    void inject(const cd* g_io, const cd* g_iv, const cd* g_so, const cd* g_sv, FieldQuartet& grad) const {
        fill(grad.i_out, idler_, g_io);
        fill(grad.i_vac, idler_, g_iv);
        fill(grad.s_out, signal_, g_so);
        fill(grad.s_vac, signal_, g_sv);
    }

private:
    cd overlap(const ComplexField2D& m, const ComplexField2D& f) const {
        cd s{};
        const std::size_t n = f.size();
        for (std::size_t i = 0; i < n; ++i) s += std::conj(m[i]) * f[i];
        return s * area_;
    }
    void fill(ComplexField2D& out, const std::vector<ComplexField2D>& modes, const cd* g) const {
        std::fill(out.data.begin(), out.data.end(), cd{});
        for (std::size_t q = 0; q < modes.size(); ++q) {
            const cd c = g[q] * area_;
            if (c == cd{}) continue;
            for (std::size_t i = 0; i < out.size(); ++i) out[i] += modes[q][i] * c;
        }
    }

    ModeSet idler_set_, signal_set_;
    std::vector<ComplexField2D> idler_, signal_;
    double area_;
};

inline ModeAmplitudeSamples project_ensemble(const std::vector<FieldQuartet>& ensemble, const DetectionBank& bank) {
    ModeAmplitudeSamples s(static_cast<long>(ensemble.size()), bank.n_i(), bank.n_s());
    for (std::size_t r = 0; r < ensemble.size(); ++r)
        bank.project(ensemble[r], &s.i_out[r * s.n_i], &s.i_vac[r * s.n_i], &s.s_out[r * s.n_s], &s.s_vac[r * s.n_s]);
    return s;
}

inline ModeAmplitudeSamples project_ensemble(const std::vector<FieldQuartet>& ensemble, const ModeSet& idler,
                                             const ModeSet& signal, const SimGrid& g, const WaveParams& waves) {
    return project_ensemble(ensemble, DetectionBank(idler, signal, g, waves));
}

/// Generates, propagates and projects realizations [0, noise.n_realizations).
/// Each realization depends only on its index, so the result does not depend
/// on the number of workers.
inline ModeAmplitudeSamples sample_ensemble(const Propagator& prop, const DetectionBank& bank, const NoiseSpec& noise,
                                            unsigned workers) {
    noise.validate();
    ModeAmplitudeSamples s(noise.n_realizations, bank.n_i(), bank.n_s());
    parallel_for(static_cast<std::size_t>(noise.n_realizations), workers, [&](std::size_t r, unsigned) {
        auto q = init_vacuum(noise, prop.grid(), static_cast<long>(r));
        prop.run(q);
        bank.project(q, &s.i_out[r * s.n_i], &s.i_vac[r * s.n_i], &s.s_out[r * s.n_s], &s.s_vac[r * s.n_s]);
    });
    return s;
}

/// Ensemble moments. Rows index the idler mode, columns the signal mode for
/// pair and cross. *_se hold per-entry standard errors of the mean (modulus).
struct CorrelationData {
    CMatrix n_i, n_s, pair, cross;
    RMatrix n_i_se, n_s_se, pair_se, cross_se;
    long n_realizations = 0;
};

/// Same shapes as CorrelationData; entries are dL/dRe + i dL/dIm.
struct CorrelationGrad {
    CMatrix n_i, n_s, pair, cross;

    static CorrelationGrad zeros(std::size_t ni, std::size_t ns) {
        const auto a = static_cast<Eigen::Index>(ni), b = static_cast<Eigen::Index>(ns);
        return {CMatrix::Zero(a, a), CMatrix::Zero(b, b), CMatrix::Zero(a, b), CMatrix::Zero(a, b)};
    }
};

namespace detail {

struct MeanAccumulator {
    cd sum{};
    double sq = 0;
    void add(cd x) {
        sum += x;
        sq += std::norm(x);
    }
    cd mean(long n) const { return sum / static_cast<double>(n); }
    double se(long n) const {
        const double nn = static_cast<double>(n);
        const double var = std::max(0.0, (sq - std::norm(sum) / nn) / (nn - 1.0));
        return std::sqrt(var / nn);
    }
};

} // namespace detail

inline CorrelationData first_order_moments(const ModeAmplitudeSamples& s) {
    if (s.n_realizations < 2) throw ConfigError("moments: need at least 2 realizations");
    const long n = s.n_realizations;
    const auto ni = static_cast<Eigen::Index>(s.n_i), ns = static_cast<Eigen::Index>(s.n_s);
    CorrelationData c;
    c.n_realizations = n;
    c.n_i = CMatrix::Zero(ni, ni);
    c.n_s = CMatrix::Zero(ns, ns);
    c.pair = CMatrix::Zero(ni, ns);
    c.cross = CMatrix::Zero(ni, ns);
    c.n_i_se = RMatrix::Zero(ni, ni);
    c.n_s_se = RMatrix::Zero(ns, ns);
    c.pair_se = RMatrix::Zero(ni, ns);
    c.cross_se = RMatrix::Zero(ni, ns);

    // Fixed realization order: deterministic regardless of how samples were produced.
    for (Eigen::Index a = 0; a < ni; ++a)
        for (Eigen::Index b = a; b < ni; ++b) {
            detail::MeanAccumulator acc;
            for (long r = 0; r < n; ++r) acc.add(std::conj(s.io(r, a)) * s.io(r, b));
            c.n_i(a, b) = acc.mean(n);
            c.n_i(b, a) = std::conj(c.n_i(a, b));
            c.n_i_se(a, b) = c.n_i_se(b, a) = acc.se(n);
        }
    for (Eigen::Index a = 0; a < ns; ++a)
        for (Eigen::Index b = a; b < ns; ++b) {
            detail::MeanAccumulator acc;
            for (long r = 0; r < n; ++r) acc.add(std::conj(s.so(r, a)) * s.so(r, b));
            c.n_s(a, b) = acc.mean(n);
            c.n_s(b, a) = std::conj(c.n_s(a, b));
            c.n_s_se(a, b) = c.n_s_se(b, a) = acc.se(n);
        }
    for (Eigen::Index a = 0; a < ni; ++a)
        for (Eigen::Index b = 0; b < ns; ++b) {
            detail::MeanAccumulator pa, cr;
            for (long r = 0; r < n; ++r) {
                pa.add(0.5 * (s.io(r, a) * s.sv(r, b) + s.so(r, b) * s.iv(r, a)));
                cr.add(std::conj(s.io(r, a)) * s.so(r, b));
            }
            c.pair(a, b) = pa.mean(n);
            c.cross(a, b) = cr.mean(n);
            c.pair_se(a, b) = pa.se(n);
            c.cross_se(a, b) = cr.se(n);
        }
    return c;
}

/// Adjoint of first_order_moments.
inline ModeAmplitudeSamples backprop_moments(const ModeAmplitudeSamples& s, const CorrelationGrad& g) {
    ModeAmplitudeSamples out(s.n_realizations, s.n_i, s.n_s);
    const double inv = 1.0 / static_cast<double>(s.n_realizations);
    const auto ni = static_cast<Eigen::Index>(s.n_i), ns = static_cast<Eigen::Index>(s.n_s);
    for (long r = 0; r < s.n_realizations; ++r) {
        cd* gio = &out.i_out[static_cast<std::size_t>(r) * s.n_i];
        cd* giv = &out.i_vac[static_cast<std::size_t>(r) * s.n_i];
        cd* gso = &out.s_out[static_cast<std::size_t>(r) * s.n_s];
        cd* gsv = &out.s_vac[static_cast<std::size_t>(r) * s.n_s];
        for (Eigen::Index a = 0; a < ni; ++a)
            for (Eigen::Index b = 0; b < ni; ++b) {
                const cd G = g.n_i(a, b);
                if (G == cd{}) continue;
                // n[a,b] = mean conj(A_a) A_b
                gio[b] += s.io(r, a) * inv * G;
                gio[a] += s.io(r, b) * inv * std::conj(G);
            }
        for (Eigen::Index a = 0; a < ns; ++a)
            for (Eigen::Index b = 0; b < ns; ++b) {
                const cd G = g.n_s(a, b);
                if (G == cd{}) continue;
                gso[b] += s.so(r, a) * inv * G;
                gso[a] += s.so(r, b) * inv * std::conj(G);
            }
        for (Eigen::Index a = 0; a < ni; ++a)
            for (Eigen::Index b = 0; b < ns; ++b) {
                const cd P = g.pair(a, b), C = g.cross(a, b);
                if (P != cd{}) {
                    gio[a] += std::conj(0.5 * inv * s.sv(r, b)) * P;
                    gsv[b] += std::conj(0.5 * inv * s.io(r, a)) * P;
                    gso[b] += std::conj(0.5 * inv * s.iv(r, a)) * P;
                    giv[a] += std::conj(0.5 * inv * s.so(r, b)) * P;
                }
                if (C != cd{}) {
                    // cross[a,b] = mean conj(io_a) so_b
                    gso[b] += s.io(r, a) * inv * C;
                    gio[a] += s.so(r, b) * inv * std::conj(C);
                }
            }
    }
    return out;
}

/// Normalized coincidence probabilities, rows = idler modes, columns = signal modes.
struct CoincidenceMatrix {
    std::vector<ModeSpec> idler_modes, signal_modes;
    RMatrix values;
    double clamped_mass = 0;  // magnitude of negative raw entries set to zero
    double raw_sum = 0;

    Eigen::Index rows() const { return values.rows(); }
    Eigen::Index cols() const { return values.cols(); }
    double operator()(Eigen::Index a, Eigen::Index b) const { return values(a, b); }
};

/// Raw Gaussian-factorized coincidence for the idler projector u and signal
/// projector v, both expressed over the full detection sets.
inline double g2_entry(const CorrelationData& c, const Eigen::VectorXcd& u, const Eigen::VectorXcd& v) {
    const double ni = (u.transpose() * c.n_i * u.conjugate())(0, 0).real();
    const double ns = (v.transpose() * c.n_s * v.conjugate())(0, 0).real();
    const cd pair = (u.adjoint() * c.pair * v.conjugate())(0, 0);
    const cd cross = (u.transpose() * c.cross * v.conjugate())(0, 0);
    return ni * ns + std::norm(pair) + std::norm(cross);
}

/// Adds d(g2_entry)/d(correlations) * weight to g.
inline void g2_entry_backward(const CorrelationData& c, const Eigen::VectorXcd& u, const Eigen::VectorXcd& v,
                              double weight, CorrelationGrad& g) {
    if (weight == 0.0) return;
    const double ni = (u.transpose() * c.n_i * u.conjugate())(0, 0).real();
    const double ns = (v.transpose() * c.n_s * v.conjugate())(0, 0).real();
    const cd pair = (u.adjoint() * c.pair * v.conjugate())(0, 0);
    const cd cross = (u.transpose() * c.cross * v.conjugate())(0, 0);
    // n(U,U) = sum u_a conj(u_b) n[a,b]; only its real part enters.
    g.n_i += (weight * ns) * (u.conjugate() * u.transpose());
    g.n_s += (weight * ni) * (v.conjugate() * v.transpose());
    // pair(U,V) = sum conj(u_a) conj(v_b) pair[a,b]
    g.pair += (2.0 * weight * pair) * (u * v.transpose());
    // cross(U,V) = sum u_a conj(v_b) cross[a,b]
    g.cross += (2.0 * weight * cross) * (u.conjugate() * v.transpose());
}

inline std::vector<std::size_t> selected_indices(const ModeSet& set, PostSelect rule) {
    ModeSet tmp = set;
    tmp.postselect = rule;
    return tmp.selected();
}

/// Raw (unnormalized) coincidences over the selected modes.
inline RMatrix g2_raw(const CorrelationData& c, const std::vector<std::size_t>& sel_i,
                      const std::vector<std::size_t>& sel_s) {
    RMatrix raw(static_cast<Eigen::Index>(sel_i.size()), static_cast<Eigen::Index>(sel_s.size()));
    for (std::size_t a = 0; a < sel_i.size(); ++a)
        for (std::size_t b = 0; b < sel_s.size(); ++b) {
            const auto ia = static_cast<Eigen::Index>(sel_i[a]), ib = static_cast<Eigen::Index>(sel_s[b]);
            raw(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) =
                c.n_i(ia, ia).real() * c.n_s(ib, ib).real() + std::norm(c.pair(ia, ib)) + std::norm(c.cross(ia, ib));
        }
    return raw;
}

struct NormalizedProbabilities {
    RMatrix p;
    double sum = 0;
    double clamped = 0;
};

inline NormalizedProbabilities normalize_coincidences(const RMatrix& raw) {
    NormalizedProbabilities out;
    out.p = raw;
    for (Eigen::Index i = 0; i < raw.size(); ++i) {
        double& v = out.p.data()[i];
        if (v < 0) {
            out.clamped += -v;
            v = 0;
        }
    }
    out.sum = out.p.sum();
    if (out.clamped > 0) {
        std::ostringstream os;
        os << "coincidences: clamped negative mass " << out.clamped << " (raw sum " << out.sum << ")";
        log_warn(os.str());
    }
    if (!(out.sum > 0) || !std::isfinite(out.sum))
        throw NormalizationError("no coincidences: coincidence matrix has zero total mass");
    out.p /= out.sum;
    return out;
}

/// dL/draw from dL/dp through clamp and normalization.
inline RMatrix normalize_backward(const RMatrix& raw, const NormalizedProbabilities& n, const RMatrix& dp) {
    const double dot = (n.p.array() * dp.array()).sum();
    RMatrix out = (dp.array() - dot) / n.sum;
    for (Eigen::Index i = 0; i < raw.size(); ++i)
        if (raw.data()[i] < 0) out.data()[i] = 0;
    return out;
}

inline CoincidenceMatrix g2(const CorrelationData& c, const ModeSet& idler, const ModeSet& signal, PostSelect rule_i,
                            PostSelect rule_s) {
    const auto si = selected_indices(idler, rule_i), ss = selected_indices(signal, rule_s);
    if (si.empty() || ss.empty()) throw ConfigError("g2: post-selection leaves no modes");
    const RMatrix raw = g2_raw(c, si, ss);
    const auto n = normalize_coincidences(raw);
    CoincidenceMatrix m;
    for (auto i : si) m.idler_modes.push_back(idler[i]);
    for (auto i : ss) m.signal_modes.push_back(signal[i]);
    m.values = n.p;
    m.clamped_mass = n.clamped;
    m.raw_sum = n.sum;
    return m;
}

inline CoincidenceMatrix g2(const CorrelationData& c, const ModeSet& idler, const ModeSet& signal) {
    return g2(c, idler, signal, idler.postselect, signal.postselect);
}

/// Adds dL/dcorrelations given dL/dp over the post-selected matrix.
inline void g2_backward(const CorrelationData& c, const std::vector<std::size_t>& sel_i,
                        const std::vector<std::size_t>& sel_s, const RMatrix& dp, CorrelationGrad& g) {
    const RMatrix raw = g2_raw(c, sel_i, sel_s);
    const auto n = normalize_coincidences(raw);
    const RMatrix draw = normalize_backward(raw, n, dp);
    for (std::size_t a = 0; a < sel_i.size(); ++a)
        for (std::size_t b = 0; b < sel_s.size(); ++b) {
            const double w = draw(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
            if (w == 0) continue;
            const auto ia = static_cast<Eigen::Index>(sel_i[a]), ib = static_cast<Eigen::Index>(sel_s[b]);
            g.n_i(ia, ia) += w * c.n_s(ib, ib).real();
            g.n_s(ib, ib) += w * c.n_i(ia, ia).real();
            g.pair(ia, ib) += 2.0 * w * c.pair(ia, ib);
            g.cross(ia, ib) += 2.0 * w * c.cross(ia, ib);
        }
}

namespace detail {

/// Gauss-Legendre nodes and weights on [a, b].
inline std::vector<std::pair<double, double>> gauss_legendre(int n, double a, double b) {
    std::vector<std::pair<double, double>> out(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        double x = std::cos(pi * (i + 0.75) / (n + 0.5));
        double dp = 0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1, p1 = x;
            for (int k = 2; k <= n; ++k) {
                const double p2 = ((2.0 * k - 1) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (x * p1 - p0) / (x * x - 1);
            const double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-15) break;
        }
        {
            double p0 = 1, p1 = x;
            for (int k = 2; k <= n; ++k) {
                const double p2 = ((2.0 * k - 1) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (x * p1 - p0) / (x * x - 1);
        }
        const double w = 2.0 / ((1 - x * x) * dp * dp);
        out[static_cast<std::size_t>(i)] = {0.5 * (b - a) * x + 0.5 * (b + a), 0.5 * (b - a) * w};
    }
    return out;
}

} // namespace detail

/// First-order biphoton amplitude by direct quadrature over the crystal:
/// integral over zeta and r of pump * chi * conj(M_i) * conj(M_s) * exp(-i dk zeta),
/// with analytic diffracting detection modes.
inline CMatrix biphoton_amplitude(const PumpProfile& pump, const CrystalHologram& crystal, const WaveParams& waves,
                                  const SimGrid& g, const ModeSet& idler, const ModeSet& signal, int z_nodes = 48,
                                  double min_ppw = default_min_points_per_waist) {
    const auto ni = static_cast<Eigen::Index>(idler.size()), ns = static_cast<Eigen::Index>(signal.size());
    CMatrix phi = CMatrix::Zero(ni, ns);
    const double area = g.cell_area();
    for (const auto& [z, w] : detail::gauss_legendre(z_nodes, 0.0, g.length)) {
        ComplexField2D src = pump.at(g, z);
        for (std::size_t c = 0; c < src.size(); ++c) src[c] *= crystal.transverse_envelope[c];
        std::vector<ComplexField2D> mi, ms;
        for (const auto& m : idler.modes) mi.push_back(synth_mode(m, g, z, waves.k_i, 1.0, min_ppw));
        for (const auto& m : signal.modes) ms.push_back(synth_mode(m, g, z, waves.k_s, 1.0, min_ppw));
        const cd carrier = std::polar(w * area, -waves.delta_k * z);
        for (Eigen::Index a = 0; a < ni; ++a) {
            ComplexField2D t = src;
            for (std::size_t c = 0; c < t.size(); ++c) t[c] *= std::conj(mi[static_cast<std::size_t>(a)][c]);
            for (Eigen::Index b = 0; b < ns; ++b) {
                cd s{};
                const auto& mb = ms[static_cast<std::size_t>(b)];
                for (std::size_t c = 0; c < t.size(); ++c) s += t[c] * std::conj(mb[c]);
                phi(a, b) += carrier * s;
            }
        }
    }
    return phi;
}

inline CoincidenceMatrix first_order_oracle(const PumpProfile& pump, const CrystalHologram& crystal,
                                            const WaveParams& waves, const SimGrid& g, const ModeSet& idler,
                                            const ModeSet& signal, int z_nodes = 48,
                                            double min_ppw = default_min_points_per_waist) {
    const CMatrix phi = biphoton_amplitude(pump, crystal, waves, g, idler, signal, z_nodes, min_ppw);
    const auto si = idler.selected(), ss = signal.selected();
    RMatrix raw(static_cast<Eigen::Index>(si.size()), static_cast<Eigen::Index>(ss.size()));
    for (std::size_t a = 0; a < si.size(); ++a)
        for (std::size_t b = 0; b < ss.size(); ++b)
            raw(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) =
                std::norm(phi(static_cast<Eigen::Index>(si[a]), static_cast<Eigen::Index>(ss[b])));
    const auto n = normalize_coincidences(raw);
    CoincidenceMatrix m;
    for (auto i : si) m.idler_modes.push_back(idler[i]);
    for (auto i : ss) m.signal_modes.push_back(signal[i]);
    m.values = n.p;
    m.raw_sum = n.sum;
    return m;
}

inline CoincidenceMatrix first_order_oracle(const ParamVector& theta, const WaveParams& waves, const SimGrid& g,
                                            const MediumSettings& ms, const ModeSet& idler, const ModeSet& signal,
                                            int z_nodes = 48) {
    return first_order_oracle(synth_pump(theta, g, waves, ms), synth_crystal(theta, g, waves, ms), waves, g, idler,
                              signal, z_nodes, ms.min_points_per_waist);
}

inline double relative_l1(const RMatrix& a, const RMatrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError("relative_l1: shape mismatch");
    return (a - b).cwiseAbs().sum() / b.cwiseAbs().sum();
}

/// Mass of entries whose LG azimuthal indices do not sum to l_p.
inline double oam_off_diagonal_mass(const CoincidenceMatrix& m, int l_pump) {
    double off = 0;
    for (Eigen::Index a = 0; a < m.rows(); ++a)
        for (Eigen::Index b = 0; b < m.cols(); ++b)
            if (m.idler_modes[static_cast<std::size_t>(a)].index1 + m.signal_modes[static_cast<std::size_t>(b)].index1 !=
                l_pump)
                off += m(a, b);
    return off / m.values.sum();
}

} // namespace spdcinv
