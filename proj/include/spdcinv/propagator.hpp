#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "errors.hpp"
#include "grid.hpp"
#include "medium.hpp"
#include "rng.hpp"

namespace spdcinv {

/// Idler/signal output and vacuum fields of one vacuum realization.
struct FieldQuartet {
    ComplexField2D i_out, i_vac, s_out, s_vac;

    FieldQuartet() = default;
    explicit FieldQuartet(const SimGrid& g) : i_out(g), i_vac(g), s_out(g), s_vac(g) {}

    void require_consistent() const {
        i_out.require_same(i_vac);
        i_out.require_same(s_out);
        i_out.require_same(s_vac);
    }
    bool all_finite() const { return i_out.all_finite() && i_vac.all_finite() && s_out.all_finite() && s_vac.all_finite(); }
};

struct NoiseSpec {
    long n_realizations = 500;
    std::uint64_t master_seed = 1;
    double sigma = 1.0;  // std per quadrature per cell
    std::uint64_t first_realization = 0;  // realization r draws substream first_realization + r

    void validate() const {
        if (n_realizations < 1) throw ConfigError("noise: n_realizations must be >= 1");
        if (!(sigma > 0)) throw ConfigError("noise: sigma must be positive");
    }
};

/// Vacuum fields of realization r; out fields zero.
inline FieldQuartet init_vacuum(const NoiseSpec& noise, const SimGrid& g, long r) {
    FieldQuartet q(g);
    const auto sub = noise.first_realization + static_cast<std::uint64_t>(r);
    const NormalStream idler(noise.master_seed, StreamId::idler_vacuum, sub);
    const NormalStream signal(noise.master_seed, StreamId::signal_vacuum, sub);
    for (std::size_t c = 0; c < q.i_vac.size(); ++c) {
        q.i_vac[c] = idler.complex(static_cast<std::uint32_t>(c), noise.sigma);
        q.s_vac[c] = signal.complex(static_cast<std::uint32_t>(c), noise.sigma);
    }
    return q;
}

inline std::vector<FieldQuartet> init_vacuum(const NoiseSpec& noise, const SimGrid& g) {
    noise.validate();
    std::vector<FieldQuartet> out;
    out.reserve(static_cast<std::size_t>(noise.n_realizations));
    for (long r = 0; r < noise.n_realizations; ++r) out.push_back(init_vacuum(noise, g, r));
    return out;
}

/// Pump and crystal sampled on the propagation planes. kappa_j at step n is
/// coupling[j] * chi * pump[n]; a single pump plane is shared by all steps when
/// the pump does not diffract.
struct CouplingProfile {
    ComplexField2D chi;
    std::vector<ComplexField2D> pump;
    std::vector<ComplexField2D> product;  // chi * pump[n]
    double c_i = 0, c_s = 0;
    double delta_k = 0;

    std::size_t plane_of(long step) const { return product.size() == 1 ? 0 : static_cast<std::size_t>(step); }
};

/// Samples the pump at the midpoint of every step.
inline CouplingProfile build_coupling(const PumpProfile& pump, const CrystalHologram& crystal, const WaveParams& waves,
                                      const SimGrid& g) {
    if (!crystal.transverse_envelope.on(g) || !pump.envelope.on(g)) throw ShapeError("coupling: grid mismatch");
    CouplingProfile c;
    c.chi = crystal.transverse_envelope;
    if (pump.diffracting) {
        for (long n = 0; n < g.nz; ++n) c.pump.push_back(pump.at(g, (static_cast<double>(n) + 0.5) * g.dz));
    } else {
        c.pump.push_back(pump.envelope);
    }
    for (const auto& e : c.pump) {
        ComplexField2D p = e;
        for (std::size_t i = 0; i < p.size(); ++i) p[i] *= c.chi[i];
        c.product.push_back(std::move(p));
    }
    c.c_i = coupling_constant(waves, Wave::idler);
    c.c_s = coupling_constant(waves, Wave::signal);
    c.delta_k = waves.delta_k;
    return c;
}

struct PropagatorOptions {
    /// Test fixture: negates the coupling of the signal equations.
    bool flip_signal_coupling = false;
};

namespace detail {

/// Nonlinear substep with coefficients frozen over the step, exact to second
/// order in h. Both (i_out, s_vac) and (i_vac, s_out) pairs share coefficients.
struct PairCoefficients {
    cd a_i, a_s, b_i, b_s;
};

inline PairCoefficients pair_coefficients(cd kappa_i, cd kappa_s, cd phase, double h) {
    const cd j{0.0, 1.0};
    return {1.0 + 0.5 * h * h * kappa_i * std::conj(kappa_s), 1.0 + 0.5 * h * h * kappa_s * std::conj(kappa_i),
            -j * h * kappa_i * phase, -j * h * kappa_s * phase};
}

inline void apply_pair(const PairCoefficients& k, cd& io, cd& iv, cd& so, cd& sv) {
    const cd io0 = io, iv0 = iv, so0 = so, sv0 = sv;
    io = k.a_i * io0 + k.b_i * std::conj(sv0);
    sv = k.a_s * sv0 + k.b_s * std::conj(io0);
    iv = k.a_i * iv0 + k.b_i * std::conj(so0);
    so = k.a_s * so0 + k.b_s * std::conj(iv0);
}

} // namespace detail

/// One Strang step: half diffraction, nonlinear coupling with kappa frozen at
/// the step midpoint zeta + dz/2, half diffraction.
inline void ssf_step(FieldQuartet& q, const ComplexField2D& kappa_s, const ComplexField2D& kappa_i, double delta_k,
                     double zeta, double dz, const WaveParams& waves, const SimGrid& g) {
    q.require_consistent();
    q.i_out.require_same(kappa_s);
    q.i_out.require_same(kappa_i);
    if (!q.i_out.on(g)) throw ShapeError("ssf_step: fields not on grid");
    const LinearStep half_i(g, waves.k_i, 0.5 * dz), half_s(g, waves.k_s, 0.5 * dz);
    half_i.apply(q.i_out);
    half_i.apply(q.i_vac);
    half_s.apply(q.s_out);
    half_s.apply(q.s_vac);
    const cd phase = std::polar(1.0, -delta_k * (zeta + 0.5 * dz));
    for (std::size_t c = 0; c < q.i_out.size(); ++c) {
        const auto k = detail::pair_coefficients(kappa_i[c], kappa_s[c], phase, dz);
        detail::apply_pair(k, q.i_out[c], q.i_vac[c], q.s_out[c], q.s_vac[c]);
    }
    half_i.apply(q.i_out);
    half_i.apply(q.i_vac);
    half_s.apply(q.s_out);
    half_s.apply(q.s_vac);
    if (!q.all_finite()) throw NumericalError("propagation became non-finite in the step at zeta = " + std::to_string(zeta));
}

/// Fused Strang integrator through the whole crystal: consecutive half steps
/// of diffraction are merged into full steps.
class Propagator {
public:
    Propagator(const SimGrid& g, const WaveParams& waves, std::shared_ptr<const CouplingProfile> coupling,
               PropagatorOptions opts = {})
        : grid_(g), waves_(waves), coupling_(std::move(coupling)), opts_(opts),
          half_i_(g, waves.k_i, 0.5 * g.dz), half_s_(g, waves.k_s, 0.5 * g.dz),
          full_i_(g, waves.k_i, g.dz), full_s_(g, waves.k_s, g.dz) {
        if (!coupling_) throw ConfigError("propagator: missing coupling profile");
        if (!coupling_->chi.on(g)) throw ShapeError("propagator: coupling not on grid");
        if (coupling_->product.size() != 1 && coupling_->product.size() != static_cast<std::size_t>(g.nz))
            throw ShapeError("propagator: coupling plane count does not match step count");
    }

    const SimGrid& grid() const { return grid_; }
    const CouplingProfile& coupling() const { return *coupling_; }

    /// Propagates q from the input facet to the output facet. With `trace`,
    /// stores the fields entering every nonlinear substep (nz entries).
    void run(FieldQuartet& q, std::vector<FieldQuartet>* trace = nullptr) const {
        q.require_consistent();
        if (!q.i_out.on(grid_)) throw ShapeError("propagate: fields not on grid");
        if (trace) trace->resize(static_cast<std::size_t>(grid_.nz));
        linear(q, half_i_, half_s_, false);
        for (long n = 0; n < grid_.nz; ++n) {
            if (trace) copy_into((*trace)[static_cast<std::size_t>(n)], q);
            nonlinear(q, n);
            if (n + 1 < grid_.nz)
                linear(q, full_i_, full_s_, false);
            else
                linear(q, half_i_, half_s_, false);
        }
    }

    /// Reverse sweep. `grad` holds dL/dRe + i dL/dIm of the output fields and
    /// is overwritten with the gradient at the input facet; the gradient with
    /// respect to every coupling plane (chi * pump) is added to `g_planes`.
    void backward(const std::vector<FieldQuartet>& trace, FieldQuartet& grad, std::vector<ComplexField2D>& g_planes) const {
        if (trace.size() != static_cast<std::size_t>(grid_.nz)) throw ShapeError("backward: trace length mismatch");
        if (g_planes.size() != coupling_->product.size()) throw ShapeError("backward: plane gradient count mismatch");
        linear(grad, half_i_, half_s_, true);
        for (long n = grid_.nz - 1; n >= 0; --n) {
            nonlinear_adjoint(trace[static_cast<std::size_t>(n)], grad, n, g_planes[coupling_->plane_of(n)]);
            if (n > 0)
                linear(grad, full_i_, full_s_, true);
            else
                linear(grad, half_i_, half_s_, true);
        }
    }

private:
    static void copy_into(FieldQuartet& dst, const FieldQuartet& src) {
        if (dst.i_out.size() != src.i_out.size()) {
            dst = src;
            return;
        }
        std::copy(src.i_out.data.begin(), src.i_out.data.end(), dst.i_out.data.begin());
        std::copy(src.i_vac.data.begin(), src.i_vac.data.end(), dst.i_vac.data.begin());
        std::copy(src.s_out.data.begin(), src.s_out.data.end(), dst.s_out.data.begin());
        std::copy(src.s_vac.data.begin(), src.s_vac.data.end(), dst.s_vac.data.begin());
    }

    static void linear(FieldQuartet& q, const LinearStep& li, const LinearStep& ls, bool adjoint) {
        if (adjoint) {
            li.apply_adjoint(q.i_out.data.data());
            li.apply_adjoint(q.i_vac.data.data());
            ls.apply_adjoint(q.s_out.data.data());
            ls.apply_adjoint(q.s_vac.data.data());
        } else {
            li.apply(q.i_out);
            li.apply(q.i_vac);
            ls.apply(q.s_out);
            ls.apply(q.s_vac);
        }
    }

    double signal_sign() const { return opts_.flip_signal_coupling ? -1.0 : 1.0; }
    cd step_phase(long n) const {
        return std::polar(1.0, -coupling_->delta_k * (static_cast<double>(n) + 0.5) * grid_.dz);
    }

    void nonlinear(FieldQuartet& q, long n) const {
        const auto& plane = coupling_->product[coupling_->plane_of(n)];
        const double h = grid_.dz;
        const double ci = coupling_->c_i, cs = signal_sign() * coupling_->c_s;
        const cd phase = step_phase(n);
        double acc = 0.0;
        cd* io = q.i_out.data.data();
        cd* iv = q.i_vac.data.data();
        cd* so = q.s_out.data.data();
        cd* sv = q.s_vac.data.data();
        const std::size_t cells = plane.size();
        for (std::size_t c = 0; c < cells; ++c) {
            const cd p = plane[c];
            const auto k = detail::pair_coefficients(ci * p, cs * p, phase, h);
            detail::apply_pair(k, io[c], iv[c], so[c], sv[c]);
            acc += std::norm(io[c]) + std::norm(so[c]) + std::norm(iv[c]) + std::norm(sv[c]);
        }
        if (!std::isfinite(acc))
            throw NumericalError("propagation became non-finite at step " + std::to_string(n) + " of " +
                                 std::to_string(grid_.nz) + " (zeta = " +
                                 std::to_string((static_cast<double>(n) + 0.5) * grid_.dz) + " m)");
    }

    void nonlinear_adjoint(const FieldQuartet& x, FieldQuartet& g, long n, ComplexField2D& g_plane) const {
        const auto& plane = coupling_->product[coupling_->plane_of(n)];
        const double h = grid_.dz;
        const double sigma = signal_sign();
        const double ci = coupling_->c_i, cs = sigma * coupling_->c_s;
        const cd phase = step_phase(n);
        const cd j{0.0, 1.0};
        const cd jh_conj_phase = j * h * std::conj(phase);
        const double quad = h * h * ci * cs;
        cd* gio = g.i_out.data.data();
        cd* giv = g.i_vac.data.data();
        cd* gso = g.s_out.data.data();
        cd* gsv = g.s_vac.data.data();
        const std::size_t cells = plane.size();
        for (std::size_t c = 0; c < cells; ++c) {
            const cd p = plane[c];
            const auto k = detail::pair_coefficients(ci * p, cs * p, phase, h);
            const cd io = x.i_out[c], iv = x.i_vac[c], so = x.s_out[c], sv = x.s_vac[c];
            const cd g_io = gio[c], g_iv = giv[c], g_so = gso[c], g_sv = gsv[c];
            const double re = (std::conj(g_io) * io + std::conj(g_sv) * sv + std::conj(g_iv) * iv +
                               std::conj(g_so) * so).real();
            g_plane[c] += quad * p * re + jh_conj_phase * (ci * (g_io * sv + g_iv * so) + cs * (g_sv * io + g_so * iv));
            gio[c] = std::conj(k.a_i) * g_io + k.b_s * std::conj(g_sv);
            gsv[c] = std::conj(k.a_s) * g_sv + k.b_i * std::conj(g_io);
            giv[c] = std::conj(k.a_i) * g_iv + k.b_s * std::conj(g_so);
            gso[c] = std::conj(k.a_s) * g_so + k.b_i * std::conj(g_iv);
        }
    }

    SimGrid grid_;
    WaveParams waves_;
    std::shared_ptr<const CouplingProfile> coupling_;
    PropagatorOptions opts_;
    LinearStep half_i_, half_s_, full_i_, full_s_;
};

/// Propagates a whole ensemble in place.
inline void propagate(std::vector<FieldQuartet>& ensemble, const Propagator& prop) {
    for (auto& q : ensemble) prop.run(q);
}

} // namespace spdcinv
