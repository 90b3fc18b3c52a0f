#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "errors.hpp"
#include "grid.hpp"
#include "medium.hpp"
#include "observables.hpp"
#include "parallel.hpp"
#include "propagator.hpp"

namespace spdcinv {

struct ForwardConfig {
    SimGrid grid;
    WaveParams waves;
    MediumSettings medium;
    NoiseSpec noise;
    ModeSet idler, signal;  // detection sets; waists and waist planes set
    PropagatorOptions propagator;
    unsigned workers = 0;   // 0: SPDCINV_WORKERS or hardware threads
    long block_size = 8;    // realizations per gradient reduction block
};

struct Evaluation {
    PumpProfile pump;
    CrystalHologram crystal;
    std::shared_ptr<const CouplingProfile> coupling;
    ModeAmplitudeSamples samples;
    CorrelationData corr;
};

/// Loss over correlation data; when `grad` is non-null it receives dL/dcorr.
using CorrelationObjective = std::function<double(const CorrelationData&, CorrelationGrad*)>;

struct GradientResult {
    double loss = 0;
    std::vector<double> grad;  // flat ParamVector layout
    CorrelationData corr;
};

class ForwardModel {
public:
    explicit ForwardModel(ForwardConfig cfg)
        : cfg_(std::move(cfg)),
          bank_(std::make_shared<DetectionBank>(cfg_.idler, cfg_.signal, cfg_.grid, cfg_.waves,
                                                cfg_.medium.min_points_per_waist)) {
        cfg_.noise.validate();
        if (cfg_.block_size < 1) throw ConfigError("forward: block_size must be >= 1");
    }

    const ForwardConfig& config() const { return cfg_; }
    const DetectionBank& bank() const { return *bank_; }
    unsigned workers() const { return cfg_.workers ? cfg_.workers : worker_count(); }

    Evaluation evaluate(const PumpProfile& pump, const CrystalHologram& crystal) const {
        Evaluation e;
        e.pump = pump;
        e.crystal = crystal;
        e.coupling = std::make_shared<CouplingProfile>(build_coupling(pump, crystal, cfg_.waves, cfg_.grid));
        const Propagator prop(cfg_.grid, cfg_.waves, e.coupling, cfg_.propagator);
        e.samples = sample_ensemble(prop, *bank_, cfg_.noise, workers());
        e.corr = first_order_moments(e.samples);
        return e;
    }

    Evaluation evaluate(const ParamVector& theta, const PumpProfile* pump_override = nullptr) const {
        const auto crystal = synth_crystal(theta, cfg_.grid, cfg_.waves, cfg_.medium);
        if (pump_override) return evaluate(*pump_override, crystal);
        return evaluate(synth_pump(theta, cfg_.grid, cfg_.waves, cfg_.medium), crystal);
    }

    /// Loss and dL/dtheta with the noise seed frozen. Two passes: the first
    /// propagates and projects, the second re-propagates each realization with
    /// a stored trace and runs the reverse sweep. Plane gradients are summed in
    /// fixed blocks in block order, so the result is independent of workers.
    GradientResult gradient(const ParamVector& theta, const CorrelationObjective& objective) const {
        const auto& g = cfg_.grid;
        const auto pump = synth_pump(theta, g, cfg_.waves, cfg_.medium);
        const auto crystal = synth_crystal(theta, g, cfg_.waves, cfg_.medium);
        auto coupling = std::make_shared<CouplingProfile>(build_coupling(pump, crystal, cfg_.waves, g));
        const Propagator prop(g, cfg_.waves, coupling, cfg_.propagator);
        const unsigned nw = workers();

        GradientResult out;
        const auto samples = sample_ensemble(prop, *bank_, cfg_.noise, nw);
        out.corr = first_order_moments(samples);
        auto cg = CorrelationGrad::zeros(samples.n_i, samples.n_s);
        out.loss = objective(out.corr, &cg);
        const auto sg = backprop_moments(samples, cg);

        const std::size_t planes = coupling->product.size();
        std::vector<ComplexField2D> total(planes, ComplexField2D(g));
        const long n_real = cfg_.noise.n_realizations;
        const long bs = cfg_.block_size;
        const long n_blocks = (n_real + bs - 1) / bs;
        const long wave = static_cast<long>(nw);
        std::vector<std::vector<ComplexField2D>> block_buf(static_cast<std::size_t>(wave));
        std::vector<std::vector<FieldQuartet>> traces(nw);
        for (long first = 0; first < n_blocks; first += wave) {
            const long count = std::min(wave, n_blocks - first);
            parallel_for(static_cast<std::size_t>(count), nw, [&](std::size_t slot, unsigned w) {
                auto& buf = block_buf[slot];
                if (buf.size() != planes) buf.assign(planes, ComplexField2D(g));
                for (auto& p : buf) std::fill(p.data.begin(), p.data.end(), cd{});
                const long b = first + static_cast<long>(slot);
                FieldQuartet grad(g);
                for (long r = b * bs; r < std::min(n_real, (b + 1) * bs); ++r) {
                    auto q = init_vacuum(cfg_.noise, g, r);
                    prop.run(q, &traces[w]);
                    const auto ri = static_cast<std::size_t>(r);
                    bank_->inject(&sg.i_out[ri * sg.n_i], &sg.i_vac[ri * sg.n_i], &sg.s_out[ri * sg.n_s],
                                  &sg.s_vac[ri * sg.n_s], grad);
                    prop.backward(traces[w], grad, buf);
                }
            });
            for (long s = 0; s < count; ++s)
                for (std::size_t p = 0; p < planes; ++p) total[p] += block_buf[static_cast<std::size_t>(s)][p];
        }
        out.grad = parameter_gradient(theta, pump, *coupling, total);
        for (std::size_t i = 0; i < out.grad.size(); ++i) {
            if (!theta.trainable(i)) {
                out.grad[i] = 0.0;
                continue;
            }
            if (!std::isfinite(out.grad[i]))
                throw NumericalError("gradient: non-finite value for parameter " + std::to_string(i) + " (" +
                                     theta.scalar_name(i) + ")");
        }
        return out;
    }

    /// Chains plane gradients (w.r.t. chi * pump on every plane) to the flat
    /// ParamVector scalars.
    std::vector<double> parameter_gradient(const ParamVector& theta, const PumpProfile& pump,
                                           const CouplingProfile& coupling,
                                           const std::vector<ComplexField2D>& g_planes) const {
        const auto& g = cfg_.grid;
        const auto& ms = cfg_.medium;
        std::vector<double> grad(theta.n_scalars(), 0.0);
        const std::size_t cells = g.cells();

        ComplexField2D g_chi(g);
        for (std::size_t n = 0; n < g_planes.size(); ++n)
            for (std::size_t c = 0; c < cells; ++c) g_chi[c] += std::conj(coupling.pump[n][c]) * g_planes[n][c];

        for (std::size_t m = 0; m < theta.n_crystal(); ++m) {
            const auto f = crystal_basis_function(theta.crystal_mode(m), g, ms.nlpc_2d, ms.min_points_per_waist);
            cd ga{};
            cd gw{};
            for (std::size_t c = 0; c < cells; ++c) {
                ga += std::conj(f.value[c]) * g_chi[c];
                gw += std::conj(f.d_waist[c]) * g_chi[c];
            }
            grad[theta.crystal_re(m)] = ga.real();
            grad[theta.crystal_re(m) + 1] = ga.imag();
            grad[theta.crystal_waist(m)] = (std::conj(theta.crystal_coeffs[m]) * gw).real();
        }

        std::vector<cd> gb(theta.n_pump(), cd{}), gw(theta.n_pump(), cd{});
        for (std::size_t n = 0; n < g_planes.size(); ++n) {
            ComplexField2D g_pump(g);
            for (std::size_t c = 0; c < cells; ++c) g_pump[c] = std::conj(coupling.chi[c]) * g_planes[n][c];
            const double z = pump.diffracting ? (static_cast<double>(n) + 0.5) * g.dz : ms.pump_waist_plane_z;
            for (std::size_t m = 0; m < theta.n_pump(); ++m) {
                ModeSpec spec = theta.pump_mode(m);
                spec.waist_plane_z = ms.pump_waist_plane_z;
                const double k = pump.diffracting ? cfg_.waves.k_p : 0.0;
                const auto f = synth_mode_dwaist(spec, g, z, k, false, ms.min_points_per_waist);
                cd a{}, b{};
                for (std::size_t c = 0; c < cells; ++c) {
                    a += std::conj(f.value[c]) * g_pump[c];
                    b += std::conj(f.d_waist[c]) * g_pump[c];
                }
                gb[m] += a;
                gw[m] += b;
            }
        }
        for (std::size_t m = 0; m < theta.n_pump(); ++m) {
            const cd ga = ms.pump_amplitude * gb[m];
            grad[theta.pump_re(m)] = ga.real();
            grad[theta.pump_re(m) + 1] = ga.imag();
            grad[theta.pump_waist(m)] = (std::conj(ms.pump_amplitude * theta.pump_coeffs[m]) * gw[m]).real();
        }
        return grad;
    }

private:
    ForwardConfig cfg_;
    std::shared_ptr<DetectionBank> bank_;
};

} // namespace spdcinv
