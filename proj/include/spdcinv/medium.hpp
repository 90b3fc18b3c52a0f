#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "errors.hpp"
#include "grid.hpp"
#include "modes.hpp"
#include "rng.hpp"

namespace spdcinv {

/// Learnable pump and crystal expansions. Each coefficient multiplies one basis
/// function whose waist is taken from the matching waist entry (the waist stored
/// in the ModeSpec itself is ignored).
///
/// Flat scalar layout used by masks and gradients:
///   [pump re/im pairs | pump waists | crystal re/im pairs | crystal waists]
struct ParamVector {
    ModeSet pump_basis;
    ModeSet crystal_basis;
    std::vector<cd> pump_coeffs;
    std::vector<double> pump_waists;
    std::vector<cd> crystal_coeffs;
    std::vector<double> crystal_waists;
    std::vector<bool> trainable_mask;  // empty: everything trainable

    std::size_t n_pump() const { return pump_basis.size(); }
    std::size_t n_crystal() const { return crystal_basis.size(); }
    std::size_t n_scalars() const { return 3 * (n_pump() + n_crystal()); }

    std::size_t pump_re(std::size_t n) const { return 2 * n; }
    std::size_t pump_waist(std::size_t n) const { return 2 * n_pump() + n; }
    std::size_t crystal_re(std::size_t n) const { return 3 * n_pump() + 2 * n; }
    std::size_t crystal_waist(std::size_t n) const { return 3 * n_pump() + 2 * n_crystal() + n; }

    bool is_waist(std::size_t i) const {
        return (i >= 2 * n_pump() && i < 3 * n_pump()) || i >= 3 * n_pump() + 2 * n_crystal();
    }
    bool trainable(std::size_t i) const { return trainable_mask.empty() || trainable_mask[i]; }

    void validate() const {
        pump_basis.validate_indices();
        crystal_basis.validate_indices();
        if (pump_coeffs.size() != n_pump() || pump_waists.size() != n_pump())
            throw ConfigError("params: pump coefficient/waist count differs from pump basis size " +
                              std::to_string(n_pump()));
        if (crystal_coeffs.size() != n_crystal() || crystal_waists.size() != n_crystal())
            throw ConfigError("params: crystal coefficient/waist count differs from crystal basis size " +
                              std::to_string(n_crystal()));
        for (double w : pump_waists)
            if (!(w > 0) || !std::isfinite(w)) throw ConfigError("params: pump waists must be positive");
        for (double w : crystal_waists)
            if (!(w > 0) || !std::isfinite(w)) throw ConfigError("params: crystal waists must be positive");
        if (!trainable_mask.empty() && trainable_mask.size() != n_scalars())
            throw ConfigError("params: trainable mask has " + std::to_string(trainable_mask.size()) +
                              " entries, expected " + std::to_string(n_scalars()));
    }

    std::vector<double> flat() const {
        std::vector<double> v(n_scalars());
        for (std::size_t n = 0; n < n_pump(); ++n) {
            v[pump_re(n)] = pump_coeffs[n].real();
            v[pump_re(n) + 1] = pump_coeffs[n].imag();
            v[pump_waist(n)] = pump_waists[n];
        }
        for (std::size_t n = 0; n < n_crystal(); ++n) {
            v[crystal_re(n)] = crystal_coeffs[n].real();
            v[crystal_re(n) + 1] = crystal_coeffs[n].imag();
            v[crystal_waist(n)] = crystal_waists[n];
        }
        return v;
    }

    void set_flat(const std::vector<double>& v) {
        if (v.size() != n_scalars()) throw ShapeError("params: flat vector has wrong length");
        for (std::size_t n = 0; n < n_pump(); ++n) {
            pump_coeffs[n] = {v[pump_re(n)], v[pump_re(n) + 1]};
            pump_waists[n] = v[pump_waist(n)];
        }
        for (std::size_t n = 0; n < n_crystal(); ++n) {
            crystal_coeffs[n] = {v[crystal_re(n)], v[crystal_re(n) + 1]};
            crystal_waists[n] = v[crystal_waist(n)];
        }
    }

    std::string scalar_name(std::size_t i) const {
        auto mode_name = [](const ModeSet& s, std::size_t n) { return s[n].label(); };
        if (i < 2 * n_pump()) return "pump[" + mode_name(pump_basis, i / 2) + "]." + (i % 2 ? "im" : "re");
        if (i < 3 * n_pump()) return "pump[" + mode_name(pump_basis, i - 2 * n_pump()) + "].waist";
        const std::size_t j = i - 3 * n_pump();
        if (j < 2 * n_crystal()) return "crystal[" + mode_name(crystal_basis, j / 2) + "]." + (j % 2 ? "im" : "re");
        return "crystal[" + mode_name(crystal_basis, j - 2 * n_crystal()) + "].waist";
    }

    ModeSpec pump_mode(std::size_t n) const {
        ModeSpec m = pump_basis[n];
        m.waist = pump_waists[n];
        return m;
    }
    ModeSpec crystal_mode(std::size_t n) const {
        ModeSpec m = crystal_basis[n];
        m.waist = crystal_waists[n];
        return m;
    }
};

/// Trainable-mask presets.
enum class MaskPreset { all, pump_only, crystal_only, pump_waists_only, crystal_coeffs_only, none };

inline std::vector<bool> make_mask(const ParamVector& p, MaskPreset preset) {
    std::vector<bool> m(p.n_scalars(), false);
    for (std::size_t i = 0; i < m.size(); ++i) {
        const bool pump = i < 3 * p.n_pump();
        switch (preset) {
        case MaskPreset::all: m[i] = true; break;
        case MaskPreset::pump_only: m[i] = pump; break;
        case MaskPreset::crystal_only: m[i] = !pump; break;
        case MaskPreset::pump_waists_only: m[i] = pump && p.is_waist(i); break;
        case MaskPreset::crystal_coeffs_only: m[i] = !pump && !p.is_waist(i); break;
        case MaskPreset::none: break;
        }
    }
    return m;
}

/// Settings of the medium that are not learned.
struct MediumSettings {
    double pump_amplitude = 100.0;      // volts: multiplies the unit-norm pump expansion
    double pump_waist_plane_z = 0.5e-3; // relative to the input facet
    bool pump_diffraction = true;       // evaluate the pump as a diffracting beam at each plane
    bool nlpc_2d = false;               // crystal patterned along y only, pump HG with m = 0
    double min_points_per_waist = default_min_points_per_waist;
};

/// Pump described by its mode expansion. Without diffraction every plane sees
/// the envelope at the waist plane.
struct PumpProfile {
    std::vector<ModeTerm> terms;  // unit-norm modes with their coefficients
    double amplitude = 1.0;
    double k = 0.0;
    bool diffracting = false;
    double min_points_per_waist = default_min_points_per_waist;
    ComplexField2D envelope;  // at the waist plane, already scaled by amplitude

    ComplexField2D at(const SimGrid& g, double z) const {
        if (!diffracting || terms.empty()) return envelope;
        ComplexField2D out(g);
        for (const auto& t : terms) {
            if (t.coefficient == cd{}) continue;
            const auto m = synth_mode(t.mode, g, z, k, 1.0, min_points_per_waist);
            const cd c = amplitude * t.coefficient;
            for (std::size_t i = 0; i < out.size(); ++i) out[i] += c * m[i];
        }
        return out;
    }
};

/// Transverse crystal envelope modulating the first QPM harmonic.
struct CrystalHologram {
    ComplexField2D transverse_envelope;
    double qpm_period = 0;
    double d24 = 0;
};

inline void check_nlpc_2d(const ParamVector& theta) {
    for (const auto& m : theta.crystal_basis.modes)
        if (m.basis != Basis::HG || m.index1 != 0)
            throw ConfigError("nlpc_2d: crystal basis must be HG with n = 0 (got " + m.label() + ")");
    for (const auto& m : theta.pump_basis.modes)
        if (m.basis != Basis::HG || m.index2 != 0)
            throw ConfigError("nlpc_2d: pump basis must be HG with m = 0 (got " + m.label() + ")");
}

inline PumpProfile synth_pump(const ParamVector& theta, const SimGrid& g, const WaveParams& waves,
                              const MediumSettings& ms) {
    theta.validate();
    if (ms.nlpc_2d) check_nlpc_2d(theta);
    if (theta.n_pump() == 0) throw ConfigError("params: pump basis is empty");
    PumpProfile p;
    p.amplitude = ms.pump_amplitude;
    p.k = waves.k_p;
    p.diffracting = ms.pump_diffraction;
    p.min_points_per_waist = ms.min_points_per_waist;
    p.envelope = ComplexField2D(g);
    for (std::size_t n = 0; n < theta.n_pump(); ++n) {
        ModeSpec m = theta.pump_mode(n);
        m.waist_plane_z = ms.pump_waist_plane_z;
        p.terms.push_back({theta.pump_coeffs[n], m});
        const auto f = synth_mode(m, g, m.waist_plane_z, waves.k_p, 1.0, ms.min_points_per_waist);
        const cd c = ms.pump_amplitude * theta.pump_coeffs[n];
        for (std::size_t i = 0; i < f.size(); ++i) p.envelope[i] += c * f[i];
    }
    return p;
}

/// Pump built from an explicit superposition, e.g. an inference-time override.
inline PumpProfile pump_from_terms(std::vector<ModeTerm> terms, const SimGrid& g, const WaveParams& waves,
                                   const MediumSettings& ms) {
    if (terms.empty()) throw ConfigError("pump override: empty superposition");
    PumpProfile p;
    p.amplitude = ms.pump_amplitude;
    p.k = waves.k_p;
    p.diffracting = ms.pump_diffraction;
    p.min_points_per_waist = ms.min_points_per_waist;
    p.envelope = ComplexField2D(g);
    for (auto& t : terms) {
        t.mode.waist_plane_z = ms.pump_waist_plane_z;
        const auto f = synth_mode(t.mode, g, t.mode.waist_plane_z, waves.k_p, 1.0, ms.min_points_per_waist);
        for (std::size_t i = 0; i < f.size(); ++i) p.envelope[i] += ms.pump_amplitude * t.coefficient * f[i];
    }
    p.terms = std::move(terms);
    return p;
}

/// One crystal basis function, peak-normalized (the fundamental peaks at 1),
/// with its waist derivative. In 2D-NLPC mode the function depends on y only.
inline ModeWithDerivative crystal_basis_function(const ModeSpec& s, const SimGrid& g, bool nlpc_2d,
                                                 double min_ppw = default_min_points_per_waist) {
    if (!nlpc_2d) return synth_mode_dwaist(s, g, s.waist_plane_z, 0.0, true, min_ppw);
    using D = Dual<double>;
    s.validate();
    detail::check_resolution(s, s.waist, g, min_ppw);
    const D w(s.waist, 1.0);
    const int m = s.index2;
    // 1D Hermite-Gauss in y scaled so that m = 0 peaks at 1.
    const double c = 1.0 / std::sqrt(std::ldexp(1.0, m) * detail::factorial(m));
    ModeWithDerivative out{ComplexField2D(g), ComplexField2D(g)};
    for (long iy = 0; iy < g.ny; ++iy) {
        const D u = D(std::sqrt(2.0) * g.y_at(iy)) / w;
        const D val = D(c) * detail::hermite(m, u) * exp(D(-0.5) * u * u);
        for (long ix = 0; ix < g.nx; ++ix) {
            out.value(ix, iy) = val.v;
            out.d_waist(ix, iy) = val.d;
        }
    }
    return out;
}

inline CrystalHologram synth_crystal(const ParamVector& theta, const SimGrid& g, const WaveParams& waves,
                                     const MediumSettings& ms) {
    theta.validate();
    if (ms.nlpc_2d) check_nlpc_2d(theta);
    CrystalHologram c;
    c.qpm_period = waves.poling_period;
    c.d24 = waves.d24;
    if (theta.n_crystal() == 0) {
        c.transverse_envelope = ComplexField2D(g, cd{1.0, 0.0});
        return c;
    }
    c.transverse_envelope = ComplexField2D(g);
    for (std::size_t n = 0; n < theta.n_crystal(); ++n) {
        const auto f = crystal_basis_function(theta.crystal_mode(n), g, ms.nlpc_2d, ms.min_points_per_waist);
        const cd a = theta.crystal_coeffs[n];
        for (std::size_t i = 0; i < f.value.size(); ++i) c.transverse_envelope[i] += a * f.value[i];
    }
    return c;
}

enum class Wave { signal, idler };

/// omega^2/(c^2 k) times the first-harmonic weight 2/pi of binary poling times d24.
inline double coupling_constant(const WaveParams& w, Wave j) {
    const double omega = j == Wave::signal ? w.omega_s : w.omega_i;
    const double k = j == Wave::signal ? w.k_s : w.k_i;
    return omega * omega / (speed_of_light * speed_of_light * k) * (2.0 / pi) * w.d24;
}

inline ComplexField2D coupling_kappa(const ComplexField2D& pump_plane, const CrystalHologram& crystal,
                                     const WaveParams& waves, Wave j) {
    pump_plane.require_same(crystal.transverse_envelope);
    const double c = coupling_constant(waves, j);
    ComplexField2D k = pump_plane;
    for (std::size_t i = 0; i < k.size(); ++i) k[i] *= c * crystal.transverse_envelope[i];
    return k;
}

inline ComplexField2D coupling_kappa(const PumpProfile& pump, const CrystalHologram& crystal, const WaveParams& waves,
                                     Wave j) {
    return coupling_kappa(pump.envelope, crystal, waves, j);
}

enum class PerturbMode { multiplicative, additive };

/// Gaussian perturbation of the crystal coefficients with real N(0, sigma^2)
/// draws, one per coefficient.
inline ParamVector perturb_crystal(const ParamVector& theta, double sigma, PerturbMode mode, std::uint64_t seed) {
    if (!(sigma >= 0)) throw ConfigError("perturb_crystal: sigma must be >= 0");
    ParamVector out = theta;
    if (sigma == 0) return out;
    const NormalStream rng(seed, StreamId::crystal_perturbation, 0);
    for (std::size_t n = 0; n < out.crystal_coeffs.size(); ++n) {
        const double delta = sigma * rng.normal(static_cast<std::uint32_t>(n));
        if (mode == PerturbMode::multiplicative)
            out.crystal_coeffs[n] *= (1.0 + delta);
        else
            out.crystal_coeffs[n] += delta;
    }
    return out;
}

/// Binary +-1 poling volume over a few QPM unit cells.
struct PolingVolume {
    long nx = 0, ny = 0, nz = 0;
    long unit_cells = 3;
    double dx = 0, dy = 0, dz = 0;
    double poling_period = 0;
    double threshold = 0;        // relative to max |envelope|
    double z_scale = 20.0;       // display stretch along z
    std::vector<std::int8_t> voxels;  // index = ix + nx * (iy + ny * iz)
    std::vector<std::uint8_t> unpoled;  // per transverse pixel, 1 where below threshold
    long unpoled_count = 0;

    std::int8_t at(long ix, long iy, long iz) const {
        return voxels[static_cast<std::size_t>(ix + nx * (iy + ny * iz))];
    }
};

inline PolingVolume export_binary_poling(const CrystalHologram& crystal, long unit_cells = 3,
                                         long samples_per_period = 64, double threshold = 0.05) {
    if (!(crystal.qpm_period > 0)) throw ConfigError("export: poling period must be positive");
    if (unit_cells < 1 || samples_per_period < 2) throw ConfigError("export: need >= 1 cell and >= 2 samples per period");
    const auto& env = crystal.transverse_envelope;
    if (!env.all_finite()) throw NumericalError("export: crystal envelope has non-finite entries");
    double peak = 0;
    for (const auto& v : env.data) peak = std::max(peak, std::abs(v));

    PolingVolume vol;
    vol.nx = env.nx;
    vol.ny = env.ny;
    vol.nz = unit_cells * samples_per_period;
    vol.unit_cells = unit_cells;
    vol.dx = env.dx;
    vol.dy = env.dy;
    vol.dz = crystal.qpm_period / static_cast<double>(samples_per_period);
    vol.poling_period = crystal.qpm_period;
    vol.threshold = threshold;
    vol.voxels.assign(static_cast<std::size_t>(vol.nx * vol.ny * vol.nz), 1);
    vol.unpoled.assign(env.size(), 0);
    for (std::size_t c = 0; c < env.size(); ++c) {
        if (peak == 0 || std::abs(env[c]) <= threshold * peak) {
            vol.unpoled[c] = 1;
            ++vol.unpoled_count;
            continue;
        }
        const double phase = std::arg(env[c]);
        for (long iz = 0; iz < vol.nz; ++iz) {
            // sample at cell centers so no sample lands exactly on a domain wall
            const double zeta = (static_cast<double>(iz) + 0.5) * vol.dz;
            const double s = std::cos(2.0 * pi * zeta / vol.poling_period + phase);
            vol.voxels[c + env.size() * static_cast<std::size_t>(iz)] = s < 0 ? -1 : 1;
        }
    }
    return vol;
}

/// Phase of the first z-harmonic of the volume at every transverse pixel.
inline std::vector<double> poling_first_harmonic_phase(const PolingVolume& v) {
    const std::size_t plane = static_cast<std::size_t>(v.nx * v.ny);
    std::vector<cd> acc(plane, cd{});
    for (long iz = 0; iz < v.nz; ++iz) {
        const double zeta = (static_cast<double>(iz) + 0.5) * v.dz;
        const cd w = std::polar(1.0, -2.0 * pi * zeta / v.poling_period);
        for (std::size_t c = 0; c < plane; ++c)
            acc[c] += static_cast<double>(v.voxels[c + plane * static_cast<std::size_t>(iz)]) * w;
    }
    std::vector<double> out(plane);
    for (std::size_t c = 0; c < plane; ++c) out[c] = std::arg(acc[c]);
    return out;
}

} // namespace spdcinv
