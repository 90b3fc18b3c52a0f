#include <cmath>

#include <gtest/gtest.h>

#include <spdcinv/medium.hpp>

using namespace spdcinv;

namespace {

ModeSpec lg(int l, int p, double w = 25e-6) { return {Basis::LG, l, p, w, 0.0}; }

WaveParams waves() {
    WaveInputs in;
    in.n_p = 1.692;
    in.n_s = in.n_i = 1.69;
    return wave_params(in, qpm_period(in), 3.64e-12);
}

ParamVector params(std::vector<ModeSpec> pump, std::vector<cd> pc, std::vector<ModeSpec> crystal, std::vector<cd> cc) {
    ParamVector p;
    p.pump_basis.modes = pump;
    p.crystal_basis.modes = crystal;
    p.pump_coeffs = pc;
    p.crystal_coeffs = cc;
    for (const auto& m : pump) p.pump_waists.push_back(m.waist);
    for (const auto& m : crystal) p.crystal_waists.push_back(m.waist);
    return p;
}

MediumSettings no_diffraction() {
    MediumSettings ms;
    ms.pump_diffraction = false;
    return ms;
}

double max_abs(const ComplexField2D& f) {
    double m = 0;
    for (const auto& v : f.data) m = std::max(m, std::abs(v));
    return m;
}

} // namespace

TEST(ParamVector, FlatLayoutRoundTrip) {
    auto p = params({lg(0, 0), lg(1, 0)}, {{1, 0.5}, {0.2, -0.1}}, {lg(0, 0, 30e-6)}, {{0.7, 0.3}});
    ASSERT_EQ(p.n_scalars(), 9u);
    auto v = p.flat();
    EXPECT_EQ(v[p.pump_waist(1)], 25e-6);
    EXPECT_EQ(v[p.crystal_re(0) + 1], 0.3);
    EXPECT_TRUE(p.is_waist(p.crystal_waist(0)));
    EXPECT_FALSE(p.is_waist(p.crystal_re(0)));
    v[p.crystal_re(0)] = 2.0;
    p.set_flat(v);
    EXPECT_EQ(p.crystal_coeffs[0], cd(2.0, 0.3));
    EXPECT_EQ(p.scalar_name(p.pump_waist(1)), "pump[LG l=1 p=0].waist");
}

TEST(ParamVector, LengthMismatchAndBadWaist) {
    auto p = params({lg(0, 0)}, {{1, 0}}, {}, {});
    p.pump_coeffs.push_back({0, 0});
    EXPECT_THROW(p.validate(), ConfigError);
    auto q = params({lg(0, 0)}, {{1, 0}}, {}, {});
    q.pump_waists[0] = -1e-6;
    EXPECT_THROW(q.validate(), ConfigError);
}

TEST(Masks, Presets) {
    auto p = params({lg(0, 0)}, {{1, 0}}, {lg(0, 0)}, {{1, 0}});
    EXPECT_EQ(make_mask(p, MaskPreset::pump_only), (std::vector<bool>{1, 1, 1, 0, 0, 0}));
    EXPECT_EQ(make_mask(p, MaskPreset::crystal_only), (std::vector<bool>{0, 0, 0, 1, 1, 1}));
    EXPECT_EQ(make_mask(p, MaskPreset::pump_waists_only), (std::vector<bool>{0, 0, 1, 0, 0, 0}));
    EXPECT_EQ(make_mask(p, MaskPreset::crystal_coeffs_only), (std::vector<bool>{0, 0, 0, 1, 1, 0}));
}

TEST(SynthPump, SingleGaussianTerm) {
    const auto g = build_grid(GridConfig{});
    const auto ms = no_diffraction();
    const auto pump = synth_pump(params({lg(0, 0, 40e-6)}, {{1, 0}}, {}, {}), g, waves(), ms);
    const double w = 40e-6;
    for (long ix = 0; ix < g.nx; ix += 4) {
        const double x = g.x_at(ix);
        EXPECT_NEAR(std::abs(pump.envelope(ix, g.ny / 2)),
                    ms.pump_amplitude * std::sqrt(2 / pi) / w * std::exp(-x * x / (w * w)), 1e-9 * ms.pump_amplitude / w);
    }
}

TEST(SynthPump, OppositeVorticesGiveTwoLobes) {
    const auto g = build_grid(GridConfig{});
    const auto pump = synth_pump(params({lg(1, 0), lg(-1, 0)}, {{1, 0}, {1, 0}}, {}, {}), g, waves(), no_diffraction());
    const auto hg10 = synth_mode({Basis::HG, 1, 0, 25e-6, 0.0}, g, 0.0, 0.0);
    const double overlap = std::abs(inner(hg10, pump.envelope)) / std::sqrt(pump.envelope.power());
    EXPECT_NEAR(overlap, 1.0, 1e-3);
}

TEST(SynthPump, ZeroCoefficientsGiveZeroEnvelope) {
    const auto g = build_grid(GridConfig{});
    const auto pump = synth_pump(params({lg(0, 0), lg(1, 0)}, {{0, 0}, {0, 0}}, {}, {}), g, waves(), MediumSettings{});
    EXPECT_EQ(max_abs(pump.envelope), 0.0);
    EXPECT_EQ(max_abs(pump.at(g, 3e-4)), 0.0);
}

TEST(SynthCrystal, GaussianApodizedUniformPhase) {
    const auto g = build_grid(GridConfig{});
    const auto c = synth_crystal(params({lg(0, 0)}, {{1, 0}}, {lg(0, 0, 40e-6)}, {{1, 0}}), g, waves(), MediumSettings{});
    const auto& e = c.transverse_envelope;
    EXPECT_NEAR(std::abs(e(g.nx / 2, g.ny / 2)), 1.0, 1e-12);  // peak-normalized
    for (const auto& v : e.data) EXPECT_NEAR(std::arg(v), 0.0, 1e-12);
    EXPECT_GT(c.qpm_period, 0);
}

TEST(SynthCrystal, SecondOrderVortexWindsTwice) {
    const auto g = build_grid(GridConfig{});
    const auto c = synth_crystal(params({lg(0, 0)}, {{1, 0}}, {lg(2, 0)}, {{1, 0}}), g, waves(), MediumSettings{});
    const auto& e = c.transverse_envelope;
    const long m = g.nx / 2, h = 5;
    std::vector<std::pair<long, long>> loop;
    for (long i = -h; i < h; ++i) loop.push_back({m + i, m - h});
    for (long i = -h; i < h; ++i) loop.push_back({m + h, m + i});
    for (long i = h; i > -h; --i) loop.push_back({m + i, m + h});
    for (long i = h; i > -h; --i) loop.push_back({m - h, m + i});
    double winding = 0;
    for (std::size_t i = 0; i < loop.size(); ++i) {
        const auto [x0, y0] = loop[i];
        const auto [x1, y1] = loop[(i + 1) % loop.size()];
        winding += std::arg(e(x1, y1) / e(x0, y0));
    }
    EXPECT_NEAR(winding, 4 * pi, 1e-9);
}

TEST(SynthCrystal, EmptyBasisIsUniform) {
    const auto g = build_grid({32, 32, 4e-6, 4e-6, 1e-3, 1e-5});
    const auto c = synth_crystal(params({lg(0, 0)}, {{1, 0}}, {}, {}), g, waves(), MediumSettings{});
    for (const auto& v : c.transverse_envelope.data) EXPECT_EQ(v, cd(1.0, 0.0));
}

TEST(Coupling, ZeroCrystalOrPumpGivesZeroKappa) {
    const auto g = build_grid(GridConfig{});
    const auto w = waves();
    const auto theta = params({lg(0, 0)}, {{0, 0}}, {lg(0, 0)}, {{0, 0}});
    const auto pump = synth_pump(theta, g, w, MediumSettings{});
    const auto c = synth_crystal(theta, g, w, MediumSettings{});
    EXPECT_EQ(max_abs(coupling_kappa(pump, c, w, Wave::signal)), 0.0);
}

TEST(Coupling, DegenerateWavesSymmetric) {
    const auto g = build_grid({32, 32, 4e-6, 4e-6, 1e-3, 1e-5});
    const auto w = waves();
    const auto theta = params({lg(0, 0)}, {{1, 0}}, {}, {});
    const auto pump = synth_pump(theta, g, w, MediumSettings{});
    const auto c = synth_crystal(theta, g, w, MediumSettings{});
    const auto ks = coupling_kappa(pump, c, w, Wave::signal), ki = coupling_kappa(pump, c, w, Wave::idler);
    for (std::size_t i = 0; i < ks.size(); ++i) EXPECT_EQ(ks[i], ki[i]);
}

TEST(Coupling, ConstantFollowsFirstHarmonicOfSquareWave) {
    const auto w = waves();
    // Fourier series of a +-1 square wave: first harmonic amplitude 4/pi, so
    // exp(i K z) carries 2/pi of the d24 swing.
    double dc = 0;
    cd first{};
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const double z = (i + 0.5) / n;
        const double s = std::cos(2 * pi * z) >= 0 ? 1.0 : -1.0;
        dc += s / n;
        first += s * std::polar(1.0, -2 * pi * z) / static_cast<double>(n);
    }
    EXPECT_NEAR(dc, 0.0, 1e-9);
    EXPECT_NEAR(std::abs(first), 2 / pi, 1e-6);
    const double expected = w.omega_s * w.omega_s / (speed_of_light * speed_of_light * w.k_s) * std::abs(first) * w.d24;
    EXPECT_NEAR(coupling_constant(w, Wave::signal), expected, 1e-6 * expected);
}

TEST(MediumProperties, SynthesisIsLinearInCoefficients) {
    const auto g = build_grid({32, 32, 4e-6, 4e-6, 1e-3, 1e-5});
    const auto w = waves();
    const std::vector<ModeSpec> pb = {lg(0, 0), lg(1, 0), lg(-1, 1)}, cb = {lg(0, 0, 30e-6), lg(2, 0, 30e-6)};
    const auto t1 = params(pb, {{1, 0}, {0.2, 0.1}, {-0.3, 0.4}}, cb, {{0.5, 0.5}, {0.1, -0.9}});
    const auto t2 = params(pb, {{-0.4, 0.7}, {1.2, 0}, {0, -0.2}}, cb, {{-1, 0.2}, {0.3, 0.3}});
    const cd a{0.7, -0.2}, b{-1.3, 0.5};
    auto mix = t1;
    for (std::size_t n = 0; n < pb.size(); ++n) mix.pump_coeffs[n] = a * t1.pump_coeffs[n] + b * t2.pump_coeffs[n];
    for (std::size_t n = 0; n < cb.size(); ++n) mix.crystal_coeffs[n] = a * t1.crystal_coeffs[n] + b * t2.crystal_coeffs[n];
    const MediumSettings ms;
    const auto p1 = synth_pump(t1, g, w, ms), p2 = synth_pump(t2, g, w, ms), pm = synth_pump(mix, g, w, ms);
    const auto c1 = synth_crystal(t1, g, w, ms), c2 = synth_crystal(t2, g, w, ms), cm = synth_crystal(mix, g, w, ms);
    const double sp = max_abs(pm.envelope), sc = max_abs(cm.transverse_envelope);
    for (std::size_t i = 0; i < pm.envelope.size(); ++i) {
        EXPECT_LT(std::abs(pm.envelope[i] - (a * p1.envelope[i] + b * p2.envelope[i])), 1e-12 * sp);
        EXPECT_LT(std::abs(cm.transverse_envelope[i] - (a * c1.transverse_envelope[i] + b * c2.transverse_envelope[i])),
                  1e-12 * sc);
    }
}

TEST(MediumProperties, KappaScalesWithAmplitudeAndD24) {
    const auto g = build_grid({32, 32, 4e-6, 4e-6, 1e-3, 1e-5});
    auto w = waves();
    const auto theta = params({lg(0, 0)}, {{1, 0}}, {lg(1, 0, 30e-6)}, {{1, 0}});
    MediumSettings ms;
    const auto c = synth_crystal(theta, g, w, ms);
    const auto k1 = coupling_kappa(synth_pump(theta, g, w, ms), c, w, Wave::idler);
    ms.pump_amplitude *= 3;
    const auto k3 = coupling_kappa(synth_pump(theta, g, w, ms), c, w, Wave::idler);
    w.d24 *= 2;
    const auto c2 = synth_crystal(theta, g, w, ms);
    const auto k6 = coupling_kappa(synth_pump(theta, g, w, ms), c2, w, Wave::idler);
    const double s = max_abs(k1);
    for (std::size_t i = 0; i < k1.size(); ++i) {
        EXPECT_LT(std::abs(k3[i] - 3.0 * k1[i]), 1e-12 * s);
        EXPECT_LT(std::abs(k6[i] - 6.0 * k1[i]), 1e-12 * s);
    }
}

TEST(Perturb, ZeroSigmaIsIdentity) {
    const auto t = params({lg(0, 0)}, {{1, 0}}, {lg(0, 0), lg(1, 0)}, {{0.5, 0.1}, {0.2, 0.3}});
    const auto p = perturb_crystal(t, 0.0, PerturbMode::additive, 4);
    EXPECT_EQ(p.crystal_coeffs, t.crystal_coeffs);
}

TEST(Perturb, MultiplicativeKeepsZero) {
    const auto t = params({lg(0, 0)}, {{1, 0}}, {lg(0, 0), lg(1, 0)}, {{0, 0}, {0.2, 0.3}});
    const auto p = perturb_crystal(t, 0.5, PerturbMode::multiplicative, 4);
    EXPECT_EQ(p.crystal_coeffs[0], cd(0, 0));
    EXPECT_NE(p.crystal_coeffs[1], t.crystal_coeffs[1]);
    // real factor: phase preserved
    EXPECT_NEAR(std::remainder(std::arg(p.crystal_coeffs[1]) - std::arg(t.crystal_coeffs[1]), pi), 0.0, 1e-12);
}

TEST(Perturb, AdditiveIsReproducible) {
    const auto t = params({lg(0, 0)}, {{1, 0}}, {lg(0, 0), lg(1, 0)}, {{1, 0}, {0.2, 0.3}});
    const auto a = perturb_crystal(t, 0.3, PerturbMode::additive, 11), b = perturb_crystal(t, 0.3, PerturbMode::additive, 11);
    const auto c = perturb_crystal(t, 0.3, PerturbMode::additive, 12);
    EXPECT_EQ(a.crystal_coeffs, b.crystal_coeffs);
    EXPECT_NE(a.crystal_coeffs, c.crystal_coeffs);
    EXPECT_EQ(a.pump_coeffs, t.pump_coeffs);
    EXPECT_THROW(perturb_crystal(t, -1.0, PerturbMode::additive, 1), ConfigError);
}

namespace {

CrystalHologram uniform_crystal(const SimGrid& g, cd value) {
    CrystalHologram c;
    c.transverse_envelope = ComplexField2D(g, value);
    c.qpm_period = 3.2e-6;
    c.d24 = 3.64e-12;
    return c;
}

} // namespace

TEST(Poling, UniformEnvelopeGivesPeriodicStripes) {
    const auto g = build_grid({8, 8, 4e-6, 4e-6, 1e-3, 1e-5});
    const long spp = 16;
    const auto v = export_binary_poling(uniform_crystal(g, 1.0), 3, spp, 0.05);
    EXPECT_EQ(v.nz, 3 * spp);
    EXPECT_EQ(v.unpoled_count, 0);
    for (long iz = 0; iz < v.nz; ++iz) {
        const double zeta = (iz + 0.5) * v.dz;
        const int expected = std::cos(2 * pi * zeta / v.poling_period) < 0 ? -1 : 1;
        for (long iy = 0; iy < v.ny; ++iy)
            for (long ix = 0; ix < v.nx; ++ix) ASSERT_EQ(v.at(ix, iy, iz), expected);
        EXPECT_EQ(v.at(0, 0, iz), v.at(0, 0, (iz + spp) % v.nz));  // period
    }
}

TEST(Poling, PhasePiShiftsHalfPeriod) {
    const auto g = build_grid({8, 8, 4e-6, 4e-6, 1e-3, 1e-5});
    auto c = uniform_crystal(g, 1.0);
    c.transverse_envelope(3, 5) = std::polar(1.0, pi);
    const long spp = 16;
    const auto v = export_binary_poling(c, 3, spp, 0.05);
    for (long iz = 0; iz < v.nz; ++iz) {
        EXPECT_EQ(v.at(3, 5, iz), v.at(0, 0, (iz + spp / 2) % v.nz));
        EXPECT_EQ(v.at(3, 5, iz), -v.at(0, 0, iz));
    }
}

TEST(Poling, BelowThresholdIsUnpoled) {
    const auto g = build_grid({8, 8, 4e-6, 4e-6, 1e-3, 1e-5});
    auto c = uniform_crystal(g, 1.0);
    c.transverse_envelope(2, 2) = 0.0;
    c.transverse_envelope(6, 1) = 0.01;
    const auto v = export_binary_poling(c, 3, 16, 0.05);
    EXPECT_EQ(v.unpoled_count, 2);
    EXPECT_EQ(v.unpoled[2 + 8 * 2], 1);
    for (long iz = 0; iz < v.nz; ++iz) EXPECT_EQ(v.at(2, 2, iz), 1);
}

TEST(Poling, FirstHarmonicRecoversEnvelopePhase) {
    const auto g = build_grid({32, 32, 4e-6, 4e-6, 1e-3, 1e-5});
    auto theta = params({lg(0, 0)}, {{1, 0}}, {lg(0, 0, 30e-6), lg(1, 0, 30e-6), lg(-2, 1, 30e-6)},
                        {{1, 0}, {0.4, 0.3}, {-0.2, 0.5}});
    const auto c = synth_crystal(theta, g, waves(), MediumSettings{});
    const auto v = export_binary_poling(c, 3, 64, 0.05);
    const auto phase = poling_first_harmonic_phase(v);
    const double peak = max_abs(c.transverse_envelope);
    int checked = 0;
    for (std::size_t i = 0; i < phase.size(); ++i) {
        if (std::abs(c.transverse_envelope[i]) <= 0.2 * peak) continue;
        EXPECT_LT(std::abs(std::remainder(phase[i] - std::arg(c.transverse_envelope[i]), 2 * pi)), 0.1);
        ++checked;
    }
    EXPECT_GT(checked, 50);
}
