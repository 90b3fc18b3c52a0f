#include <cmath>
#include <memory>

#include <gtest/gtest.h>

#include <spdcinv/observables.hpp>
#include <spdcinv/rng.hpp>

using namespace spdcinv;

namespace {

ModeSpec lg(int l, int p, double w) { return {Basis::LG, l, p, w, 0.0}; }

WaveParams waves() {
    WaveInputs in;
    in.n_p = 1.692;
    in.n_s = in.n_i = 1.69;
    return wave_params(in, qpm_period(in), 3.64e-12);
}

ParamVector theta_with_pump(int l_pump) {
    ParamVector p;
    p.pump_basis.modes = {lg(l_pump, 0, 20e-6)};
    p.pump_coeffs = {{1, 0}};
    p.pump_waists = {20e-6};
    p.crystal_basis.modes = {lg(0, 0, 30e-6)};
    p.crystal_coeffs = {{1, 0}};
    p.crystal_waists = {30e-6};
    return p;
}

MediumSettings medium(double amplitude = 100.0) {
    MediumSettings ms;
    ms.pump_amplitude = amplitude;
    ms.min_points_per_waist = 2;
    return ms;
}

Propagator make_propagator(const SimGrid& g, const ParamVector& theta, const MediumSettings& ms) {
    const auto w = waves();
    return Propagator(g, w,
                      std::make_shared<CouplingProfile>(
                          build_coupling(synth_pump(theta, g, w, ms), synth_crystal(theta, g, w, ms), w, g)));
}

ModeSet oam_set(double w) { return ModeSet{{lg(-1, 0, w), lg(0, 0, w), lg(1, 0, w)}}; }

// First-order outputs driven by the vacuum through a mode-space gain matrix G:
// i_out = G conj(s_vac), s_out = G^T conj(i_vac).
ModeAmplitudeSamples linear_samples(const CMatrix& G, long n, std::uint64_t seed) {
    const auto ni = static_cast<std::size_t>(G.rows()), ns = static_cast<std::size_t>(G.cols());
    ModeAmplitudeSamples s(n, ni, ns);
    for (long r = 0; r < n; ++r) {
        const NormalStream ri(seed, StreamId::idler_vacuum, static_cast<std::uint64_t>(r));
        const NormalStream rs(seed, StreamId::signal_vacuum, static_cast<std::uint64_t>(r));
        Eigen::VectorXcd iv(G.rows()), sv(G.cols());
        for (Eigen::Index a = 0; a < G.rows(); ++a) iv(a) = ri.complex(static_cast<std::uint32_t>(a));
        for (Eigen::Index b = 0; b < G.cols(); ++b) sv(b) = rs.complex(static_cast<std::uint32_t>(b));
        const Eigen::VectorXcd io = G * sv.conjugate(), so = G.transpose() * iv.conjugate();
        for (std::size_t a = 0; a < ni; ++a) {
            s.i_out[static_cast<std::size_t>(r) * ni + a] = io(static_cast<Eigen::Index>(a));
            s.i_vac[static_cast<std::size_t>(r) * ni + a] = iv(static_cast<Eigen::Index>(a));
        }
        for (std::size_t b = 0; b < ns; ++b) {
            s.s_out[static_cast<std::size_t>(r) * ns + b] = so(static_cast<Eigen::Index>(b));
            s.s_vac[static_cast<std::size_t>(r) * ns + b] = sv(static_cast<Eigen::Index>(b));
        }
    }
    return s;
}

} // namespace

TEST(Observables, ZeroPumpGivesNoCoincidences) {
    const auto g = build_grid({32, 32, 4e-6, 4e-6, 5e-4, 5e-5});
    const auto set = oam_set(15e-6);
    const DetectionBank bank(set, set, g, waves(), 2);
    NoiseSpec n;
    n.n_realizations = 8;
    const auto s = sample_ensemble(make_propagator(g, theta_with_pump(0), medium(0.0)), bank, n, 1);
    for (const auto& v : s.i_out) EXPECT_EQ(v, cd(0.0));
    for (const auto& v : s.s_out) EXPECT_EQ(v, cd(0.0));
    EXPECT_THROW(g2(first_order_moments(s), set, set), NormalizationError);
}

TEST(Observables, SampleAndMomentShapes) {
    const auto g = build_grid({32, 32, 4e-6, 4e-6, 5e-4, 5e-5});
    const ModeSet idler{{lg(0, 0, 15e-6), lg(1, 0, 15e-6)}};
    const auto signal = oam_set(15e-6);
    const DetectionBank bank(idler, signal, g, waves(), 2);
    NoiseSpec n;
    n.n_realizations = 5;
    const auto s = sample_ensemble(make_propagator(g, theta_with_pump(0), medium()), bank, n, 1);
    EXPECT_EQ(s.n_realizations, 5);
    EXPECT_EQ(s.i_out.size(), 10u);
    EXPECT_EQ(s.s_vac.size(), 15u);
    const auto c = first_order_moments(s);
    EXPECT_EQ(c.n_i.rows(), 2);
    EXPECT_EQ(c.n_s.rows(), 3);
    EXPECT_EQ(c.pair.rows(), 2);
    EXPECT_EQ(c.pair.cols(), 3);
    const auto m = g2(c, idler, signal);
    EXPECT_EQ(m.rows(), 2);
    EXPECT_EQ(m.cols(), 3);
    EXPECT_NEAR(m.values.sum(), 1.0, 1e-12);
    EXPECT_GE(m.values.minCoeff(), 0.0);
}

TEST(Observables, MomentsNeedTwoRealizations) {
    ModeAmplitudeSamples s(1, 1, 1);
    EXPECT_THROW(first_order_moments(s), ConfigError);
}

// White noise of std sigma per quadrature per cell projects onto a unit-norm
// mode with <|a|^2> = 2 sigma^2 dA.
TEST(Observables, VacuumProjectionVariance) {
    const auto g = build_grid({32, 32, 4e-6, 4e-6, 5e-4, 5e-5});
    const auto set = oam_set(15e-6);
    const DetectionBank bank(set, set, g, waves(), 2);
    NoiseSpec n;
    n.n_realizations = 2000;
    const auto s = project_ensemble(init_vacuum(n, g), bank);
    const double expected = 2.0 * g.cell_area();
    for (std::size_t q = 0; q < 3; ++q) {
        double m = 0;
        for (long r = 0; r < n.n_realizations; ++r) m += std::norm(s.sv(r, q));
        m /= static_cast<double>(n.n_realizations);
        EXPECT_NEAR(m / expected, 1.0, 0.1) << "mode " << q;
    }
}

TEST(Observables, NumberMomentsAreHermitian) {
    CMatrix G(3, 3);
    G << cd(0.1, 0.02), cd(0, 0.3), cd(0.05, 0), cd(0.2, -0.1), cd(0.01, 0), cd(0, 0), cd(0.3, 0.3), cd(0, 0), cd(0.1, 0);
    const auto c = first_order_moments(linear_samples(G, 200, 4));
    EXPECT_EQ((c.n_i - c.n_i.adjoint()).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ((c.n_s - c.n_s.adjoint()).cwiseAbs().maxCoeff(), 0.0);
    for (Eigen::Index a = 0; a < 3; ++a) EXPECT_EQ(c.n_i(a, a).imag(), 0.0);
}

// Linear model with <|v|^2> = 2: pair = 2 G, n_i = 2 conj(G) G^T, n_s = 2 G^dagger G, cross = 0.
TEST(Observables, MomentsRecoverLinearGain) {
    CMatrix G(2, 2);
    G << cd(0.0, 0.0), cd(0.3, 0.1), cd(0.0, -0.3), cd(0.05, 0.0);
    const auto c = first_order_moments(linear_samples(G, 40000, 11));
    const CMatrix ni = 2.0 * G.conjugate() * G.transpose(), ns = 2.0 * G.adjoint() * G;
    for (Eigen::Index a = 0; a < 2; ++a)
        for (Eigen::Index b = 0; b < 2; ++b) {
            EXPECT_LT(std::abs(c.pair(a, b) - 2.0 * G(a, b)), 4 * c.pair_se(a, b) + 1e-12);
            EXPECT_LT(std::abs(c.n_i(a, b) - ni(a, b)), 4 * c.n_i_se(a, b) + 1e-12);
            EXPECT_LT(std::abs(c.n_s(a, b) - ns(a, b)), 4 * c.n_s_se(a, b) + 1e-12);
            EXPECT_LT(std::abs(c.cross(a, b)), 4 * c.cross_se(a, b) + 1e-12);
        }
}

// Gaussian factorization for a single mode pair: g2 = n_i n_s + |pair|^2.
TEST(Observables, SingleEntryCoincidence) {
    CMatrix G(1, 1);
    G << cd(0.2, 0.1);
    const auto s = linear_samples(G, 500, 3);
    const auto c = first_order_moments(s);
    const ModeSet one{{lg(0, 0, 10e-6)}};
    const auto m = g2(c, one, one);
    EXPECT_DOUBLE_EQ(m(0, 0), 1.0);
    EXPECT_NEAR(m.raw_sum, c.n_i(0, 0).real() * c.n_s(0, 0).real() + std::norm(c.pair(0, 0)) + std::norm(c.cross(0, 0)),
                1e-15);
}

TEST(Observables, BellGainGivesAntiDiagonalCoincidences) {
    const double gain = 0.02;
    CMatrix G = CMatrix::Zero(2, 2);
    G(0, 1) = G(1, 0) = gain / std::sqrt(2.0);
    const ModeSet set{{lg(-1, 0, 10e-6), lg(1, 0, 10e-6)}};
    const auto m = g2(first_order_moments(linear_samples(G, 20000, 5)), set, set);
    // accidentals are O(gain^2) relative to true pairs
    EXPECT_NEAR(m(0, 1), 0.5, 0.02);
    EXPECT_NEAR(m(1, 0), 0.5, 0.02);
    EXPECT_LT(m(0, 0) + m(1, 1), 1e-3);
}

TEST(Observables, PostSelectionRestrictsRows) {
    CMatrix G = CMatrix::Identity(3, 3) * 0.1;
    const auto c = first_order_moments(linear_samples(G, 100, 2));
    const ModeSet set{{lg(0, 0, 10e-6), lg(0, 1, 10e-6), lg(1, 0, 10e-6)}};
    ModeSet radial = set;
    radial.postselect = PostSelect::LG_p0;
    const auto m = g2(c, radial, set);
    EXPECT_EQ(m.rows(), 2);
    EXPECT_EQ(m.cols(), 3);
    EXPECT_EQ(m.idler_modes[0].index1, 0);
    EXPECT_EQ(m.idler_modes[1].index1, 1);
    EXPECT_EQ(m.idler_modes[1].index2, 0);
}

TEST(Oracle, OamSelectionRule) {
    const auto g = build_grid({64, 64, 3e-6, 3e-6, 5e-4, 5e-5});
    const auto set = oam_set(15e-6);
    for (int l : {-1, 0, 1}) {
        const auto m = first_order_oracle(theta_with_pump(l), waves(), g, medium(), set, set, 8);
        EXPECT_LT(oam_off_diagonal_mass(m, l), 1e-6) << "pump l = " << l;
    }
}

TEST(Oracle, ThinCrystalLimitIsTransverseOverlap) {
    const double L = 1e-7;
    const auto g = build_grid({64, 64, 3e-6, 3e-6, L, L});
    const auto w = waves();
    const auto ms = medium();
    const auto theta = theta_with_pump(1);
    const auto pump = synth_pump(theta, g, w, ms);
    const auto crystal = synth_crystal(theta, g, w, ms);
    const ModeSet idler{{lg(0, 0, 15e-6), lg(1, 0, 15e-6)}};
    const ModeSet signal{{lg(0, 0, 15e-6), lg(-1, 0, 15e-6)}};
    const auto phi = biphoton_amplitude(pump, crystal, w, g, idler, signal, 4, 2);
    const auto p0 = pump.at(g, 0.0);
    for (Eigen::Index a = 0; a < 2; ++a)
        for (Eigen::Index b = 0; b < 2; ++b) {
            const auto mi = synth_mode(idler[static_cast<std::size_t>(a)], g, 0.0, w.k_i, 1.0, 2);
            const auto mb = synth_mode(signal[static_cast<std::size_t>(b)], g, 0.0, w.k_s, 1.0, 2);
            cd s{};
            for (std::size_t c = 0; c < p0.size(); ++c)
                s += p0[c] * crystal.transverse_envelope[c] * std::conj(mi[c]) * std::conj(mb[c]);
            s *= g.cell_area();
            EXPECT_LT(std::abs(phi(a, b) / L - s), 1e-3 * std::abs(s) + 1e-9 * phi.cwiseAbs().maxCoeff() / L)
                << a << "," << b;
        }
}

TEST(Metrics, RelativeL1) {
    RMatrix a(1, 2), b(1, 2);
    a << 0.5, 0.5;
    b << 1.0, 0.0;
    EXPECT_DOUBLE_EQ(relative_l1(a, b), 1.0);
    EXPECT_THROW(relative_l1(a, RMatrix::Zero(2, 1)), ShapeError);
}
