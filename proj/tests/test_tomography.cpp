#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include <spdcinv/tomography.hpp>

using namespace spdcinv;

namespace {

CMatrix random_state(int dim, int rank, std::mt19937_64& rng) {
    std::normal_distribution<double> n;
    CMatrix a(dim, rank);
    for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = cd(n(rng), n(rng));
    CMatrix rho = a * a.adjoint();
    return rho / rho.trace().real();
}

Eigen::VectorXcd bell_psi() {
    Eigen::VectorXcd psi = Eigen::VectorXcd::Zero(4);
    psi(1) = psi(2) = 1.0;  // |0,1> + |1,0>
    return psi;
}

} // namespace

class GeneratorsTest : public ::testing::TestWithParam<int> {};

TEST_P(GeneratorsTest, HermitianOrthogonalWithEigenDecomposition) {
    const int d = GetParam();
    const auto g = generators(d);
    ASSERT_EQ(g.sigma.size(), static_cast<std::size_t>(d * d));
    for (std::size_t m = 0; m < g.sigma.size(); ++m) {
        const auto& s = g.sigma[m];
        EXPECT_LT((s - s.adjoint()).cwiseAbs().maxCoeff(), 1e-14);
        for (std::size_t n = 0; n < g.sigma.size(); ++n) {
            const cd tr = (s * g.sigma[n]).trace();
            if (m == n)
                EXPECT_NEAR(tr.real(), g.norm[m], 1e-12);
            else
                EXPECT_LT(std::abs(tr), 1e-12) << m << "," << n;
        }
        CMatrix rebuilt = CMatrix::Zero(d, d);
        for (int k = 0; k < d; ++k) rebuilt += g.eigenvalues[m][k] * g.eigenvectors[m][k] * g.eigenvectors[m][k].adjoint();
        EXPECT_LT((rebuilt - s).cwiseAbs().maxCoeff(), 1e-12) << "generator " << m;
    }
    for (std::size_t m = 1; m < g.sigma.size(); ++m) EXPECT_LT(std::abs(g.sigma[m].trace()), 1e-14);
}

INSTANTIATE_TEST_SUITE_P(Dims, GeneratorsTest, ::testing::Values(2, 3));

TEST(Generators, UnsupportedDimension) {
    EXPECT_THROW(generators(4), FeatureError);
    EXPECT_THROW(measurement_plan(1), FeatureError);
}

TEST(Mub, QubitHasSixStates) {
    const auto plan = measurement_plan(2);
    EXPECT_EQ(plan.states.size(), 6u);
    EXPECT_EQ(plan.records.size(), 36u);
}

TEST(Mub, UnbiasedAcrossBases) {
    for (int d : {2, 3}) {
        const auto bases = mutually_unbiased_bases(d);
        ASSERT_EQ(bases.size(), static_cast<std::size_t>(d + 1));
        for (std::size_t a = 0; a < bases.size(); ++a)
            for (std::size_t b = 0; b < bases.size(); ++b)
                for (int i = 0; i < d; ++i)
                    for (int j = 0; j < d; ++j) {
                        const double ov = std::norm(bases[a][i].dot(bases[b][j]));
                        const double expected = a == b ? (i == j ? 1.0 : 0.0) : 1.0 / d;
                        EXPECT_NEAR(ov, expected, 1e-12) << "d=" << d;
                    }
    }
}

TEST(Reconstruction, BellRoundTrip) {
    const CMatrix rho = pure_state(bell_psi());
    const auto r = reconstruct_rho(analytic_projections(measurement_plan(2), rho), 2);
    EXPECT_LT(trace_distance(r.rho, rho), 1e-6);
    EXPECT_NEAR(r.rho(1, 2).real(), 0.5, 1e-9);
    EXPECT_NEAR(r.rho(1, 1).real(), 0.5, 1e-9);
}

TEST(Reconstruction, MaximallyMixed) {
    for (int d : {2, 3}) {
        const CMatrix rho = CMatrix::Identity(d * d, d * d) / static_cast<double>(d * d);
        const auto r = reconstruct_rho(analytic_projections(measurement_plan(d), rho), d);
        EXPECT_LT((r.rho - rho).cwiseAbs().maxCoeff(), 1e-9);
    }
}

TEST(Reconstruction, QutritAntiCorrelatedState) {
    Eigen::VectorXcd psi = Eigen::VectorXcd::Zero(9);
    psi(0 * 3 + 2) = psi(1 * 3 + 1) = psi(2 * 3 + 0) = 1.0;
    const auto r = reconstruct_rho(analytic_projections(measurement_plan(3), pure_state(psi)), 3);
    for (int a : {2, 4, 6})
        for (int b : {2, 4, 6}) EXPECT_NEAR(r.rho(a, b).real(), 1.0 / 3.0, 1e-9);
}

TEST(ReconstructionProperties, RandomStatesRoundTrip) {
    std::mt19937_64 rng(7);
    for (int d : {2, 3})
        for (int rank : {1, 2, d * d})
            for (int trial = 0; trial < 5; ++trial) {
                const CMatrix rho = random_state(d * d, rank, rng);
                const auto r = reconstruct_rho(analytic_projections(measurement_plan(d), rho), d);
                EXPECT_LT(trace_distance(r.rho, rho), 1e-9);
                EXPECT_LT((r.raw - rho).cwiseAbs().maxCoeff(), 1e-9);
                EXPECT_NEAR(r.rho.trace().real(), 1.0, 1e-12);
            }
}

TEST(Reconstruction, MissingPairIsCoverageError) {
    auto records = analytic_projections(measurement_plan(2), pure_state(bell_psi()));
    records.erase(records.begin() + 7);
    EXPECT_THROW(reconstruct_rho(records, 2), CoverageError);
}

TEST(Reconstruction, NegativeRawIsClipped) {
    const CMatrix rho = pure_state(bell_psi());
    auto records = analytic_projections(measurement_plan(2), rho);
    for (auto& r : records) r.probability += (r.idler_state == r.signal_state ? -0.05 : 0.0);
    const auto r = reconstruct_rho(records, 2);
    Eigen::SelfAdjointEigenSolver<CMatrix> es(r.rho);
    EXPECT_GE(es.eigenvalues().minCoeff(), -1e-12);
    EXPECT_NEAR(r.rho.trace().real(), 1.0, 1e-12);
}

TEST(TraceDistance, Cases) {
    const CMatrix a = pure_state(bell_psi());
    EXPECT_NEAR(trace_distance(a, a), 0.0, 1e-15);
    Eigen::VectorXcd p0 = Eigen::VectorXcd::Unit(4, 0), p3 = Eigen::VectorXcd::Unit(4, 3);
    EXPECT_NEAR(trace_distance(pure_state(p0), pure_state(p3)), 1.0, 1e-12);
    EXPECT_THROW(trace_distance(a, CMatrix::Identity(9, 9)), ShapeError);
}

// Depolarizing a pure state by eps moves it eps (1 - 1/d^2) away.
TEST(TraceDistance, DepolarizedPureState) {
    for (int d : {2, 3})
        for (double eps : {0.01, 0.2, 0.7}) {
            const int n = d * d;
            Eigen::VectorXcd psi = Eigen::VectorXcd::Zero(n);
            psi(1) = cd(1, 0);
            psi(n - 1) = cd(0, 1);
            const CMatrix p = pure_state(psi);
            const CMatrix mixed = (1 - eps) * p + eps * CMatrix::Identity(n, n) / static_cast<double>(n);
            EXPECT_NEAR(trace_distance(mixed, p), eps * (1.0 - 1.0 / n), 1e-12);
        }
}

TEST(Kron, ProductOfComputationalStates) {
    CMatrix a = CMatrix::Zero(2, 2), b = CMatrix::Zero(3, 3);
    a(1, 1) = 1;
    b(2, 0) = 2;
    const CMatrix k = detail::kron(a, b);
    ASSERT_EQ(k.rows(), 6);
    EXPECT_EQ(k(1 * 3 + 2, 1 * 3 + 0), cd(2.0));
    EXPECT_EQ(k.cwiseAbs().sum(), 2.0);
}

// A pure pair amplitude G over the qudit modes yields the state vec(G).
TEST(Simulation, PairAmplitudeGivesPureState) {
    CorrelationData c;
    c.n_i = CMatrix::Zero(4, 4);
    c.n_s = CMatrix::Zero(4, 4);
    c.cross = CMatrix::Zero(4, 4);
    c.pair = CMatrix::Zero(4, 4);
    const std::vector<std::size_t> idx_i{1, 3}, idx_s{0, 2};
    c.pair(1, 2) = cd(0.3, 0.0);
    c.pair(3, 0) = cd(0.0, 0.3);
    c.pair(0, 0) = cd(5.0, 0.0);  // outside the qudit subspace
    const auto records = simulate_projections(measurement_plan(2), correlation_evaluator(c, idx_i, idx_s));
    Eigen::VectorXcd psi(4);
    psi << 0, cd(0.3, 0), cd(0, 0.3), 0;  // rows: idler modes 1, 3; cols: signal modes 0, 2
    const CMatrix expected = pure_state(psi);
    const auto r = reconstruct_rho(records, 2);
    EXPECT_LT(trace_distance(r.rho, expected), 1e-9);
}

TEST(Simulation, EmptySubspaceIsNormalizationError) {
    CorrelationData c;
    c.n_i = c.n_s = c.pair = c.cross = CMatrix::Zero(2, 2);
    EXPECT_THROW(simulate_projections(measurement_plan(2), correlation_evaluator(c, {0, 1}, {0, 1})),
                 NormalizationError);
}
