#include <cmath>

#include <gtest/gtest.h>

#include <spdcinv/modes.hpp>
#include <spdcinv/rng.hpp>

using namespace spdcinv;

namespace {

SimGrid default_grid() { return build_grid(GridConfig{}); }

ModeSpec lg(int l, int p, double w = 25e-6) { return {Basis::LG, l, p, w, 0.0}; }
ModeSpec hg(int n, int m, double w = 25e-6) { return {Basis::HG, n, m, w, 0.0}; }

constexpr double k810 = 2 * pi * 1.8 / 810e-9;

} // namespace

TEST(SynthMode, FundamentalIsNormalizedGaussian) {
    const auto g = default_grid();
    const double w = 25e-6;
    const auto f = synth_mode(lg(0, 0, w), g, 0.0, k810);
    for (long iy = 0; iy < g.ny; iy += 5)
        for (long ix = 0; ix < g.nx; ix += 3) {
            const double r2 = g.x_at(ix) * g.x_at(ix) + g.y_at(iy) * g.y_at(iy);
            const double expected = std::sqrt(2.0 / pi) / w * std::exp(-r2 / (w * w));
            EXPECT_NEAR(std::abs(f(ix, iy)), expected, 1e-12 * std::sqrt(2.0 / pi) / w);
        }
    EXPECT_NEAR(f.power(), 1.0, 1e-3);
}

TEST(SynthMode, HgZeroEqualsLgZero) {
    const auto g = default_grid();
    const auto a = synth_mode(lg(0, 0), g, 3e-4, k810), b = synth_mode(hg(0, 0), g, 3e-4, k810);
    double peak = 0;
    for (const auto& v : a.data) peak = std::max(peak, std::abs(v));
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(std::abs(a[i] - b[i]), 0.0, 1e-12 * peak);
}

TEST(SynthMode, VortexHasNullAndUnitWinding) {
    const auto g = default_grid();
    const auto f = synth_mode(lg(1, 0), g, 0.0, k810);
    EXPECT_EQ(std::abs(f(g.nx / 2, g.ny / 2)), 0.0);
    // accumulate phase steps around a square loop of half-width 4 cells
    const long c = g.nx / 2, h = 4;
    std::vector<std::pair<long, long>> loop;
    for (long i = -h; i < h; ++i) loop.push_back({c + i, c - h});
    for (long i = -h; i < h; ++i) loop.push_back({c + h, c + i});
    for (long i = h; i > -h; --i) loop.push_back({c + i, c + h});
    for (long i = h; i > -h; --i) loop.push_back({c - h, c + i});
    double winding = 0;
    for (std::size_t i = 0; i < loop.size(); ++i) {
        const auto [x0, y0] = loop[i];
        const auto [x1, y1] = loop[(i + 1) % loop.size()];
        winding += std::arg(f(x1, y1) / f(x0, y0));
    }
    EXPECT_NEAR(winding, 2 * pi, 1e-9);
}

TEST(SynthMode, UnderResolvedIsRejected) {
    const auto g = default_grid();
    EXPECT_THROW(synth_mode(lg(0, 0, 10e-6), g, 0.0, k810), ResolutionError);
    EXPECT_NO_THROW(synth_mode(lg(0, 0, 10e-6), g, 0.0, k810, 1.0, 2.0));
}

TEST(SynthMode, InvalidIndicesRejected) {
    const auto g = default_grid();
    EXPECT_THROW(synth_mode(lg(1, -1), g, 0.0, k810), ConfigError);
    EXPECT_THROW(synth_mode(hg(-1, 0), g, 0.0, k810), ConfigError);
    EXPECT_THROW(synth_mode(lg(0, 0, 0.0), g, 0.0, k810), ConfigError);
}

TEST(Project, SelfOverlapIsOne) {
    const auto g = default_grid();
    for (const auto& m : {lg(0, 0), lg(2, 1), hg(1, 2)})
        EXPECT_NEAR(std::abs(project(synth_mode(m, g, 5e-4, k810), m, g, 5e-4, k810) - cd(1, 0)), 0.0, 1e-3);
}

TEST(Project, OppositeVorticesAreOrthogonal) {
    const auto g = default_grid();
    EXPECT_LT(std::abs(project(synth_mode(lg(1, 0), g, 0.0, k810), lg(-1, 0), g, 0.0, k810)), 1e-6);
}

TEST(Project, Linearity) {
    const auto g = default_grid();
    const cd a{0.3, -0.7}, b{1.1, 0.2};
    const auto f = superpose({{a, lg(1, 0)}, {b, lg(0, 1)}}, g, 0.0, k810);
    EXPECT_LT(std::abs(project(f, lg(1, 0), g, 0.0, k810) - a), 1e-3);
}

TEST(Project, GridMismatchIsShapeError) {
    const auto g = default_grid();
    const auto g2 = build_grid({32, 32, 4e-6, 4e-6, 1e-3, 1e-5});
    EXPECT_THROW(project(synth_mode(lg(0, 0), g, 0.0, k810), lg(0, 0), g2, 0.0, k810), ShapeError);
}

TEST(Superpose, OppositeVorticesFormTwoLobeMode) {
    const auto g = default_grid();
    const auto f = superpose({{1.0, lg(1, 0)}, {1.0, lg(-1, 0)}}, g, 0.0, k810, true);
    const auto h10 = synth_mode(hg(1, 0), g, 0.0, k810);
    // the sum is HG10 up to a global phase
    EXPECT_NEAR(std::abs(inner(h10, f)), 1.0, 1e-3);
    // two bright lobes on the x axis, dark along y
    const long c = g.nx / 2;
    EXPECT_GT(std::abs(f(c + 4, c)), 10 * std::abs(f(c, c + 4)));
}

TEST(Superpose, SingleTermIsIdentity) {
    const auto g = default_grid();
    const auto a = superpose({{1.0, lg(2, 0)}}, g, 1e-4, k810), b = synth_mode(lg(2, 0), g, 1e-4, k810);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], b[i]);
}

TEST(Superpose, OppositePhasesCancel) {
    const auto g = default_grid();
    const auto f = superpose({{1.0, lg(1, 1)}, {std::polar(1.0, pi), lg(1, 1)}}, g, 0.0, k810);
    EXPECT_LT(f.power(), 1e-28);
}

TEST(Superpose, EmptyListRejected) {
    EXPECT_THROW(superpose({}, default_grid(), 0.0, k810), ConfigError);
}

TEST(ModeSet, RejectsMixedAndDuplicateModes) {
    ModeSet mixed{{lg(0, 0), hg(1, 0)}};
    EXPECT_THROW(mixed.validate(), ConfigError);
    ModeSet dup{{lg(1, 0), lg(1, 0, 30e-6)}};
    EXPECT_THROW(dup.validate(), ConfigError);
}

TEST(ModeSet, PostSelection) {
    ModeSet s{{lg(-1, 0), lg(0, 1), lg(1, 0), lg(0, 0)}, PostSelect::LG_p0};
    EXPECT_EQ(s.selected(), (std::vector<std::size_t>{0, 2, 3}));
    ModeSet h{{hg(0, 0), hg(0, 1), hg(2, 0)}, PostSelect::HG_m0};
    EXPECT_EQ(h.selected(), (std::vector<std::size_t>{0, 2}));
}

// Orthonormality of common-waist sets on the default grid.
TEST(ModeProperties, GramMatrixIsIdentity) {
    const auto g = default_grid();
    for (Basis b : {Basis::LG, Basis::HG}) {
        std::vector<ModeSpec> set;
        if (b == Basis::LG) {
            for (int l = -2; l <= 2; ++l)
                for (int p = 0; p <= 1; ++p) set.push_back(lg(l, p));
        } else {
            for (int n = 0; n <= 3; ++n)
                for (int m = 0; m + n <= 3; ++m) set.push_back(hg(n, m));
        }
        std::vector<ComplexField2D> f;
        for (const auto& m : set) f.push_back(synth_mode(m, g, 0.0, k810));
        for (std::size_t a = 0; a < f.size(); ++a)
            for (std::size_t c = 0; c < f.size(); ++c)
                EXPECT_NEAR(std::abs(inner(f[a], f[c]) - cd(a == c ? 1.0 : 0.0, 0)), 0.0, 1e-3)
                    << set[a].label() << " / " << set[c].label();
    }
}

TEST(ModeProperties, TruncatedProjectionNeverIncreasesNorm) {
    const auto g = default_grid();
    std::vector<ModeSpec> set;
    for (int l = -2; l <= 2; ++l) set.push_back(lg(l, 0));
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        ComplexField2D f(g);
        const NormalStream rng(seed, StreamId::signal_vacuum, 0);
        for (std::size_t i = 0; i < f.size(); ++i) f[i] = rng.complex(static_cast<std::uint32_t>(i));
        f += synth_mode(lg(1, 0), g, 0.0, k810) *= cd(50.0, 0.0);
        std::vector<ModeTerm> terms;
        for (const auto& m : set) terms.push_back({project(f, m, g, 0.0, k810), m});
        EXPECT_LE(superpose(terms, g, 0.0, k810).power(), f.power() * (1 + 1e-12));
    }
}

TEST(ModeProperties, LgToHgMatchesFieldsPointwise) {
    const auto g = default_grid();
    for (auto [l, p] : std::vector<std::pair<int, int>>{{1, 0}, {-1, 0}, {2, 0}, {0, 1}, {-1, 1}}) {
        std::vector<ModeTerm> terms;
        for (const auto& [nm, c] : lg_to_hg(l, p)) terms.push_back({c, hg(nm.first, nm.second)});
        const auto a = synth_mode(lg(l, p), g, 0.0, k810), b = superpose(terms, g, 0.0, k810);
        double diff = 0;
        for (std::size_t i = 0; i < a.size(); ++i) diff += std::norm(a[i] - b[i]);
        EXPECT_LT(std::sqrt(diff * g.cell_area()), 1e-10) << "l=" << l << " p=" << p;
    }
}

TEST(ModeProperties, LgHgChangeOfBasisRoundTrip) {
    for (int order = 1; order <= 3; ++order) {
        std::vector<std::pair<int, int>> labels;
        const auto u = lg_hg_matrix(order, &labels);
        const std::size_t n = u.size();
        // amplitudes of LG(1,0)+LG(-1,0) (order 1) or a generic vector
        std::vector<cd> a(n);
        for (std::size_t j = 0; j < n; ++j) a[j] = cd(1.0 + 0.1 * j, 0.05 * j);
        std::vector<cd> h(n, cd{}), back(n, cd{});
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t k = 0; k < n; ++k) h[k] += a[j] * u[j][k];
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t k = 0; k < n; ++k) back[j] += h[k] * std::conj(u[j][k]);
        for (std::size_t j = 0; j < n; ++j) EXPECT_LT(std::abs(back[j] - a[j]), 1e-10);
    }
}
