#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "dual.hpp"
#include "errors.hpp"
#include "grid.hpp"

namespace spdcinv {

enum class Basis { LG, HG };
enum class PostSelect { none, LG_p0, HG_m0 };

inline std::string to_string(Basis b) { return b == Basis::LG ? "LG" : "HG"; }
inline std::string to_string(PostSelect p) {
    switch (p) {
    case PostSelect::LG_p0: return "LG_p0";
    case PostSelect::HG_m0: return "HG_m0";
    default: return "none";
    }
}

/// One transverse mode. LG: index1 = azimuthal l, index2 = radial p.
/// HG: index1 = x-order n, index2 = y-order m.
struct ModeSpec {
    Basis basis = Basis::LG;
    int index1 = 0;
    int index2 = 0;
    double waist = 0;
    double waist_plane_z = 0;

    int order() const { return basis == Basis::LG ? 2 * index2 + std::abs(index1) : index1 + index2; }
    std::string label() const {
        return basis == Basis::LG ? "LG l=" + std::to_string(index1) + " p=" + std::to_string(index2)
                                  : "HG n=" + std::to_string(index1) + " m=" + std::to_string(index2);
    }
    void validate() const {
        if (basis == Basis::LG && index2 < 0) throw ConfigError("mode " + label() + ": radial index must be >= 0");
        if (basis == Basis::HG && (index1 < 0 || index2 < 0))
            throw ConfigError("mode " + label() + ": HG orders must be >= 0");
        if (!(waist > 0)) throw ConfigError("mode " + label() + ": waist must be positive");
    }
    bool same_indices(const ModeSpec& o) const {
        return basis == o.basis && index1 == o.index1 && index2 == o.index2;
    }
};

struct ModeSet {
    std::vector<ModeSpec> modes;
    PostSelect postselect = PostSelect::none;

    std::size_t size() const { return modes.size(); }
    bool empty() const { return modes.empty(); }
    const ModeSpec& operator[](std::size_t i) const { return modes[i]; }

    void validate() const {
        validate_indices();
        for (const auto& m : modes) m.validate();
    }
    /// Structural checks only; waists may live elsewhere (see ParamVector).
    void validate_indices() const {
        std::set<std::pair<int, int>> seen;
        for (const auto& m : modes) {
            if (m.basis == Basis::LG && m.index2 < 0) throw ConfigError("mode " + m.label() + ": radial index must be >= 0");
            if (m.basis == Basis::HG && (m.index1 < 0 || m.index2 < 0))
                throw ConfigError("mode " + m.label() + ": HG orders must be >= 0");
            if (m.basis != modes.front().basis) throw ConfigError("mode set mixes LG and HG modes");
            if (!seen.insert({m.index1, m.index2}).second)
                throw ConfigError("mode set contains duplicate mode " + m.label());
        }
    }

    bool passes(const ModeSpec& m) const {
        switch (postselect) {
        case PostSelect::LG_p0: return m.basis == Basis::LG && m.index2 == 0;
        case PostSelect::HG_m0: return m.basis == Basis::HG && m.index2 == 0;
        default: return true;
        }
    }
    /// Indices of members that survive post-selection.
    std::vector<std::size_t> selected() const {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < modes.size(); ++i)
            if (passes(modes[i])) idx.push_back(i);
        return idx;
    }
};

/// Minimum waist/dx ratio accepted by mode synthesis.
inline constexpr double default_min_points_per_waist = 6.0;

namespace detail {

inline double factorial(int n) {
    double f = 1.0;
    for (int i = 2; i <= n; ++i) f *= i;
    return f;
}

template <class T>
T generalized_laguerre(int p, int alpha, T x) {
    if (p == 0) return T(1.0);
    T prev(1.0);
    T cur = T(1.0 + alpha) - x;
    for (int k = 1; k < p; ++k) {
        T next = (T(2.0 * k + 1.0 + alpha) - x) * cur - T(k + alpha) * prev;
        next = next / T(k + 1.0);
        prev = cur;
        cur = next;
    }
    return cur;
}

/// Physicists' Hermite polynomial.
template <class T>
T hermite(int n, T x) {
    if (n == 0) return T(1.0);
    T prev(1.0);
    T cur = T(2.0) * x;
    for (int k = 1; k < n; ++k) {
        T next = T(2.0) * x * cur - T(2.0 * k) * prev;
        prev = cur;
        cur = next;
    }
    return cur;
}

template <class T>
T ipow(T x, int n) {
    T r(1.0);
    for (int i = 0; i < n; ++i) r = r * x;
    return r;
}

/// Beam geometry at distance dz from the waist plane.
template <class T>
struct BeamPlane {
    T w;       // local beam radius
    T inv_r;   // wavefront curvature 1/R
    T gouy;    // atan(dz/zR)
    double k;  // wavenumber
};

template <class T>
BeamPlane<T> beam_plane(T w0, double k, double dz) {
    using std::atan;
    using std::sqrt;
    if (k <= 0 || dz == 0.0) return {w0, T(0.0), T(0.0), k};
    const T zr = T(0.5 * k) * w0 * w0;
    const T ratio = T(dz) / zr;
    const T w = w0 * sqrt(T(1.0) + ratio * ratio);
    const T inv_r = T(dz) / (T(dz * dz) + zr * zr);
    return {w, inv_r, atan(ratio), k};
}

/// Real amplitude and phase of the analytic mode at transverse point (x, y).
/// The fields satisfy i dE/dz = -lap(E)/(2k): curvature exp(+i k r^2 / 2R) and
/// Gouy phase exp(-i (N+1) psi).
template <class T>
std::pair<T, T> mode_amp_phase(const ModeSpec& s, const BeamPlane<T>& b, double x, double y) {
    using std::atan;
    using std::exp;
    using std::sqrt;
    const double r2 = x * x + y * y;
    const T w2 = b.w * b.w;
    const T gauss = exp(T(-r2) / w2);
    const T curvature = T(0.5 * b.k * r2) * b.inv_r;
    const T gouy = T(static_cast<double>(s.order() + 1)) * b.gouy;
    if (s.basis == Basis::LG) {
        const int al = std::abs(s.index1);
        const int p = s.index2;
        const double c = std::sqrt(2.0 * factorial(p) / (pi * factorial(p + al)));
        const T rho = T(std::sqrt(2.0 * r2)) / b.w;
        const T lag = generalized_laguerre(p, al, T(2.0 * r2) / w2);
        const T amp = T(c) / b.w * ipow(rho, al) * lag * gauss;
        const double phi = (r2 > 0) ? std::atan2(y, x) : 0.0;
        return {amp, T(s.index1 * phi) + curvature - gouy};
    }
    const int n = s.index1, m = s.index2;
    const double c = std::sqrt(2.0 / pi) / std::sqrt(std::ldexp(1.0, n + m) * factorial(n) * factorial(m));
    const T sq = sqrt(T(2.0)) / b.w;
    const T amp = T(c) / b.w * hermite(n, sq * T(x)) * hermite(m, sq * T(y)) * gauss;
    return {amp, curvature - gouy};
}

inline void check_resolution(const ModeSpec& s, double waist, const SimGrid& g, double min_ppw) {
    const double step = std::max(g.dx, g.dy);
    if (waist / step < min_ppw)
        throw ResolutionError("mode " + s.label() + ": waist " + std::to_string(waist) + " m is under-resolved by step " +
                              std::to_string(step) + " m (needs >= " + std::to_string(min_ppw) + " points per waist)");
}

} // namespace detail

/// Analytic LG/HG mode on the grid at longitudinal position z (crystal
/// coordinates). `k` is the wavenumber of the wave the mode describes; k = 0
/// evaluates the transverse profile at the waist regardless of z.
/// `scale` multiplies the unit-norm mode (1 gives unit L2 norm).
inline ComplexField2D synth_mode(const ModeSpec& s, const SimGrid& g, double z, double k, double scale = 1.0,
                                 double min_ppw = default_min_points_per_waist) {
    s.validate();
    detail::check_resolution(s, s.waist, g, min_ppw);
    const auto plane = detail::beam_plane<double>(s.waist, k, z - s.waist_plane_z);
    ComplexField2D f(g);
    for (long iy = 0; iy < g.ny; ++iy)
        for (long ix = 0; ix < g.nx; ++ix) {
            const auto [a, ph] = detail::mode_amp_phase(s, plane, g.x_at(ix), g.y_at(iy));
            f(ix, iy) = (scale * a) * cd(std::cos(ph), std::sin(ph));
        }
    return f;
}

/// Mode samples together with their derivative with respect to the waist.
/// When `peak_normalized` the unit-norm mode is multiplied by w0 sqrt(pi/2),
/// making the fundamental Gaussian peak at 1 for every waist.
struct ModeWithDerivative {
    ComplexField2D value;
    ComplexField2D d_waist;
};

inline double peak_scale(double waist) { return waist * std::sqrt(pi / 2.0); }

inline ModeWithDerivative synth_mode_dwaist(const ModeSpec& s, const SimGrid& g, double z, double k,
                                            bool peak_normalized, double min_ppw = default_min_points_per_waist) {
    using D = Dual<double>;
    s.validate();
    detail::check_resolution(s, s.waist, g, min_ppw);
    const D w0(s.waist, 1.0);
    const auto plane = detail::beam_plane<D>(w0, k, z - s.waist_plane_z);
    const D scale = peak_normalized ? w0 * D(std::sqrt(pi / 2.0)) : D(1.0);
    ModeWithDerivative out{ComplexField2D(g), ComplexField2D(g)};
    for (long iy = 0; iy < g.ny; ++iy)
        for (long ix = 0; ix < g.nx; ++ix) {
            auto [a, ph] = detail::mode_amp_phase(s, plane, g.x_at(ix), g.y_at(iy));
            a = a * scale;
            const cd e = std::polar(1.0, ph.v);
            out.value(ix, iy) = a.v * e;
            out.d_waist(ix, iy) = cd(a.d, a.v * ph.d) * e;
        }
    return out;
}

/// Overlap sum conj(mode) * field dx dy.
inline cd inner(const ComplexField2D& mode, const ComplexField2D& field) {
    mode.require_same(field);
    cd s{0.0, 0.0};
    for (std::size_t i = 0; i < field.size(); ++i) s += std::conj(mode[i]) * field[i];
    return s * (field.dx * field.dy);
}

inline cd project(const ComplexField2D& field, const ModeSpec& s, const SimGrid& g, double z, double k) {
    if (!field.on(g)) throw ShapeError("project: field is not on the supplied grid");
    return inner(synth_mode(s, g, z, k), field);
}

struct ModeTerm {
    cd coefficient;
    ModeSpec mode;
};

inline ComplexField2D superpose(const std::vector<ModeTerm>& terms, const SimGrid& g, double z, double k,
                                bool renormalize = false) {
    if (terms.empty()) throw ConfigError("superpose: empty term list");
    ComplexField2D out(g);
    for (const auto& t : terms) {
        const auto m = synth_mode(t.mode, g, z, k);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += t.coefficient * m[i];
    }
    if (renormalize) {
        const double p = out.power();
        if (p > 0) out *= cd(1.0 / std::sqrt(p), 0.0);
    }
    return out;
}

/// Coefficients c_k with LG(l, p) = sum_k c_k HG(N - k, k), N = 2p + |l|,
/// for the exp(+i l phi) convention used by synth_mode.
inline std::vector<std::pair<std::pair<int, int>, cd>> lg_to_hg(int l, int p) {
    // LG with (n, m) = (p + max(l,0), p + max(-l,0)) expands as sum_k (-i)^k b(n,m,k) HG(N-k,k).
    const int n = p + std::max(l, 0);
    const int m = p + std::max(-l, 0);
    const int order = n + m;
    std::vector<std::pair<std::pair<int, int>, cd>> out;
    for (int k = 0; k <= order; ++k) {
        // (1/k!) d^k/dt^k (1-t)^n (1+t)^m at t = 0 = sum_j C(n,j)(-1)^j C(m,k-j)
        double deriv = 0.0;
        for (int j = 0; j <= std::min(k, n); ++j) {
            if (k - j > m) continue;
            const double cn = detail::factorial(n) / (detail::factorial(j) * detail::factorial(n - j));
            const double cm = detail::factorial(m) / (detail::factorial(k - j) * detail::factorial(m - k + j));
            deriv += ((j % 2) ? -1.0 : 1.0) * cn * cm;
        }
        const double b = std::sqrt(detail::factorial(order - k) * detail::factorial(k) /
                                   (std::ldexp(1.0, order) * detail::factorial(n) * detail::factorial(m))) *
                         deriv;
        static const cd ipow[4] = {{1, 0}, {0, -1}, {-1, 0}, {0, 1}};
        // Laguerre sign convention: synth_mode uses L_p^{|l|}, which differs from the
        // (n, m) ladder form by (-1)^p.
        const double sign = (p % 2) ? -1.0 : 1.0;
        const cd c = sign * ipow[k % 4] * b;
        if (std::abs(c) > 1e-15) out.push_back({{order - k, k}, c});
    }
    return out;
}

/// Unitary change of basis for one mode order. Row j = LG mode j (ordered by
/// l = -N, -N+2, ..., N), column k = HG(N-k, k).
inline std::vector<std::vector<cd>> lg_hg_matrix(int order, std::vector<std::pair<int, int>>* lg_labels = nullptr) {
    std::vector<std::vector<cd>> u;
    if (lg_labels) lg_labels->clear();
    for (int l = -order; l <= order; l += 2) {
        const int p = (order - std::abs(l)) / 2;
        std::vector<cd> row(static_cast<std::size_t>(order + 1), cd{});
        for (const auto& [nm, c] : lg_to_hg(l, p)) row[static_cast<std::size_t>(nm.second)] = c;
        u.push_back(std::move(row));
        if (lg_labels) lg_labels->push_back({l, p});
    }
    return u;
}

} // namespace spdcinv
