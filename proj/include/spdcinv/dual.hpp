#pragma once

#include <cmath>

namespace spdcinv {

/// Forward-mode dual number carrying one directional derivative. Used to get
/// exact waist derivatives of analytic mode functions.
template <class T>
struct Dual {
    T v{};
    T d{};

    constexpr Dual() = default;
    constexpr Dual(T value) : v(value) {}
    constexpr Dual(T value, T deriv) : v(value), d(deriv) {}

    friend constexpr Dual operator+(Dual a, Dual b) { return {a.v + b.v, a.d + b.d}; }
    friend constexpr Dual operator-(Dual a, Dual b) { return {a.v - b.v, a.d - b.d}; }
    friend constexpr Dual operator-(Dual a) { return {-a.v, -a.d}; }
    friend constexpr Dual operator*(Dual a, Dual b) { return {a.v * b.v, a.d * b.v + a.v * b.d}; }
    friend constexpr Dual operator/(Dual a, Dual b) { return {a.v / b.v, (a.d * b.v - a.v * b.d) / (b.v * b.v)}; }
    Dual& operator+=(Dual b) { return *this = *this + b; }
    Dual& operator-=(Dual b) { return *this = *this - b; }
    Dual& operator*=(Dual b) { return *this = *this * b; }
    Dual& operator/=(Dual b) { return *this = *this / b; }
};

template <class T>
Dual<T> exp(Dual<T> a) {
    const T e = std::exp(a.v);
    return {e, e * a.d};
}
template <class T>
Dual<T> sqrt(Dual<T> a) {
    const T s = std::sqrt(a.v);
    return {s, a.d / (T(2) * s)};
}
template <class T>
Dual<T> atan(Dual<T> a) {
    return {std::atan(a.v), a.d / (T(1) + a.v * a.v)};
}

inline double value_of(double x) { return x; }
template <class T>
T value_of(const Dual<T>& x) { return x.v; }
inline double deriv_of(double) { return 0.0; }
template <class T>
T deriv_of(const Dual<T>& x) { return x.d; }

} // namespace spdcinv
