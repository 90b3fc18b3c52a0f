#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <cstdint>

#include "grid.hpp"

namespace spdcinv {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11). Stateless:
/// the output block is a pure function of (counter, key), so any realization of
/// any stream can be regenerated independently of evaluation order.
struct Philox4x32 {
    using Counter = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    static Counter block(Counter ctr, Key key) {
        constexpr std::uint32_t m0 = 0xD2511F53u, m1 = 0xCD9E8D57u;
        constexpr std::uint32_t w0 = 0x9E3779B9u, w1 = 0xBB67AE85u;
        for (int round = 0; round < 10; ++round) {
            const std::uint64_t p0 = static_cast<std::uint64_t>(m0) * ctr[0];
            const std::uint64_t p1 = static_cast<std::uint64_t>(m1) * ctr[2];
            const auto hi0 = static_cast<std::uint32_t>(p0 >> 32), lo0 = static_cast<std::uint32_t>(p0);
            const auto hi1 = static_cast<std::uint32_t>(p1 >> 32), lo1 = static_cast<std::uint32_t>(p1);
            ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
            key[0] += w0;
            key[1] += w1;
        }
        return ctr;
    }
};

/// Stream identifiers keep different consumers of one master seed disjoint.
enum class StreamId : std::uint32_t {
    idler_vacuum = 1,
    signal_vacuum = 2,
    crystal_perturbation = 3,
    parameter_init = 4,
};

/// Keyed stream of standard normals: sample(i) depends only on
/// (seed, stream, sub, i).
class NormalStream {
public:
    NormalStream(std::uint64_t seed, StreamId stream, std::uint64_t sub)
        : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
          stream_(static_cast<std::uint32_t>(stream)),
          sub_lo_(static_cast<std::uint32_t>(sub)),
          sub_hi_(static_cast<std::uint32_t>(sub >> 32)) {}

    /// Two independent N(0,1) values via Box-Muller from one Philox block.
    std::pair<double, double> pair(std::uint32_t index) const {
        const auto r = Philox4x32::block({index, stream_, sub_lo_, sub_hi_}, key_);
        const double u1 = to_unit(r[0], r[1]);
        const double u2 = to_unit(r[2], r[3]);
        const double rad = std::sqrt(-2.0 * std::log(u1));
        const double ang = 2.0 * pi * u2;
        return {rad * std::cos(ang), rad * std::sin(ang)};
    }

    /// Circular complex Gaussian with standard deviation `sigma` per quadrature.
    cd complex(std::uint32_t index, double sigma = 1.0) const {
        const auto [a, b] = pair(index);
        return {sigma * a, sigma * b};
    }

    double normal(std::uint32_t index) const { return pair(index).first; }

private:
    /// 53-bit uniform in the open interval (0, 1).
    static double to_unit(std::uint32_t hi, std::uint32_t lo) {
        const std::uint64_t bits = ((static_cast<std::uint64_t>(hi) << 32) | lo) >> 11;
        return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
    }

    Philox4x32::Key key_;
    std::uint32_t stream_, sub_lo_, sub_hi_;
};

} // namespace spdcinv
