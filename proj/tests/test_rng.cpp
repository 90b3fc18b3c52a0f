#include <cmath>

#include <gtest/gtest.h>

#include <spdcinv/rng.hpp>

using namespace spdcinv;

// Published known-answer vectors for Philox4x32-10.
TEST(Philox, KnownAnswerZero) {
    const auto r = Philox4x32::block({0, 0, 0, 0}, {0, 0});
    EXPECT_EQ(r[0], 0x6627e8d5u);
    EXPECT_EQ(r[1], 0xe169c58du);
    EXPECT_EQ(r[2], 0xbc57ac4cu);
    EXPECT_EQ(r[3], 0x9b00dbd8u);
}

TEST(Philox, KnownAnswerAllOnes) {
    const auto r = Philox4x32::block({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, {0xffffffffu, 0xffffffffu});
    EXPECT_EQ(r[0], 0x408f276du);
    EXPECT_EQ(r[1], 0x41c83b0eu);
    EXPECT_EQ(r[2], 0xa20bc7c6u);
    EXPECT_EQ(r[3], 0x6d5451fdu);
}

TEST(Philox, KnownAnswerPi) {
    const auto r = Philox4x32::block({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, {0xa4093822u, 0x299f31d0u});
    EXPECT_EQ(r[0], 0xd16cfe09u);
    EXPECT_EQ(r[1], 0x94fdccebu);
    EXPECT_EQ(r[2], 0x5001e420u);
    EXPECT_EQ(r[3], 0x24126ea1u);
}

TEST(NormalStream, SameKeySameValues) {
    const NormalStream a(42, StreamId::signal_vacuum, 7), b(42, StreamId::signal_vacuum, 7);
    for (std::uint32_t i = 0; i < 100; ++i) EXPECT_EQ(a.complex(i), b.complex(i));
}

TEST(NormalStream, StreamsAreDisjoint) {
    const NormalStream a(42, StreamId::signal_vacuum, 7), b(42, StreamId::idler_vacuum, 7), c(42, StreamId::signal_vacuum, 8),
        d(43, StreamId::signal_vacuum, 7);
    int equal = 0;
    for (std::uint32_t i = 0; i < 100; ++i)
        equal += (a.normal(i) == b.normal(i)) + (a.normal(i) == c.normal(i)) + (a.normal(i) == d.normal(i));
    EXPECT_EQ(equal, 0);
}

TEST(NormalStream, MomentsOfStandardNormal) {
    const NormalStream s(3, StreamId::parameter_init, 0);
    const int n = 200000;
    double m1 = 0, m2 = 0, m4 = 0;
    for (int i = 0; i < n / 2; ++i) {
        const auto [a, b] = s.pair(static_cast<std::uint32_t>(i));
        for (double x : {a, b}) {
            m1 += x;
            m2 += x * x;
            m4 += x * x * x * x;
        }
    }
    m1 /= n;
    m2 /= n;
    m4 /= n;
    // standard errors: 1/sqrt(n), sqrt(2/n), sqrt(96/n)
    EXPECT_NEAR(m1, 0.0, 5.0 / std::sqrt(n));
    EXPECT_NEAR(m2, 1.0, 5.0 * std::sqrt(2.0 / n));
    EXPECT_NEAR(m4, 3.0, 5.0 * std::sqrt(96.0 / n));
}

TEST(NormalStream, ComplexScalesBothQuadratures) {
    const NormalStream s(9, StreamId::idler_vacuum, 1);
    const auto [a, b] = s.pair(5);
    const cd z = s.complex(5, 2.5);
    EXPECT_DOUBLE_EQ(z.real(), 2.5 * a);
    EXPECT_DOUBLE_EQ(z.imag(), 2.5 * b);
}
