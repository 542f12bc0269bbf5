//
// test_timebase.cpp
//
// Copyright 2026 The ttnet Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

#include <gtest/gtest.h>

#include <random>

#include "ttnet/timebase.hpp"

using namespace ttnet;

namespace {

// Smallest b with 2^b >= number of distinct ticks.
unsigned bits_by_doubling(std::uint64_t interval, std::uint64_t res) {
    std::uint64_t distinct = (interval + res - 1) / res;
    unsigned b = 0;
    while (b < 64 && (std::uint64_t{1} << b) < distinct)
        ++b;
    return b;
}

}  // namespace

TEST(RequiredBits, OneSecondAtOnePicosecond) {
    EXPECT_EQ(required_bits(Picoseconds{1'000'000'000'000}, 1), 40u);
    static_assert(required_bits(Picoseconds{1'000'000'000'000}, 1) == 40);
}

TEST(RequiredBits, SingleValue) { EXPECT_EQ(required_bits(Picoseconds{1}, 1), 0u); }

TEST(RequiredBits, NanosecondResolution) { EXPECT_EQ(required_bits(Picoseconds{1'000'000'000'000}, 1000), 30u); }

TEST(RequiredBits, TwoSecondsNeedOneMoreBit) { EXPECT_EQ(required_bits(Picoseconds{2'000'000'000'000}, 1), 41u); }

TEST(RequiredBits, RejectsNonPositive) {
    EXPECT_THROW(required_bits(Picoseconds{0}, 1), Error);
    EXPECT_THROW(required_bits(Picoseconds{-5}, 1), Error);
    EXPECT_THROW(required_bits(Picoseconds{10}, 0), Error);
}

TEST(RequiredBits, MatchesDoublingOracle) {
    std::mt19937_64 rng(7);
    for (int i = 0; i < 20000; ++i) {
        std::uint64_t interval = 1 + rng() % (std::uint64_t{1} << (1 + rng() % 62));
        std::uint64_t res = 1 + rng() % 5000;
        ASSERT_EQ(required_bits(Picoseconds{static_cast<std::int64_t>(interval)}, static_cast<std::int64_t>(res)),
                  bits_by_doubling(interval, res))
            << interval << " / " << res;
    }
}

TEST(RequiredBits, MonotoneInIntervalAndResolution) {
    std::mt19937_64 rng(11);
    for (int i = 0; i < 5000; ++i) {
        std::int64_t a = 1 + static_cast<std::int64_t>(rng() % 4'000'000'000'000ULL);
        std::int64_t b = a + static_cast<std::int64_t>(rng() % 1'000'000'000ULL);
        std::int64_t r = 1 + static_cast<std::int64_t>(rng() % 1000);
        EXPECT_LE(required_bits(Picoseconds{a}, r), required_bits(Picoseconds{b}, r));
        EXPECT_GE(required_bits(Picoseconds{a}, r), required_bits(Picoseconds{a}, r + 1));
    }
}

TEST(RequiredBits, OffsetsFit) {
    std::mt19937_64 rng(3);
    for (int i = 0; i < 20000; ++i) {
        std::int64_t interval = 1 + static_cast<std::int64_t>(rng() % 3'000'000'000'000ULL);
        std::int64_t res = 1 + static_cast<std::int64_t>(rng() % 100);
        std::int64_t x = static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(interval));
        unsigned bits = required_bits(Picoseconds{interval}, res);
        auto q = static_cast<std::uint64_t>(x / res);
        if (bits == 0)
            EXPECT_EQ(q, 0u);
        else
            EXPECT_LT(q, std::uint64_t{1} << bits);
    }
}

TEST(OverflowHorizon, SignedSixtyFourBitTagger) {
    double days = static_cast<double>(overflow_horizon(63, 1).count());
    EXPECT_GE(days, 106.0);
    EXPECT_LE(days, 107.0);
    EXPECT_NEAR(days, 9223372036854775808.0 / 8.64e16, 1e-9);
}

TEST(OverflowHorizon, FortyBits) {
    double seconds = static_cast<double>(overflow_horizon(40, 1).count()) * 86400.0;
    EXPECT_NEAR(seconds, 1.0995116, 1e-6);
}

TEST(OverflowHorizon, RejectsOutOfRange) {
    EXPECT_THROW(overflow_horizon(0, 1), Error);
    EXPECT_THROW(overflow_horizon(64, 1), Error);
    EXPECT_THROW(overflow_horizon(10, 0), Error);
}

TEST(OverflowHorizon, UnsignedIsTwiceSigned) {
    EXPECT_NEAR(static_cast<double>(overflow_horizon_unsigned64(1).count()),
                2.0 * static_cast<double>(overflow_horizon(63, 1).count()), 1e-9);
}

TEST(AbsTime, PassThrough) {
    EXPECT_EQ(abs_time_of(RelativeTag{1, Picoseconds{0}}, PpsEpoch{100, Picoseconds{123}}), (AbsTime{100, Picoseconds{0}}));
    EXPECT_EQ(abs_time_of(RelativeTag{1, Picoseconds{500'000'000'000}}, PpsEpoch{7, Picoseconds{0}}),
              (AbsTime{7, Picoseconds{500'000'000'000}}));
}

TEST(AbsTime, LexicographicOrder) {
    EXPECT_LT((AbsTime{7, Picoseconds{900'000'000'000}}), (AbsTime{8, Picoseconds{100'000}}));
}

TEST(AbsTime, OrderMatchesReconstructedValue) {
    std::mt19937_64 rng(5);
    using i128 = __int128;
    for (int i = 0; i < 20000; ++i) {
        AbsTime x{rng() % 1000, Picoseconds{static_cast<std::int64_t>(rng() % 1'000'000'000'000ULL)}};
        AbsTime y{rng() % 1000, Picoseconds{static_cast<std::int64_t>(rng() % 1'000'000'000'000ULL)}};
        if (i % 3 == 0)
            y.abs_second = x.abs_second;
        i128 vx = i128(x.abs_second) * 1'000'000'000'000 + x.t_rel.count();
        i128 vy = i128(y.abs_second) * 1'000'000'000'000 + y.t_rel.count();
        ASSERT_EQ(x < y, vx < vy);
        ASSERT_EQ(x == y, vx == vy);
    }
}

TEST(CalibrationFactorType, DefaultIsIdentity) {
    CalibrationFactor cf;
    EXPECT_TRUE(cf.is_identity());
    EXPECT_EQ(cf.multiplier(), 1.0L);
}
