//
// test_ttagent.cpp
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

#include <algorithm>
#include <map>
#include <random>

#include "ttnet/clocksim.hpp"
#include "ttnet/ttagent.hpp"

using namespace ttnet;

namespace {

constexpr std::int64_t kSec = 1'000'000'000'000;

Errc code_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "no error raised";
    return Errc::io_error;
}

CalibrationFactor cf_of(std::int64_t measured) { return CalibrationFactor{Picoseconds{kSec}, Picoseconds{measured}}; }

}  // namespace

TEST(Segment, TagBeforeFirstPpsIsDiscarded) {
    std::vector<DeviceEvent> s{DeviceEvent::tag(1, Picoseconds{999}), DeviceEvent::pps(0, Picoseconds{1000}, 5),
                               DeviceEvent::pps(0, Picoseconds{1000 + kSec}, 6)};
    SegmentCounters c;
    auto iv = segment_by_pps(s, &c);
    ASSERT_EQ(iv.size(), 1u);
    EXPECT_TRUE(iv[0].tags.empty());
    EXPECT_EQ(c.discarded_before_first_pps, 1u);
}

TEST(Segment, TagOnPpsEdgeBelongsToThatInterval) {
    std::vector<DeviceEvent> s{DeviceEvent::pps(0, Picoseconds{1000}, 5), DeviceEvent::tag(1, Picoseconds{1000}),
                               DeviceEvent::pps(0, Picoseconds{1000 + kSec}, 6), DeviceEvent::tag(1, Picoseconds{1000 + kSec}),
                               DeviceEvent::pps(0, Picoseconds{1000 + 2 * kSec}, 7)};
    auto iv = segment_by_pps(s);
    ASSERT_EQ(iv.size(), 2u);
    ASSERT_EQ(iv[0].tags.size(), 1u);
    EXPECT_EQ(make_relative(iv[0].tags[0].t_local, iv[0].open).count(), 0);
    ASSERT_EQ(iv[1].tags.size(), 1u);
    EXPECT_EQ(iv[1].open.abs_second, 6u);
    EXPECT_EQ(make_relative(iv[1].tags[0].t_local, iv[1].open).count(), 0);
}

TEST(Segment, MatchesBruteForceAssignment) {
    std::mt19937_64 rng(21);
    for (int round = 0; round < 200; ++round) {
        std::vector<std::int64_t> pps{static_cast<std::int64_t>(rng() % 1000)};
        for (int k = 1; k < 3; ++k)
            pps.push_back(pps.back() + kSec - 500'000 + static_cast<std::int64_t>(rng() % 1'000'000));
        std::vector<std::int64_t> tags;
        for (int i = 0; i < 10; ++i)
            tags.push_back(static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(pps.back() + kSec / 2)));
        if (round % 4 == 0)
            tags.push_back(pps[1]);

        std::vector<DeviceEvent> s;
        for (std::size_t k = 0; k < pps.size(); ++k)
            s.push_back(DeviceEvent::pps(0, Picoseconds{pps[k]}, 100 + k));
        for (auto t : tags)
            s.push_back(DeviceEvent::tag(1, Picoseconds{t}));
        std::sort(s.begin(), s.end(), stream_order);

        // Oracle: greatest PPS with pps <= tag, only when a later PPS closes it.
        std::map<std::size_t, std::vector<std::int64_t>> expect;
        std::uint64_t before = 0, after = 0;
        for (auto t : tags) {
            std::optional<std::size_t> owner;
            for (std::size_t k = 0; k < pps.size(); ++k)
                if (pps[k] <= t)
                    owner = k;
            if (!owner)
                ++before;
            else if (*owner == pps.size() - 1)
                ++after;
            else
                expect[*owner].push_back(t);
        }
        SegmentCounters c;
        auto iv = segment_by_pps(s, &c);
        ASSERT_EQ(iv.size(), 2u);
        for (std::size_t k = 0; k < 2; ++k) {
            std::vector<std::int64_t> got;
            for (const auto& t : iv[k].tags)
                got.push_back(t.t_local.count());
            auto want = expect[k];
            std::sort(want.begin(), want.end());
            EXPECT_EQ(got, want) << "round " << round << " interval " << k;
            EXPECT_EQ(iv[k].open.abs_second, 100 + k);
        }
        EXPECT_EQ(c.discarded_before_first_pps, before);
        EXPECT_EQ(c.discarded_trailing, after);
    }
}

TEST(Segment, GapInvalidOnSkippedSecond) {
    std::vector<DeviceEvent> s{DeviceEvent::pps(0, Picoseconds{0}, 5), DeviceEvent::tag(1, Picoseconds{10}),
                               DeviceEvent::pps(0, Picoseconds{2 * kSec}, 7)};
    auto iv = segment_by_pps(s);
    ASSERT_EQ(iv.size(), 1u);
    EXPECT_TRUE(iv[0].gap_invalid);
}

TEST(Segment, GapInvalidOnStretchedInterval) {
    std::vector<DeviceEvent> s{DeviceEvent::pps(0, Picoseconds{0}, 5), DeviceEvent::pps(0, Picoseconds{kSec + kSec / 500}, 6)};
    EXPECT_TRUE(segment_by_pps(s)[0].gap_invalid);
    std::vector<DeviceEvent> ok{DeviceEvent::pps(0, Picoseconds{0}, 5), DeviceEvent::pps(0, Picoseconds{kSec + kSec / 2000}, 6)};
    EXPECT_FALSE(segment_by_pps(ok)[0].gap_invalid);
}

TEST(Segment, RejectsBackwardsPps) {
    std::vector<DeviceEvent> s{DeviceEvent::pps(0, Picoseconds{0}, 5), DeviceEvent::pps(0, Picoseconds{kSec}, 5)};
    EXPECT_EQ(code_of([&] { segment_by_pps(s); }), Errc::non_monotone_pps);
}

TEST(MakeRelative, Basics) {
    PpsEpoch e{3, Picoseconds{5000}};
    EXPECT_EQ(make_relative(Picoseconds{5000}, e).count(), 0);
    EXPECT_EQ(make_relative(Picoseconds{5000 + 123456}, e).count(), 123456);
    EXPECT_EQ(code_of([&] { make_relative(Picoseconds{4999}, e); }), Errc::negative_offset);
}

TEST(MakeRelative, InverseOfAddingEpoch) {
    std::mt19937_64 rng(8);
    for (int i = 0; i < 10000; ++i) {
        PpsEpoch e{rng() % 100, Picoseconds{static_cast<std::int64_t>(rng() % (1ULL << 60))}};
        Picoseconds raw = e.t_local + Picoseconds{static_cast<std::int64_t>(rng() % (2ULL * kSec))};
        EXPECT_EQ(make_relative(raw, e) + e.t_local, raw);
    }
}

TEST(CalibrationFactorOp, ExactNominalGap) {
    auto cf = calibration_factor(PpsEpoch{11, Picoseconds{3 * kSec}}, PpsEpoch{10, Picoseconds{2 * kSec}});
    EXPECT_TRUE(cf.is_identity());
    EXPECT_EQ(cf.multiplier(), 1.0L);
}

TEST(CalibrationFactorOp, TenPpmFastClock) {
    auto cf = calibration_factor(PpsEpoch{11, Picoseconds{kSec + 10'000'000}}, PpsEpoch{10, Picoseconds{0}});
    EXPECT_EQ(cf.measured.count(), kSec + 10'000'000);
    EXPECT_EQ(cf.nominal.count(), kSec);
    EXPECT_NEAR(static_cast<double>(cf.multiplier()), 1e12 / (1e12 + 1e7), 1e-15);
}

TEST(CalibrationFactorOp, Errors) {
    EXPECT_EQ(code_of([] { calibration_factor(PpsEpoch{12, Picoseconds{2 * kSec}}, PpsEpoch{10, Picoseconds{0}}); }),
              Errc::missed_pps);
    EXPECT_EQ(code_of([] { calibration_factor(PpsEpoch{11, Picoseconds{0}}, PpsEpoch{10, Picoseconds{5}}); }),
              Errc::non_monotone_pps);
}

TEST(Calibrate, Examples) {
    EXPECT_EQ(calibrate(Picoseconds{0}, cf_of(kSec + 10'000'000)).count(), 0);
    EXPECT_EQ(calibrate(Picoseconds{kSec + 10'000'000}, cf_of(kSec + 10'000'000)).count(), kSec);
    EXPECT_EQ(calibrate(Picoseconds{500'000'000'000}, cf_of(kSec + 10'000'000)).count(), 499'995'000'050);
}

TEST(Calibrate, RoundsHalfToEven) {
    // nominal / measured = 1/2, so odd inputs land exactly on .5
    auto cf = cf_of(2 * kSec);
    EXPECT_EQ(calibrate(Picoseconds{1}, cf).count(), 0);
    EXPECT_EQ(calibrate(Picoseconds{3}, cf).count(), 2);
    EXPECT_EQ(calibrate(Picoseconds{5}, cf).count(), 2);
    EXPECT_EQ(calibrate(Picoseconds{7}, cf).count(), 4);
}

TEST(Calibrate, NearestAndMonotone) {
    using i128 = __int128;
    std::mt19937_64 rng(17);
    for (int m = 0; m < 50; ++m) {
        std::int64_t measured = kSec - 999'000'000 + static_cast<std::int64_t>(rng() % 1'998'000'000ULL);
        auto cf = cf_of(measured);
        EXPECT_EQ(calibrate(Picoseconds{measured}, cf).count(), kSec);
        std::int64_t prev_t = 0, prev = 0;
        for (int i = 0; i < 2000; ++i) {
            std::int64_t t = static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(measured + kSec / 1000));
            std::int64_t q = calibrate(Picoseconds{t}, cf).count();
            // |q - t*nominal/measured| <= 1/2  <=>  |2*(q*measured - t*nominal)| <= measured
            i128 err = 2 * (i128(q) * measured - i128(t) * kSec);
            ASSERT_LE(err < 0 ? -err : err, i128(measured)) << t;
            if (t >= prev_t) {
                ASSERT_GE(q, prev) << t;
            }
            prev_t = t;
            prev = q;
        }
    }
}

TEST(Calibrate, IdentityForDisciplinedClock) {
    std::mt19937_64 rng(2);
    for (int i = 0; i < 1000; ++i) {
        Picoseconds t{static_cast<std::int64_t>(rng() % (2ULL * kSec))};
        EXPECT_EQ(calibrate(t, CalibrationFactor{}), t);
    }
}

TEST(ProcessSecond, EmptyIntervalGivesEmptyBlocks) {
    Interval iv{PpsEpoch{5, Picoseconds{0}}, PpsEpoch{6, Picoseconds{kSec}}, false, {}};
    std::vector<Channel> ch{2, 1};
    auto blocks = process_second(iv, ch);
    ASSERT_EQ(blocks.size(), 2u);
    EXPECT_EQ(blocks[0].channel, 1);
    EXPECT_EQ(blocks[1].channel, 2);
    for (const auto& b : blocks) {
        EXPECT_EQ(b.count(), 0u);
        EXPECT_EQ(b.abs_second, 5u);
    }
}

TEST(ProcessSecond, DriftFreeKeepsRawOffsets) {
    Interval iv{PpsEpoch{5, Picoseconds{777}}, PpsEpoch{6, Picoseconds{777 + kSec}}, false, {}};
    std::vector<std::int64_t> offs{0, 1, 42, 999'999'999'999};
    for (auto o : offs) {
        iv.tags.push_back(RawTag{1, Picoseconds{777 + o}});
        iv.tags.push_back(RawTag{9, Picoseconds{777 + o}});
    }
    std::vector<Channel> ch{1};
    auto blocks = process_second(iv, ch);
    ASSERT_EQ(blocks.size(), 1u);
    ASSERT_EQ(blocks[0].count(), offs.size());
    for (std::size_t i = 0; i < offs.size(); ++i)
        EXPECT_EQ(blocks[0].tags[i].count(), offs[i]);
}

TEST(ProcessSecond, GapInvalidFlagsUncalibrated) {
    Interval iv{PpsEpoch{5, Picoseconds{0}}, PpsEpoch{7, Picoseconds{2 * kSec}}, true, {RawTag{1, Picoseconds{1'500'000'000'000}}}};
    std::vector<Channel> ch{1};
    auto blocks = process_second(iv, ch);
    ASSERT_EQ(blocks.size(), 1u);
    EXPECT_TRUE(blocks[0].uncalibrated);
    EXPECT_TRUE(blocks[0].cf.is_identity());
    EXPECT_EQ(blocks[0].tags[0].count(), 1'500'000'000'000);
}

TEST(Agent, ConservesTags) {
    ScenarioConfig c;
    c.pair_rate_hz = 3000;
    c.dark_rate_a_hz = 1000;
    c.duration_s = 4;
    auto r = simulate(c);
    // Extra tags on a channel outside the filter, plus a tag before the first PPS.
    auto stream = r.stream_a;
    stream.insert(stream.begin(), DeviceEvent::tag(c.channel_a, stream.front().t_local - Picoseconds{5}));
    for (std::size_t i = 1; i < stream.size(); i += 97)
        stream.insert(stream.begin() + static_cast<std::ptrdiff_t>(i), DeviceEvent::tag(7, stream[i].t_local));
    std::sort(stream.begin(), stream.end(), stream_order);
    stream.push_back(DeviceEvent{stream.back().t_local + Picoseconds{1}, 0, 3, EventKind::metadata});
    stream.push_back(DeviceEvent::tag(c.channel_a, stream.back().t_local + Picoseconds{1}));

    AgentCounters ac;
    auto blocks = run_agent(stream, {c.channel_a}, &ac);
    std::uint64_t input_tags = 0, block_tags = 0;
    for (const auto& e : stream)
        input_tags += e.kind == EventKind::tag;
    for (const auto& b : blocks)
        block_tags += b.count();
    EXPECT_TRUE(ac.conserved());
    EXPECT_EQ(ac.tags_in, input_tags);
    EXPECT_EQ(ac.tags_out, block_tags);
    EXPECT_EQ(input_tags, block_tags + ac.discarded_before_first_pps + ac.discarded_trailing + ac.filtered_channel);
    EXPECT_EQ(ac.discarded_before_first_pps, 1u);
    EXPECT_GE(ac.discarded_trailing, 1u);
    EXPECT_GT(ac.filtered_channel, 0u);
    EXPECT_EQ(ac.metadata_dropped, 1u);
    EXPECT_EQ(blocks.size(), 4u);
}

TEST(Agent, BlocksStayInBoundsAndOrdered) {
    ScenarioConfig c;
    c.pair_rate_hz = 5000;
    c.dark_rate_a_hz = 2000;
    c.duration_s = 5;
    c.osc_a = OscillatorModel{8e-4, 200.0, 1000, 5'000'000'000, 3};
    c.pps_jitter_ps = 100;
    auto r = simulate(c);
    auto blocks = run_agent(r.stream_a, {c.channel_a});
    ASSERT_EQ(blocks.size(), 5u);
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        const auto& b = blocks[i];
        EXPECT_EQ(b.abs_second, c.abs_origin_s + i);
        EXPECT_FALSE(b.uncalibrated);
        EXPECT_TRUE(std::is_sorted(b.tags.begin(), b.tags.end()));
        for (auto t : b.tags) {
            ASSERT_GE(t.count(), 0);
            ASSERT_LT(t, kNominalSecond + kEdgeSlack);
            ASSERT_LT(static_cast<std::uint64_t>(t.count()), std::uint64_t{1} << 40);
        }
    }
}

TEST(Agent, LinearDriftCorrectedAgainstTruth) {
    ScenarioConfig c;
    c.pair_rate_hz = 4000;
    c.eff_a = c.eff_b = 1.0;
    c.dark_rate_a_hz = c.dark_rate_b_hz = 0;
    c.jitter_a_ps = c.jitter_b_ps = 0;
    c.pps_jitter_ps = 0;
    c.osc_a = OscillatorModel{1e-5, 0.0, 1000, 0, 1};
    c.osc_b = OscillatorModel{0.0, 0.0, 1000, 0, 2};
    c.duration_s = 6;
    auto r = simulate(c);
    auto a = run_agent(r.stream_a, {c.channel_a});
    // Truth-derived offset of each arrival from its true second edge.
    std::vector<std::int64_t> want;
    for (const auto& p : r.truth.true_pairs)
        if (p.arrival_a.count() < static_cast<std::int64_t>(c.duration_s) * kSec)
            want.push_back(p.arrival_a.count());
    std::sort(want.begin(), want.end());
    std::vector<std::int64_t> got;
    for (const auto& b : a)
        for (auto t : b.tags)
            got.push_back(static_cast<std::int64_t>(b.abs_second - c.abs_origin_s) * kSec + t.count());
    ASSERT_EQ(got.size(), want.size());
    for (std::size_t i = 0; i < got.size(); ++i)
        ASSERT_LE(std::abs(got[i] - want[i]), 2) << i;
}

TEST(SinglesRate, CountsPerSecond) {
    TagBlock big;
    big.abs_second = 10;
    big.channel = 1;
    big.tags.resize(600'000);
    TagBlock empty;
    empty.abs_second = 11;
    empty.channel = 1;
    std::vector<TagBlock> blocks{big, empty};
    auto r = singles_rate(blocks);
    ASSERT_EQ(r[1].size(), 2u);
    EXPECT_EQ(r[1][0].rate_hz, 600'000.0);
    EXPECT_EQ(r[1][1].rate_hz, 0.0);
}

TEST(SinglesRate, FlatSeriesAndWindow) {
    std::vector<TagBlock> blocks;
    for (int s = 0; s < 10; ++s) {
        TagBlock b;
        b.abs_second = 100 + static_cast<std::uint64_t>(s);
        b.channel = 2;
        b.tags.resize(37);
        blocks.push_back(b);
    }
    for (std::uint32_t w : {1u, 3u}) {
        auto r = singles_rate(blocks, w);
        ASSERT_EQ(r[2].size(), 10u);
        for (const auto& s : r[2])
            EXPECT_EQ(s.rate_hz, 37.0);
    }
    blocks[5].tags.resize(40);
    auto r = singles_rate(blocks, 2);
    EXPECT_DOUBLE_EQ(r[2][5].rate_hz, 38.5);
    EXPECT_DOUBLE_EQ(r[2][6].rate_hz, 38.5);
    EXPECT_DOUBLE_EQ(r[2][7].rate_hz, 37.0);
}
