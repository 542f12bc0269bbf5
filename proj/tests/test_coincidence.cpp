//
// test_coincidence.cpp
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

#include <map>
#include <random>
#include <set>

#include "ttnet/clocksim.hpp"
#include "ttnet/coincidence.hpp"
#include "ttnet/ttagent.hpp"
#include "oracles.hpp"

using namespace ttnet;
using namespace ttnet::oracle;

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

TagBlock blk(std::uint64_t s, Channel ch, std::vector<std::int64_t> tags, bool uncal = false) {
    TagBlock b;
    b.abs_second = s;
    b.channel = ch;
    b.uncalibrated = uncal;
    std::sort(tags.begin(), tags.end());
    for (auto t : tags)
        b.tags.emplace_back(t);
    return b;
}

}  // namespace

TEST(Match, IdenticalSingleTags) {
    std::vector<TagBlock> a{blk(10, 2, {12345})}, b{blk(10, 1, {12345})};
    auto r = match_coincidences(a, b, {}, Picoseconds{5000});
    ASSERT_EQ(r.pairs.size(), 1u);
    EXPECT_EQ(r.pairs[0].dt, 0);
    EXPECT_TRUE(r.diagnostic.empty());
}

TEST(Match, WindowBoundary) {
    std::vector<TagBlock> a{blk(10, 2, {0})};
    std::vector<TagBlock> out{blk(10, 1, {5001})}, edge{blk(10, 1, {5000})};
    EXPECT_TRUE(match_coincidences(a, out, {}, Picoseconds{5000}).pairs.empty());
    EXPECT_EQ(match_coincidences(a, edge, {}, Picoseconds{5000}).pairs.size(), 1u);
}

TEST(Match, AllPairsNotOneToOne) {
    std::vector<TagBlock> a{blk(1, 2, {100, 200})}, b{blk(1, 1, {150, 160, 170})};
    EXPECT_EQ(match_coincidences(a, b, {}, Picoseconds{100}).pairs.size(), 6u);
}

TEST(Match, PairsAcrossSecondBoundary) {
    std::vector<TagBlock> a{blk(1, 2, {kSec - 10}), blk(2, 2, {})}, b{blk(1, 1, {}), blk(2, 1, {20})};
    auto r = match_coincidences(a, b, {}, Picoseconds{50});
    ASSERT_EQ(r.pairs.size(), 1u);
    EXPECT_EQ(r.pairs[0].dt, -30);
    EXPECT_EQ(r.pairs[0].abs_second, 1u);
}

TEST(Match, NoOverlapGivesDiagnostic) {
    std::vector<TagBlock> a{blk(1, 2, {5})}, b{blk(3, 1, {5})};
    auto r = match_coincidences(a, b, {}, Picoseconds{5000});
    EXPECT_TRUE(r.pairs.empty());
    EXPECT_FALSE(r.diagnostic.empty());
    EXPECT_EQ(r.counters.joined_seconds, 0u);
    EXPECT_EQ(r.counters.one_sided_seconds, 2u);
}

TEST(Match, UncalibratedExcludedAndCounted) {
    std::vector<TagBlock> a{blk(1, 2, {5}), blk(2, 2, {5, 6}, true)}, b{blk(1, 1, {5}), blk(2, 1, {5})};
    auto r = match_coincidences(a, b, {}, Picoseconds{5000});
    EXPECT_EQ(r.pairs.size(), 1u);
    EXPECT_EQ(r.counters.uncalibrated_blocks, 1u);
    EXPECT_EQ(r.counters.uncalibrated_tags, 2u);
    EXPECT_EQ(r.counters.one_sided_tags, 1u);
}

TEST(Match, RejectsOutOfOrderBlocks) {
    std::vector<TagBlock> a{blk(2, 2, {5}), blk(1, 2, {5})}, b{blk(1, 1, {5})};
    EXPECT_EQ(code_of([&] { match_coincidences(a, b, {}, Picoseconds{10}); }), Errc::ordering_violation);
}

TEST(Match, EqualsBruteForceOnRandomInstances) {
    std::mt19937_64 rng(2024);
    std::size_t total_pairs = 0;
    for (int i = 0; i < 1000; ++i) {
        Instance in = random_instance(rng);
        auto r = match_coincidences(in.a, in.b, in.comp, Picoseconds{in.hw});
        auto want = brute_force(in.a, in.b, in.comp, in.hw, r.base_second);
        ASSERT_EQ(keys_of(r.pairs), want) << "instance " << i;
        ASSERT_EQ(r.counters.pairs, want.size());
        total_pairs += want.size();
    }
    EXPECT_GT(total_pairs, 1000u);
}

TEST(Match, StreamingPushOrderDoesNotMatter) {
    std::mt19937_64 rng(5);
    for (int i = 0; i < 200; ++i) {
        Instance in = random_instance(rng);
        auto whole = match_coincidences(in.a, in.b, in.comp, Picoseconds{in.hw});
        // all of A first, then all of B
        std::vector<CoincidencePair> got;
        CoincidenceJoin join(Picoseconds{in.hw}, in.comp, [&](const CoincidencePair& p) { got.push_back(p); });
        for (const auto& x : in.a)
            join.push_a(x);
        join.finish_a();
        for (const auto& x : in.b)
            join.push_b(x);
        join.finish_b();
        if (join.base_second() == whole.base_second) {
            EXPECT_EQ(keys_of(got), keys_of(whole.pairs)) << i;
        }
        EXPECT_EQ(got.size(), whole.pairs.size()) << i;
    }
}

TEST(Match, WindowMonotonicity) {
    std::mt19937_64 rng(8);
    for (int i = 0; i < 100; ++i) {
        Instance in = random_instance(rng);
        std::size_t prev = 0;
        for (std::int64_t hw : {0LL, 10LL, 1000LL, 100'000LL, 3'000'000LL}) {
            std::size_t n = match_coincidences(in.a, in.b, in.comp, Picoseconds{hw}).pairs.size();
            EXPECT_GE(n, prev);
            prev = n;
        }
    }
}

TEST(Match, CompensationInvariance) {
    std::mt19937_64 rng(13);
    for (int i = 0; i < 200; ++i) {
        Instance in = random_instance(rng);
        in.comp.clear();
        auto base = match_coincidences(in.a, in.b, {}, Picoseconds{in.hw});
        std::int64_t delta = static_cast<std::int64_t>(rng() % 1000);
        // shift A tags that stay inside the second; the rest is out of scope of this property
        bool fits = true;
        auto shifted = in.a;
        for (auto& x : shifted)
            for (auto& t : x.tags) {
                t += Picoseconds{delta};
                fits = fits && t.count() < kSec;
            }
        if (!fits)
            continue;
        std::vector<DelayCompensation> comp{{2, Picoseconds{-delta}}};
        auto r = match_coincidences(shifted, in.b, comp, Picoseconds{in.hw});
        EXPECT_EQ(keys_of(r.pairs), keys_of(base.pairs)) << i;
    }
}

TEST(Histogram, BinningRules) {
    CoincidenceHistogram h(100, 5000);
    EXPECT_EQ(h.bins.size(), 100u);
    EXPECT_DOUBLE_EQ(h.bin_center(0), -4950.0);
    EXPECT_EQ(h.bin_of(-5000), 0u);
    EXPECT_EQ(h.bin_of(-4901), 0u);
    EXPECT_EQ(h.bin_of(-4900), 1u);
    EXPECT_EQ(h.bin_of(0), 50u);
    EXPECT_EQ(h.bin_of(4999), 99u);
    EXPECT_EQ(h.bin_of(5000), 99u);
    EXPECT_THROW(h.bin_of(5001), Error);
    EXPECT_EQ(code_of([] { CoincidenceHistogram(300, 5000); }), Errc::invalid_binning);
    EXPECT_EQ(code_of([] { CoincidenceHistogram(0, 5000); }), Errc::invalid_binning);
}

TEST(Histogram, AllZeroDtLandsInZeroBin) {
    std::vector<CoincidencePair> pairs(37, CoincidencePair{5, 5, 0, 1});
    auto h = histogram(pairs, 100, 10'000);
    EXPECT_EQ(h.total_pairs, 37u);
    EXPECT_EQ(h.bins[h.bin_of(0)], 37u);
    EXPECT_DOUBLE_EQ(h.bin_center(h.bin_of(0)), 50.0);
}

TEST(Histogram, EmptyIsAllZero) {
    auto h = histogram({}, 100, 10'000);
    EXPECT_EQ(h.total_pairs, 0u);
    for (auto c : h.bins)
        EXPECT_EQ(c, 0u);
}

TEST(Histogram, UniformDtWithinFiveSigma) {
    std::mt19937_64 rng(3);
    std::vector<CoincidencePair> pairs;
    const std::int64_t hw = 10'000;
    for (int i = 0; i < 200'000; ++i) {
        std::int64_t dt = static_cast<std::int64_t>(rng() % (2 * hw)) - hw;
        pairs.push_back({dt, 0, dt, 1});
    }
    auto h = histogram(pairs, 100, hw);
    const double n = 200'000.0, p = 1.0 / 200.0;
    const double mean = n * p, sd = std::sqrt(n * p * (1 - p));
    for (auto c : h.bins)
        EXPECT_LE(std::abs(static_cast<double>(c) - mean), 5.0 * sd);
}

TEST(Histogram, ConservationAndLinearity) {
    std::mt19937_64 rng(6);
    for (int i = 0; i < 100; ++i) {
        Instance in = random_instance(rng);
        in.hw = 10'000;
        auto r = match_coincidences(in.a, in.b, in.comp, Picoseconds{in.hw});
        auto whole = histogram(r.pairs, 100, in.hw);
        EXPECT_EQ(whole.total_pairs, r.pairs.size());
        std::uint64_t sum = 0;
        for (auto c : whole.bins)
            sum += c;
        EXPECT_EQ(sum, whole.total_pairs);

        std::map<std::uint64_t, std::vector<CoincidencePair>> per_second;
        for (const auto& p : r.pairs)
            per_second[p.abs_second].push_back(p);
        CoincidenceHistogram acc(100, in.hw);
        for (const auto& [s, v] : per_second)
            acc = accumulate(acc, histogram(v, 100, in.hw));
        EXPECT_EQ(acc, whole);
    }
}

TEST(Accumulate, IdentityAssociativityAndShape) {
    std::mt19937_64 rng(9);
    auto random_hist = [&] {
        CoincidenceHistogram h(100, 2000);
        for (int i = 0; i < 300; ++i)
            h.add(static_cast<std::int64_t>(rng() % 4001) - 2000);
        h.cover(rng() % 10);
        h.cover(rng() % 10);
        return h;
    };
    for (int i = 0; i < 50; ++i) {
        auto a = random_hist(), b = random_hist(), c = random_hist();
        CoincidenceHistogram zero(100, 2000);
        EXPECT_EQ(accumulate(a, zero), a);
        EXPECT_EQ(accumulate(accumulate(a, b), c), accumulate(a, accumulate(b, c)));
        EXPECT_EQ(accumulate(a, b).total_pairs, a.total_pairs + b.total_pairs);
    }
    EXPECT_EQ(code_of([] { accumulate(CoincidenceHistogram(100, 2000), CoincidenceHistogram(200, 2000)); }),
              Errc::shape_mismatch);
}

TEST(Peak, SinglePopulatedBin) {
    CoincidenceHistogram h(1000, 10'000'000);
    h.add(7'000'000, 250);
    auto p = find_peak(h);
    EXPECT_DOUBLE_EQ(p.center_ps, h.bin_center(h.bin_of(7'000'000)));
    EXPECT_NEAR(p.center_ps, 7e6, 1000);
    EXPECT_EQ(p.height, 250u);
    EXPECT_EQ(p.background, 0.0);
}

TEST(Peak, FlatHistogramHasNoSignal) {
    CoincidenceHistogram h(100, 5000);
    for (std::size_t i = 0; i < h.bins.size(); ++i)
        h.add(static_cast<std::int64_t>(h.bin_center(i)), 40);
    EXPECT_EQ(code_of([&] { find_peak(h); }), Errc::no_signal);
    EXPECT_EQ(code_of([] { find_peak(CoincidenceHistogram(100, 5000)); }), Errc::no_signal);
}

TEST(Peak, TiesGoToSmallestCenter) {
    CoincidenceHistogram h(100, 5000);
    h.add(-2000, 30);
    h.add(3000, 30);
    EXPECT_EQ(find_peak(h).bin, h.bin_of(-2000));
}

TEST(Peak, GaussianCentroid) {
    std::mt19937_64 rng(44);
    for (double mu : {1234.5, -777.0, 0.0, 49.0}) {
        std::normal_distribution<double> g(mu, 60.0);
        CoincidenceHistogram h(100, 10'000);
        for (int i = 0; i < 20'000; ++i)
            h.add(std::llround(g(rng)));
        for (int i = 0; i < 20'000; ++i)
            h.add(static_cast<std::int64_t>(rng() % 20'001) - 10'000);
        auto p = find_peak(h);
        EXPECT_NEAR(p.center_ps, mu, 50.0) << mu;
        EXPECT_GT(p.background, 50.0);
    }
}

TEST(PeakWidth, RecoversGaussianSigma) {
    std::mt19937_64 rng(45);
    std::normal_distribution<double> g(0.0, 70.0);
    CoincidenceHistogram h(10, 5000);
    for (int i = 0; i < 100'000; ++i)
        h.add(std::llround(g(rng)));
    auto p = find_peak(h);
    auto w = peak_width(h, p, 700.0);
    EXPECT_NEAR(w.rms_ps, 70.0, 1.5);
    EXPECT_GT(w.stderr_ps, 0.0);
    EXPECT_LT(w.stderr_ps, 1.0);
}

TEST(Rates, ReferenceFigures) {
    auto r = rate_row(SecondSummary{1, 600'000, 550'000, 25'000});
    ASSERT_TRUE(r.efficiency);
    EXPECT_NEAR(*r.efficiency, 0.041667, 1e-6);
    auto z = rate_row(SecondSummary{2, 0, 0, 0});
    EXPECT_FALSE(z.efficiency);
}

TEST(Rates, SeriesAndOverall) {
    std::vector<SecondSummary> s{{1, 100, 50, 4}, {2, 0, 0, 0}, {3, 100, 200, 6}};
    auto rows = coincidence_rate(s);
    ASSERT_EQ(rows.size(), 3u);
    EXPECT_DOUBLE_EQ(*rows[0].efficiency, 0.04);
    EXPECT_DOUBLE_EQ(*rows[2].efficiency, 0.03);
    EXPECT_DOUBLE_EQ(*overall_efficiency(rows), 10.0 / 300.0);
}

namespace {

struct SimStreams {
    std::vector<TagBlock> a, b;
};

SimStreams simulate_blocks(ScenarioConfig c) {
    auto r = simulate(c);
    return {run_agent(r.stream_a, {c.channel_a}), run_agent(r.stream_b, {c.channel_b})};
}

}  // namespace

TEST(AutoCompensate, RecoversInjectedDelays) {
    std::mt19937_64 rng(71);
    std::vector<std::int64_t> delays{7'000'000, 0, -3'210'987, static_cast<std::int64_t>(rng() % 9'000'000) - 4'500'000};
    for (std::int64_t d : delays) {
        ScenarioConfig c = desk_scenario();
        c.duration_s = 3;
        c.seed = rng();
        c.delay_b_ps = 150'000;
        c.delay_a_ps = c.delay_b_ps + d;
        auto s = simulate_blocks(c);
        auto r = auto_compensate(s.a, s.b);
        double sigma = std::sqrt(c.jitter_a_ps * c.jitter_a_ps + c.jitter_b_ps * c.jitter_b_ps);
        EXPECT_NEAR(r.estimated_delay_ps, static_cast<double>(d), kFineBinWidth / 2.0 + sigma) << d;
        EXPECT_EQ(r.compensation.channel, c.channel_a);
        EXPECT_NEAR(static_cast<double>(r.compensation.delay_ps.count()), -static_cast<double>(d), kFineBinWidth / 2.0 + sigma);

        std::vector<DelayCompensation> comp{r.compensation};
        auto h = histogram_of(s.a, s.b, comp, kFineBinWidth, kFineHalfWindow.count());
        EXPECT_LE(std::abs(find_peak(h).center_ps), static_cast<double>(kFineBinWidth)) << d;
    }
}

TEST(AutoCompensate, NoOverlap) {
    std::vector<TagBlock> a{blk(1, 2, {5})}, b{blk(5, 1, {5})};
    EXPECT_EQ(code_of([&] { auto_compensate(a, b); }), Errc::no_overlap);
    std::vector<TagBlock> none;
    EXPECT_EQ(code_of([&] { auto_compensate(none, b); }), Errc::no_overlap);
}

TEST(Analyzer, MatchesBatchHistogramAndRates) {
    ScenarioConfig c = desk_scenario();
    c.duration_s = 3;
    auto s = simulate_blocks(c);
    std::vector<DelayCompensation> comp{{c.channel_a, Picoseconds{-(c.delay_a_ps - c.delay_b_ps)}}};
    std::vector<SecondReport> per_second;
    CoincidenceAnalyzer an({Picoseconds{5000}, 100, comp}, [&](const SecondReport& r) { per_second.push_back(r); });
    for (std::size_t i = 0; i < std::max(s.a.size(), s.b.size()); ++i) {
        if (i < s.b.size())
            an.push_b(s.b[i]);
        if (i < s.a.size())
            an.push_a(s.a[i]);
    }
    an.finish_a();
    an.finish_b();
    auto batch = match_coincidences(s.a, s.b, comp, Picoseconds{5000});
    auto h = histogram(batch.pairs, 100, 5000);
    EXPECT_EQ(an.accumulated(), h);
    EXPECT_EQ(an.rates(), coincidence_rate(batch.seconds));
    EXPECT_EQ(per_second.size(), batch.seconds.size());
    std::uint64_t total = 0;
    for (const auto& r : per_second)
        total += r.histogram.total_pairs;
    EXPECT_EQ(total, h.total_pairs);
}
