//
// coincidence.hpp
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

#pragma once

// Coincidence analysis between two block streams, A (Alice) and B (Bob).
//
// Absolute times are rebuilt as (abs_second - base) * 1e12 + t_rel + comp,
// where base is the first second seen on either side. dt = t_a - t_b.
// Every (a, b) with |dt| <= half_window is a pair; a tag may take part in
// any number of pairs. Only seconds for which both sides delivered a
// calibrated block are analyzed; the rest are counted and skipped.

#include "ttnet/error.hpp"
#include "ttnet/timebase.hpp"
#include "ttnet/ttagent.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ttnet {

inline constexpr Picoseconds kFineHalfWindow{10'000};
inline constexpr std::int64_t kFineBinWidth = 100;
inline constexpr Picoseconds kCoarseHalfWindow{10'000'000};
inline constexpr std::int64_t kCoarseBinWidth = 1'000;

struct DelayCompensation {
    Channel channel = 0;
    Picoseconds delay_ps{0};

    void validate() const {
        if (std::abs(delay_ps.count()) >= kNominalSecond.count() / 1000)
            fail(Errc::invalid_argument, "delay compensation must be below 1e9 ps");
    }

    friend bool operator==(const DelayCompensation&, const DelayCompensation&) = default;
};

inline Picoseconds compensation_for(std::span<const DelayCompensation> comp, Channel ch) {
    Picoseconds total{0};
    for (const auto& c : comp)
        if (c.channel == ch)
            total += c.delay_ps;
    return total;
}

struct CoincidencePair {
    std::int64_t t_a = 0;  // relative to the base second, compensation applied
    std::int64_t t_b = 0;
    std::int64_t dt = 0;   // t_a - t_b
    std::uint64_t abs_second = 0;  // second of the A tag

    friend bool operator==(const CoincidencePair&, const CoincidencePair&) = default;
    friend auto operator<=>(const CoincidencePair&, const CoincidencePair&) = default;
};

struct JoinCounters {
    std::uint64_t joined_seconds = 0;
    std::uint64_t one_sided_seconds = 0;
    std::uint64_t one_sided_tags = 0;
    std::uint64_t uncalibrated_blocks = 0;
    std::uint64_t uncalibrated_tags = 0;
    std::uint64_t pairs = 0;
};

struct SecondSummary {
    std::uint64_t abs_second = 0;
    std::uint64_t singles_a = 0;
    std::uint64_t singles_b = 0;
    std::uint64_t pairs = 0;

    friend bool operator==(const SecondSummary&, const SecondSummary&) = default;
};

/// Streaming two-pointer join. Blocks are pushed per side in strictly
/// increasing abs_second; pairs are reported in A-tag order as soon as no
/// later B block can contribute to them.
class CoincidenceJoin {
public:
    using PairSink = std::function<void(const CoincidencePair&)>;
    using SecondSink = std::function<void(const SecondSummary&)>;

    CoincidenceJoin(Picoseconds half_window, std::vector<DelayCompensation> comp, PairSink on_pair,
                    SecondSink on_second = {})
        : hw_(half_window.count()), comp_(std::move(comp)), on_pair_(std::move(on_pair)), on_second_(std::move(on_second)) {
        if (hw_ < 0)
            fail(Errc::invalid_argument, "half window must be >= 0");
        if (hw_ >= kNominalSecond.count() / 100)
            fail(Errc::invalid_argument, "half window must be below 1e10 ps");
        for (const auto& c : comp_)
            c.validate();
    }

    void push_a(const TagBlock& b) { push(a_, b); }
    void push_b(const TagBlock& b) { push(b_, b); }
    void finish_a() { a_.finished = true; pump(); }
    void finish_b() { b_.finished = true; pump(); }
    void finish() {
        a_.finished = b_.finished = true;
        pump();
    }

    const JoinCounters& counters() const { return counters_; }
    std::optional<std::uint64_t> base_second() const { return base_; }

private:
    struct Side {
        std::deque<TagBlock> pending;
        std::optional<std::uint64_t> last_second;
        bool finished = false;
        std::int64_t last_t = INT64_MIN;
    };

    struct Ready {
        TagBlock a;
        std::uint64_t singles_b = 0;
    };

    struct BTag {
        std::int64_t t;
    };

    void push(Side& side, const TagBlock& b) {
        if (side.finished)
            fail(Errc::invalid_argument, "push after finish");
        if (side.last_second && b.abs_second <= *side.last_second)
            fail(Errc::ordering_violation, "block seconds must strictly increase on each side");
        if (!base_)
            base_ = b.abs_second;
        side.last_second = b.abs_second;
        side.pending.push_back(b);
        pump();
    }

    static bool passed(const Side& s, std::uint64_t sec) {
        return s.finished || (s.last_second && *s.last_second >= sec);
    }

    std::int64_t reconstruct(std::uint64_t sec, Picoseconds t_rel, Channel ch) const {
        auto offset = static_cast<std::int64_t>(sec - *base_);  // wraps to negative for sec < base
        return offset * kNominalSecond.count() + t_rel.count() + compensation_for(comp_, ch).count();
    }

    void drop(const TagBlock& b, bool uncalibrated) {
        if (uncalibrated) {
            ++counters_.uncalibrated_blocks;
            counters_.uncalibrated_tags += b.count();
        } else {
            counters_.one_sided_tags += b.count();
        }
    }

    void decide() {
        for (;;) {
            std::optional<std::uint64_t> fa, fb;
            if (!a_.pending.empty())
                fa = a_.pending.front().abs_second;
            if (!b_.pending.empty())
                fb = b_.pending.front().abs_second;
            if (!fa && !fb)
                return;
            std::uint64_t s = fa && fb ? std::min(*fa, *fb) : (fa ? *fa : *fb);
            if (!passed(a_, s) || !passed(b_, s))
                return;
            std::optional<TagBlock> ba, bb;
            if (fa == s) {
                ba = std::move(a_.pending.front());
                a_.pending.pop_front();
            }
            if (fb == s) {
                bb = std::move(b_.pending.front());
                b_.pending.pop_front();
            }
            decided_ = s;
            bool ok_a = ba && !ba->uncalibrated;
            bool ok_b = bb && !bb->uncalibrated;
            if (!(ok_a && ok_b)) {
                ++counters_.one_sided_seconds;
                if (ba)
                    drop(*ba, ba->uncalibrated);
                if (bb)
                    drop(*bb, bb->uncalibrated);
                continue;
            }
            ++counters_.joined_seconds;
            for (Picoseconds t : bb->tags) {
                std::int64_t tb = reconstruct(s, t, bb->channel);
                if (tb < b_.last_t)
                    fail(Errc::ordering_violation, "B tags are not time ordered");
                b_.last_t = tb;
                window_.push_back({tb});
            }
            ready_.push_back({std::move(*ba), bb->count()});
        }
    }

    bool no_more_joins() const {
        return (a_.finished && a_.pending.empty()) || (b_.finished && b_.pending.empty());
    }

    void pump() {
        decide();
        while (!ready_.empty()) {
            Ready& r = ready_.front();
            const TagBlock& blk = r.a;
            if (!no_more_joins() && !blk.tags.empty()) {
                auto next = static_cast<std::int64_t>(*decided_ + 1 - *base_);
                std::int64_t frontier = next * kNominalSecond.count() + min_b_comp();
                std::int64_t last = reconstruct(blk.abs_second, blk.tags.back(), blk.channel);
                if (last + hw_ >= frontier)
                    return;
            }
            std::uint64_t pairs = 0;
            for (Picoseconds t : blk.tags) {
                std::int64_t ta = reconstruct(blk.abs_second, t, blk.channel);
                if (ta < a_.last_t)
                    fail(Errc::ordering_violation, "A tags are not time ordered");
                a_.last_t = ta;
                while (!window_.empty() && window_.front().t < ta - hw_)
                    window_.pop_front();
                for (const BTag& bt : window_) {
                    if (bt.t > ta + hw_)
                        break;
                    on_pair_(CoincidencePair{ta, bt.t, ta - bt.t, blk.abs_second});
                    ++pairs;
                }
            }
            counters_.pairs += pairs;
            if (on_second_)
                on_second_(SecondSummary{blk.abs_second, blk.count(), r.singles_b, pairs});
            ready_.pop_front();
        }
    }

    // Smallest compensation any B tag can carry; the B channel is learned
    // from the blocks, so take the minimum over all entries and zero.
    std::int64_t min_b_comp() const {
        std::int64_t m = 0;
        for (const auto& c : comp_)
            m = std::min(m, compensation_for(comp_, c.channel).count());
        return m;
    }

    std::int64_t hw_;
    std::vector<DelayCompensation> comp_;
    PairSink on_pair_;
    SecondSink on_second_;
    Side a_, b_;
    std::optional<std::uint64_t> base_;
    std::optional<std::uint64_t> decided_;
    std::deque<Ready> ready_;
    std::deque<BTag> window_;
    JoinCounters counters_;
};

struct MatchResult {
    std::uint64_t base_second = 0;
    std::vector<CoincidencePair> pairs;
    JoinCounters counters;
    std::vector<SecondSummary> seconds;
    std::string diagnostic;  // non-empty when nothing could be joined
};

/// Visits every pair of two in-memory streams. Returns the join counters.
inline JoinCounters for_each_coincidence(std::span<const TagBlock> stream_a, std::span<const TagBlock> stream_b,
                                         std::span<const DelayCompensation> comp, Picoseconds half_window,
                                         const CoincidenceJoin::PairSink& on_pair,
                                         const CoincidenceJoin::SecondSink& on_second = {},
                                         std::uint64_t* base_second = nullptr) {
    CoincidenceJoin join(half_window, {comp.begin(), comp.end()}, on_pair, on_second);
    std::size_t i = 0, j = 0;
    // Interleave by second so the pending queues stay short.
    while (i < stream_a.size() || j < stream_b.size()) {
        if (j >= stream_b.size() || (i < stream_a.size() && stream_a[i].abs_second <= stream_b[j].abs_second))
            join.push_a(stream_a[i++]);
        else
            join.push_b(stream_b[j++]);
    }
    join.finish();
    if (base_second)
        *base_second = join.base_second().value_or(0);
    return join.counters();
}

inline MatchResult match_coincidences(std::span<const TagBlock> stream_a, std::span<const TagBlock> stream_b,
                                      std::span<const DelayCompensation> comp, Picoseconds half_window) {
    MatchResult r;
    r.counters = for_each_coincidence(
        stream_a, stream_b, comp, half_window, [&](const CoincidencePair& p) { r.pairs.push_back(p); },
        [&](const SecondSummary& s) { r.seconds.push_back(s); }, &r.base_second);
    if (r.counters.joined_seconds == 0)
        r.diagnostic = "no overlapping calibrated seconds between the two streams";
    return r;
}

// ---------------------------------------------------------------------------
// Histograms

/// Counts of dt over [-half_window, +half_window); dt == +half_window is
/// folded into the last bin so every in-window pair is counted.
struct CoincidenceHistogram {
    std::int64_t bin_width_ps = kFineBinWidth;
    std::int64_t half_window_ps = kFineHalfWindow.count();
    std::vector<std::uint64_t> bins;
    std::uint64_t total_pairs = 0;
    std::vector<std::uint64_t> abs_seconds_covered;  // sorted, unique

    CoincidenceHistogram() : CoincidenceHistogram(kFineBinWidth, kFineHalfWindow.count()) {}

    CoincidenceHistogram(std::int64_t bin_width, std::int64_t half_window) : bin_width_ps(bin_width), half_window_ps(half_window) {
        if (bin_width <= 0 || half_window <= 0)
            fail(Errc::invalid_binning, "bin width and half window must be positive");
        if ((2 * half_window) % bin_width != 0)
            fail(Errc::invalid_binning, "bin width " + std::to_string(bin_width) + " does not divide window " +
                                             std::to_string(2 * half_window));
        bins.assign(static_cast<std::size_t>(2 * half_window / bin_width), 0);
    }

    std::size_t size() const { return bins.size(); }

    double bin_center(std::size_t i) const {
        return static_cast<double>(-half_window_ps) + (static_cast<double>(i) + 0.5) * static_cast<double>(bin_width_ps);
    }

    std::size_t bin_of(std::int64_t dt) const {
        if (dt < -half_window_ps || dt > half_window_ps)
            fail(Errc::invalid_argument, "dt " + std::to_string(dt) + " outside the histogram window");
        auto i = static_cast<std::size_t>((dt + half_window_ps) / bin_width_ps);
        return std::min(i, bins.size() - 1);
    }

    void add(std::int64_t dt, std::uint64_t n = 1) {
        bins[bin_of(dt)] += n;
        total_pairs += n;
    }

    void cover(std::uint64_t abs_second) {
        auto it = std::lower_bound(abs_seconds_covered.begin(), abs_seconds_covered.end(), abs_second);
        if (it == abs_seconds_covered.end() || *it != abs_second)
            abs_seconds_covered.insert(it, abs_second);
    }

    friend bool operator==(const CoincidenceHistogram&, const CoincidenceHistogram&) = default;
};

inline CoincidenceHistogram histogram(std::span<const CoincidencePair> pairs, std::int64_t bin_width_ps,
                                      std::int64_t half_window_ps) {
    CoincidenceHistogram h(bin_width_ps, half_window_ps);
    for (const auto& p : pairs) {
        h.add(p.dt);
        h.cover(p.abs_second);
    }
    return h;
}

inline CoincidenceHistogram accumulate(const CoincidenceHistogram& h1, const CoincidenceHistogram& h2) {
    if (h1.bin_width_ps != h2.bin_width_ps || h1.half_window_ps != h2.half_window_ps)
        fail(Errc::shape_mismatch, "histograms differ in bin width or window");
    CoincidenceHistogram out = h1;
    for (std::size_t i = 0; i < out.bins.size(); ++i)
        out.bins[i] += h2.bins[i];
    out.total_pairs += h2.total_pairs;
    std::vector<std::uint64_t> merged;
    std::set_union(h1.abs_seconds_covered.begin(), h1.abs_seconds_covered.end(), h2.abs_seconds_covered.begin(),
                   h2.abs_seconds_covered.end(), std::back_inserter(merged));
    out.abs_seconds_covered = std::move(merged);
    return out;
}

// ---------------------------------------------------------------------------
// Peaks

inline constexpr int kCentroidRadiusBins = 2;
inline constexpr int kBackgroundExclusionBins = 5;
inline constexpr double kSignificanceSigmas = 5.0;

struct PeakResult {
    double center_ps = 0.0;
    std::uint64_t height = 0;
    double background = 0.0;
    std::size_t bin = 0;
};

inline double median_background(const CoincidenceHistogram& h, std::size_t peak_bin) {
    std::vector<std::uint64_t> off;
    for (std::size_t i = 0; i < h.bins.size(); ++i) {
        auto d = static_cast<std::int64_t>(i) - static_cast<std::int64_t>(peak_bin);
        if (std::abs(d) > kBackgroundExclusionBins)
            off.push_back(h.bins[i]);
    }
    if (off.empty())
        return 0.0;
    std::sort(off.begin(), off.end());
    std::size_t n = off.size();
    if (n % 2)
        return static_cast<double>(off[n / 2]);
    return 0.5 * (static_cast<double>(off[n / 2 - 1]) + static_cast<double>(off[n / 2]));
}

inline PeakResult find_peak(const CoincidenceHistogram& h) {
    if (h.bins.empty() || h.total_pairs == 0)
        fail(Errc::no_signal, "histogram is empty");
    PeakResult p;
    p.bin = static_cast<std::size_t>(std::max_element(h.bins.begin(), h.bins.end()) - h.bins.begin());
    p.height = h.bins[p.bin];
    p.background = median_background(h, p.bin);
    if (static_cast<double>(p.height) < p.background + kSignificanceSigmas * std::sqrt(p.background))
        fail(Errc::no_signal, "peak height " + std::to_string(p.height) + " is not significant over background " +
                                  std::to_string(p.background));
    double w = 0.0, wx = 0.0;
    auto lo = static_cast<std::int64_t>(p.bin) - kCentroidRadiusBins;
    auto hi = static_cast<std::int64_t>(p.bin) + kCentroidRadiusBins;
    for (std::int64_t i = std::max<std::int64_t>(lo, 0); i <= std::min<std::int64_t>(hi, static_cast<std::int64_t>(h.bins.size()) - 1); ++i) {
        auto c = static_cast<double>(h.bins[static_cast<std::size_t>(i)]);
        w += c;
        wx += c * h.bin_center(static_cast<std::size_t>(i));
    }
    p.center_ps = wx / w;
    return p;
}

struct PeakWidth {
    double rms_ps = 0.0;
    double stderr_ps = 0.0;
    double signal = 0.0;  // background-subtracted counts inside the radius
};

/// Background-subtracted RMS width of the peak using bins whose centers lie
/// within `radius_ps` of the peak center, with the bw^2/12 binning term
/// removed. The standard error is the delta-method error under Poisson
/// bin counts.
inline PeakWidth peak_width(const CoincidenceHistogram& h, const PeakResult& peak, double radius_ps) {
    std::vector<std::pair<double, double>> pts;  // (x, count)
    for (std::size_t i = 0; i < h.bins.size(); ++i) {
        double x = h.bin_center(i);
        if (std::abs(x - peak.center_ps) <= radius_ps)
            pts.emplace_back(x, static_cast<double>(h.bins[i]));
    }
    double n = 0.0, sx = 0.0;
    for (auto [x, c] : pts) {
        n += c - peak.background;
        sx += (c - peak.background) * x;
    }
    if (n <= 0.0)
        fail(Errc::no_signal, "no background-subtracted signal inside the width radius");
    double mu = sx / n;
    double m2 = 0.0;
    for (auto [x, c] : pts)
        m2 += (c - peak.background) * (x - mu) * (x - mu);
    m2 /= n;
    double var_m2 = 0.0;
    for (auto [x, c] : pts) {
        double g = ((x - mu) * (x - mu) - m2) / n;
        var_m2 += c * g * g;
    }
    double bw = static_cast<double>(h.bin_width_ps);
    double var = std::max(m2 - bw * bw / 12.0, 0.0);
    PeakWidth out;
    out.signal = n;
    out.rms_ps = std::sqrt(var);
    out.stderr_ps = out.rms_ps > 0.0 ? std::sqrt(var_m2) / (2.0 * out.rms_ps) : std::sqrt(std::sqrt(var_m2));
    return out;
}

// ---------------------------------------------------------------------------
// Delay compensation

struct AutoCompensateOptions {
    Picoseconds coarse_half_window = kCoarseHalfWindow;
    std::int64_t coarse_bin_width = kCoarseBinWidth;
    Picoseconds fine_half_window = kFineHalfWindow;
    std::int64_t fine_bin_width = kFineBinWidth;
};

struct CompensationResult {
    DelayCompensation compensation;  // applies to the A channel
    PeakResult coarse;
    PeakResult fine;
    double estimated_delay_ps = 0.0;  // peak position of dt before compensation
};

inline CoincidenceHistogram histogram_of(std::span<const TagBlock> a, std::span<const TagBlock> b,
                                         std::span<const DelayCompensation> comp, std::int64_t bin_width,
                                         std::int64_t half_window, JoinCounters* counters = nullptr) {
    CoincidenceHistogram h(bin_width, half_window);
    auto c = for_each_coincidence(a, b, comp, Picoseconds{half_window}, [&](const CoincidencePair& p) { h.add(p.dt); },
                                  [&](const SecondSummary& s) { h.cover(s.abs_second); });
    if (counters)
        *counters = c;
    return h;
}

/// Two-pass peak search: a wide coarse scan, then a fine scan around it.
/// The returned compensation moves the A channel so the peak sits at 0.
inline CompensationResult auto_compensate(std::span<const TagBlock> stream_a, std::span<const TagBlock> stream_b,
                                          const AutoCompensateOptions& opt = {}) {
    auto first = std::find_if(stream_a.begin(), stream_a.end(), [](const TagBlock& b) { return !b.uncalibrated; });
    if (first == stream_a.end() || stream_b.empty())
        fail(Errc::no_overlap, "auto_compensate needs calibrated blocks on both sides");
    const Channel ch = first->channel;

    JoinCounters jc;
    CompensationResult r;
    auto coarse = histogram_of(stream_a, stream_b, {}, opt.coarse_bin_width, opt.coarse_half_window.count(), &jc);
    if (jc.joined_seconds == 0)
        fail(Errc::no_overlap, "streams share no calibrated seconds");
    r.coarse = find_peak(coarse);

    std::vector<DelayCompensation> comp{{ch, Picoseconds{-std::llround(r.coarse.center_ps)}}};
    auto fine = histogram_of(stream_a, stream_b, comp, opt.fine_bin_width, opt.fine_half_window.count());
    r.fine = find_peak(fine);
    r.estimated_delay_ps = static_cast<double>(-comp[0].delay_ps.count()) + r.fine.center_ps;
    r.compensation = {ch, Picoseconds{-std::llround(r.estimated_delay_ps)}};
    r.compensation.validate();
    return r;
}

// ---------------------------------------------------------------------------
// Rates

struct RateRow {
    std::uint64_t abs_second = 0;
    std::uint64_t rate_a = 0;
    std::uint64_t rate_b = 0;
    std::uint64_t coincidences = 0;
    std::optional<double> efficiency;  // coincidences / max(rate_a, rate_b); empty when both are zero

    friend bool operator==(const RateRow&, const RateRow&) = default;
};

inline RateRow rate_row(const SecondSummary& s) {
    RateRow r{s.abs_second, s.singles_a, s.singles_b, s.pairs, std::nullopt};
    std::uint64_t m = std::max(s.singles_a, s.singles_b);
    if (m > 0)
        r.efficiency = static_cast<double>(s.pairs) / static_cast<double>(m);
    return r;
}

inline std::vector<RateRow> coincidence_rate(std::span<const SecondSummary> seconds) {
    std::vector<RateRow> out;
    out.reserve(seconds.size());
    for (const auto& s : seconds)
        out.push_back(rate_row(s));
    return out;
}

/// Mean efficiency over all rows, weighting each second by its singles.
inline std::optional<double> overall_efficiency(std::span<const RateRow> rows) {
    std::uint64_t c = 0, m = 0;
    for (const auto& r : rows) {
        c += r.coincidences;
        m += std::max(r.rate_a, r.rate_b);
    }
    if (m == 0)
        return std::nullopt;
    return static_cast<double>(c) / static_cast<double>(m);
}

// ---------------------------------------------------------------------------
// Live analyzer

struct AnalyzerConfig {
    Picoseconds half_window = kFineHalfWindow;
    std::int64_t bin_width_ps = kFineBinWidth;
    std::vector<DelayCompensation> compensation;
};

struct SecondReport {
    SecondSummary summary;
    CoincidenceHistogram histogram;
};

/// Thread-safe wrapper around CoincidenceJoin that keeps a per-second and an
/// accumulated histogram plus the rate series.
class CoincidenceAnalyzer {
public:
    using ReportSink = std::function<void(const SecondReport&)>;

    explicit CoincidenceAnalyzer(AnalyzerConfig cfg, ReportSink on_second = {})
        : cfg_(std::move(cfg)), on_second_(std::move(on_second)),
          current_(cfg_.bin_width_ps, cfg_.half_window.count()), total_(current_),
          join_(cfg_.half_window, cfg_.compensation, [this](const CoincidencePair& p) { current_.add(p.dt); },
                [this](const SecondSummary& s) { close_second(s); }) {}

    void push_a(const TagBlock& b) {
        std::lock_guard lk(mu_);
        join_.push_a(b);
    }
    void push_b(const TagBlock& b) {
        std::lock_guard lk(mu_);
        join_.push_b(b);
    }
    void finish_a() {
        std::lock_guard lk(mu_);
        join_.finish_a();
    }
    void finish_b() {
        std::lock_guard lk(mu_);
        join_.finish_b();
    }

    CoincidenceHistogram accumulated() const {
        std::lock_guard lk(mu_);
        return total_;
    }
    std::vector<RateRow> rates() const {
        std::lock_guard lk(mu_);
        return rates_;
    }
    JoinCounters counters() const {
        std::lock_guard lk(mu_);
        return join_.counters();
    }
    const AnalyzerConfig& config() const { return cfg_; }

private:
    void close_second(const SecondSummary& s) {
        current_.cover(s.abs_second);
        total_ = accumulate(total_, current_);
        rates_.push_back(rate_row(s));
        if (on_second_)
            on_second_(SecondReport{s, current_});
        current_ = CoincidenceHistogram(cfg_.bin_width_ps, cfg_.half_window.count());
    }

    AnalyzerConfig cfg_;
    ReportSink on_second_;
    mutable std::mutex mu_;
    CoincidenceHistogram current_;
    CoincidenceHistogram total_;
    std::vector<RateRow> rates_;
    CoincidenceJoin join_;
};

}  // namespace ttnet
