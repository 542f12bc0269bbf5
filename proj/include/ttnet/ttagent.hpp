//
// ttagent.hpp
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

// Per-second time-tag processing. A device stream is cut at PPS edges; each
// interval's tags are made relative to the opening edge, rescaled by the
// measured interval length to nominal picoseconds, grouped by channel and
// labelled with the opening edge's absolute second.

#include "ttnet/clocksim.hpp"
#include "ttnet/error.hpp"
#include "ttnet/timebase.hpp"

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <vector>

namespace ttnet {

/// One second of calibrated relative tags for one channel.
struct TagBlock {
    std::uint64_t abs_second = 0;
    Channel channel = 0;
    CalibrationFactor cf{};
    bool uncalibrated = false;  // interval was gap-invalid; tags are raw offsets
    std::vector<Picoseconds> tags;

    std::size_t count() const { return tags.size(); }

    friend bool operator==(const TagBlock&, const TagBlock&) = default;
};

/// Tags between two consecutive PPS edges, [open.t_local, close.t_local).
struct Interval {
    PpsEpoch open;
    PpsEpoch close;
    bool gap_invalid = false;
    std::vector<RawTag> tags;
};

struct SegmentCounters {
    std::uint64_t tags_in = 0;
    std::uint64_t discarded_before_first_pps = 0;
    std::uint64_t discarded_trailing = 0;
    std::uint64_t metadata_dropped = 0;
    std::uint64_t intervals = 0;
    std::uint64_t gap_invalid_intervals = 0;
};

inline bool pps_gap_valid(const PpsEpoch& old, const PpsEpoch& cur) {
    if (cur.abs_second != old.abs_second + 1)
        return false;
    long double dev = static_cast<long double>((cur.t_local - old.t_local - kNominalSecond).count());
    return std::abs(dev) <= kMaxPpsDeviation * static_cast<long double>(kNominalSecond.count());
}

/// Streaming PPS segmentation. Every tag goes to the interval of the latest
/// PPS at or before it; tags before the first PPS and after the last one are
/// counted and dropped.
class PpsSegmenter {
public:
    template <typename Sink>
    void push(const DeviceEvent& ev, Sink&& on_interval) {
        if (seen_any_ && ev.t_local < last_t_)
            fail(Errc::invalid_argument, "device stream is not ordered by t_local");
        seen_any_ = true;
        last_t_ = ev.t_local;

        switch (ev.kind) {
            case EventKind::metadata:
                ++counters_.metadata_dropped;
                return;
            case EventKind::tag:
                ++counters_.tags_in;
                if (!open_)
                    ++counters_.discarded_before_first_pps;
                else
                    current_.push_back(RawTag{ev.channel, ev.t_local});
                return;
            case EventKind::pps: {
                PpsEpoch epoch{ev.abs_second, ev.t_local};
                if (open_) {
                    if (epoch.abs_second <= open_->abs_second || epoch.t_local <= open_->t_local)
                        fail(Errc::non_monotone_pps, "PPS at abs_second " + std::to_string(epoch.abs_second) +
                                                         " does not advance past " + std::to_string(open_->abs_second));
                    Interval iv;
                    iv.open = *open_;
                    iv.close = epoch;
                    iv.gap_invalid = !pps_gap_valid(*open_, epoch);
                    iv.tags = std::move(current_);
                    current_.clear();
                    ++counters_.intervals;
                    if (iv.gap_invalid)
                        ++counters_.gap_invalid_intervals;
                    on_interval(std::move(iv));
                }
                open_ = epoch;
                return;
            }
        }
    }

    /// End of stream: the open interval has no closing edge and is dropped.
    void finish() {
        counters_.discarded_trailing += current_.size();
        current_.clear();
        open_.reset();
    }

    const SegmentCounters& counters() const { return counters_; }
    std::size_t pending_tags() const { return current_.size(); }

private:
    std::optional<PpsEpoch> open_;
    std::vector<RawTag> current_;
    Picoseconds last_t_{0};
    bool seen_any_ = false;
    SegmentCounters counters_;
};

inline std::vector<Interval> segment_by_pps(std::span<const DeviceEvent> stream, SegmentCounters* counters = nullptr) {
    PpsSegmenter seg;
    std::vector<Interval> out;
    for (const auto& ev : stream)
        seg.push(ev, [&](Interval&& iv) { out.push_back(std::move(iv)); });
    seg.finish();
    if (counters)
        *counters = seg.counters();
    return out;
}

inline Picoseconds make_relative(Picoseconds raw_t_local, const PpsEpoch& epoch) {
    if (raw_t_local < epoch.t_local)
        fail(Errc::negative_offset, "tag precedes its PPS edge by " + format_ps(epoch.t_local - raw_t_local));
    return raw_t_local - epoch.t_local;
}

inline CalibrationFactor calibration_factor(const PpsEpoch& pps_cur, const PpsEpoch& pps_old) {
    if (pps_cur.t_local <= pps_old.t_local)
        fail(Errc::non_monotone_pps, "PPS timestamps do not increase");
    if (pps_cur.abs_second != pps_old.abs_second + 1)
        fail(Errc::missed_pps, "PPS seconds " + std::to_string(pps_old.abs_second) + " -> " +
                                   std::to_string(pps_cur.abs_second));
    CalibrationFactor cf{kNominalSecond, pps_cur.t_local - pps_old.t_local};
    if (!pps_gap_valid(pps_old, pps_cur))
        fail(Errc::missed_pps, "PPS interval " + format_ps(cf.measured) + " deviates more than 1e-3 from nominal");
    return cf;
}

/// round_half_even(t_rel * nominal / measured), exact in 128-bit arithmetic.
inline Picoseconds calibrate(Picoseconds t_rel, const CalibrationFactor& cf) {
    if (t_rel.count() < 0)
        fail(Errc::negative_offset, "calibrate needs t_rel >= 0");
    if (cf.nominal == cf.measured)
        return t_rel;
    using u128 = unsigned __int128;
    u128 num = u128(static_cast<std::uint64_t>(t_rel.count())) * u128(static_cast<std::uint64_t>(cf.nominal.count()));
    u128 den = static_cast<std::uint64_t>(cf.measured.count());
    u128 q = num / den;
    u128 twice_r = (num % den) * 2;
    if (twice_r > den || (twice_r == den && (q & 1)))
        ++q;
    return Picoseconds{static_cast<std::int64_t>(q)};
}

/// Runs one interval through filter -> relative -> calibrate -> group.
/// Returns one block per requested channel, in ascending channel order.
inline std::vector<TagBlock> process_second(const Interval& interval, std::span<const Channel> channels,
                                            bool apply_calibration = true) {
    std::vector<Channel> chans(channels.begin(), channels.end());
    std::sort(chans.begin(), chans.end());
    chans.erase(std::unique(chans.begin(), chans.end()), chans.end());

    CalibrationFactor cf{};
    bool uncalibrated = interval.gap_invalid;
    if (!uncalibrated && apply_calibration)
        cf = calibration_factor(interval.close, interval.open);

    std::vector<TagBlock> blocks(chans.size());
    for (std::size_t i = 0; i < chans.size(); ++i) {
        blocks[i].abs_second = interval.open.abs_second;
        blocks[i].channel = chans[i];
        blocks[i].cf = cf;
        blocks[i].uncalibrated = uncalibrated;
    }
    for (const RawTag& tag : interval.tags) {
        auto it = std::lower_bound(chans.begin(), chans.end(), tag.channel);
        if (it == chans.end() || *it != tag.channel)
            continue;
        Picoseconds rel = make_relative(tag.t_local, interval.open);
        blocks[static_cast<std::size_t>(it - chans.begin())].tags.push_back(calibrate(rel, cf));
    }
    return blocks;
}

struct AgentConfig {
    std::vector<Channel> channels;
    bool apply_calibration = true;  // false only for diagnostics
};

struct AgentCounters {
    std::uint64_t tags_in = 0;
    std::uint64_t tags_out = 0;
    std::uint64_t discarded_before_first_pps = 0;
    std::uint64_t discarded_trailing = 0;
    std::uint64_t filtered_channel = 0;
    std::uint64_t metadata_dropped = 0;
    std::uint64_t seconds_out = 0;
    std::uint64_t blocks_out = 0;
    std::uint64_t gap_invalid_seconds = 0;

    /// tags_in == tags_out + every discard class.
    bool conserved() const {
        return tags_in == tags_out + discarded_before_first_pps + discarded_trailing + filtered_channel;
    }
};

struct SecondBlocks {
    std::uint64_t abs_second = 0;
    std::vector<TagBlock> blocks;  // ascending channel
};

/// One device's pipeline. Seconds are emitted strictly in order.
class TtAgent {
public:
    using Sink = std::function<void(SecondBlocks&&)>;

    TtAgent(AgentConfig config, Sink sink) : config_(std::move(config)), sink_(std::move(sink)) {
        if (config_.channels.empty())
            fail(Errc::invalid_argument, "agent needs at least one channel");
        std::sort(config_.channels.begin(), config_.channels.end());
        config_.channels.erase(std::unique(config_.channels.begin(), config_.channels.end()), config_.channels.end());
    }

    const std::vector<Channel>& channels() const { return config_.channels; }

    void push(const DeviceEvent& ev) {
        seg_.push(ev, [this](Interval&& iv) { emit(std::move(iv)); });
    }

    void push(std::span<const DeviceEvent> events) {
        for (const auto& ev : events)
            push(ev);
    }

    void finish() { seg_.finish(); }

    AgentCounters counters() const {
        AgentCounters c = out_;
        const auto& s = seg_.counters();
        c.tags_in = s.tags_in;
        c.discarded_before_first_pps = s.discarded_before_first_pps;
        c.discarded_trailing = s.discarded_trailing;
        c.metadata_dropped = s.metadata_dropped;
        c.gap_invalid_seconds = s.gap_invalid_intervals;
        return c;
    }

private:
    void emit(Interval&& iv) {
        SecondBlocks sb;
        sb.abs_second = iv.open.abs_second;
        sb.blocks = process_second(iv, config_.channels, config_.apply_calibration);
        std::uint64_t kept = 0;
        for (const auto& b : sb.blocks)
            kept += b.count();
        out_.tags_out += kept;
        out_.filtered_channel += iv.tags.size() - kept;
        out_.blocks_out += sb.blocks.size();
        ++out_.seconds_out;
        sink_(std::move(sb));
    }

    AgentConfig config_;
    Sink sink_;
    PpsSegmenter seg_;
    AgentCounters out_;
};

/// Runs a whole in-memory stream through an agent and collects the blocks.
inline std::vector<TagBlock> run_agent(std::span<const DeviceEvent> stream, std::vector<Channel> channels,
                                       AgentCounters* counters = nullptr, bool apply_calibration = true) {
    std::vector<TagBlock> out;
    TtAgent agent({std::move(channels), apply_calibration}, [&](SecondBlocks&& sb) {
        for (auto& b : sb.blocks)
            out.push_back(std::move(b));
    });
    agent.push(stream);
    agent.finish();
    if (counters)
        *counters = agent.counters();
    return out;
}

struct RateSample {
    std::uint64_t abs_second = 0;
    double rate_hz = 0.0;

    friend bool operator==(const RateSample&, const RateSample&) = default;
};

/// Per-channel counts per second. With window_s > 1 each sample is the mean
/// over the trailing window (fewer samples at the start).
inline std::map<Channel, std::vector<RateSample>> singles_rate(std::span<const TagBlock> blocks, std::uint32_t window_s = 1) {
    if (window_s < 1)
        fail(Errc::invalid_argument, "window_s must be >= 1");
    std::map<Channel, std::vector<RateSample>> raw;
    for (const auto& b : blocks)
        raw[b.channel].push_back({b.abs_second, static_cast<double>(b.count())});
    if (window_s == 1)
        return raw;
    std::map<Channel, std::vector<RateSample>> out;
    for (auto& [ch, series] : raw) {
        auto& dst = out[ch];
        double sum = 0.0;
        for (std::size_t i = 0; i < series.size(); ++i) {
            sum += series[i].rate_hz;
            if (i >= window_s)
                sum -= series[i - window_s].rate_hz;
            std::size_t n = std::min<std::size_t>(i + 1, window_s);
            dst.push_back({series[i].abs_second, sum / static_cast<double>(n)});
        }
    }
    return out;
}

}  // namespace ttnet
