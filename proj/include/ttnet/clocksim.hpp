//
// clocksim.hpp
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

// Two-lab photon-pair experiment simulator: Poisson pair source, lossy
// detectors with Gaussian jitter, dark counts, free-running tagger
// oscillators and WR-disciplined PPS edges. All randomness comes from
// named sub-streams of one SplitRng, so the output depends only on the
// scenario and never on generation order or chunking.

#include "ttnet/error.hpp"
#include "ttnet/random.hpp"
#include "ttnet/timebase.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace ttnet {

struct OscillatorModel {
    double frac_offset = 0.0;          // 1e-5 == 10 ppm fast
    double rw_step_ps = 0.0;           // std-dev of the phase walk accumulated over one second
    std::uint32_t rw_knots_per_second = 1000;
    std::int64_t const_offset_ps = 0;  // local clock reading at true time 0
    std::uint64_t seed = 0;

    void validate(const char* who) const {
        if (!(std::abs(frac_offset) < 1e-3))
            fail(Errc::invalid_config, std::string(who) + ": |frac_offset| must be < 1e-3");
        if (!(rw_step_ps >= 0.0))
            fail(Errc::invalid_config, std::string(who) + ": rw_step_ps must be >= 0");
        if (rw_knots_per_second < 1 || rw_knots_per_second > 1'000'000)
            fail(Errc::invalid_config, std::string(who) + ": rw_knots_per_second must be in [1, 1e6]");
    }

    friend bool operator==(const OscillatorModel&, const OscillatorModel&) = default;
};

/// Full parameterization of a simulated two-lab run. The defaults are the
/// shipped reference scenario: about 550k (Alice) and 600k (Bob) singles/s,
/// roughly 25k coincidences/s in a 10 ns window and a 7 us inter-lab delay.
struct ScenarioConfig {
    double pair_rate_hz = 87'000.0;
    double eff_a = 0.5;
    double eff_b = 0.5;
    double dark_rate_a_hz = 506'500.0;
    double dark_rate_b_hz = 556'500.0;
    std::int64_t delay_a_ps = 7'150'000;
    std::int64_t delay_b_ps = 150'000;
    double jitter_a_ps = 50.0;
    double jitter_b_ps = 50.0;
    OscillatorModel osc_a{4.2e-6, 0.0, 1000, 123'456'789, 11};
    OscillatorModel osc_b{-2.7e-6, 0.0, 1000, 987'654'321, 23};
    std::uint32_t duration_s = 30;
    double pps_jitter_ps = 10.0;
    std::uint64_t seed = 42;

    Channel channel_a = 2;  // Alice
    Channel channel_b = 1;  // Bob
    Channel pps_channel = 0;
    std::uint64_t abs_origin_s = 1'760'000'000;

    void validate() const {
        auto nonneg = [](double v, const char* name) {
            if (!(v >= 0.0) || !std::isfinite(v))
                fail(Errc::invalid_config, std::string(name) + " must be finite and >= 0");
        };
        nonneg(pair_rate_hz, "pair_rate_hz");
        nonneg(dark_rate_a_hz, "dark_rate_a_hz");
        nonneg(dark_rate_b_hz, "dark_rate_b_hz");
        nonneg(jitter_a_ps, "jitter_a_ps");
        nonneg(jitter_b_ps, "jitter_b_ps");
        nonneg(pps_jitter_ps, "pps_jitter_ps");
        if (!(eff_a >= 0.0 && eff_a <= 1.0) || !(eff_b >= 0.0 && eff_b <= 1.0))
            fail(Errc::invalid_config, "efficiencies must lie in [0, 1]");
        if (std::abs(delay_a_ps) >= kEdgeSlack.count() || std::abs(delay_b_ps) >= kEdgeSlack.count())
            fail(Errc::invalid_config, "path delays must be below 1e9 ps");
        if (duration_s > 1'000'000)
            fail(Errc::invalid_config, "duration_s too large");
        if (channel_a == pps_channel || channel_b == pps_channel)
            fail(Errc::invalid_config, "detector channels must differ from the PPS channel");
        osc_a.validate("osc_a");
        osc_b.validate("osc_b");
    }

    friend bool operator==(const ScenarioConfig&, const ScenarioConfig&) = default;
};

/// The desk-scale variant: ten times lower rates than the reference scenario.
inline ScenarioConfig desk_scenario() {
    ScenarioConfig c;
    c.pair_rate_hz = 8'700.0;
    c.dark_rate_a_hz = 50'650.0;
    c.dark_rate_b_hz = 55'650.0;
    return c;
}

// ---------------------------------------------------------------------------
// Config file: one `key = value` per line, `#` starts a comment.

namespace detail {

template <typename T>
void parse_number(const std::string& key, const std::string& text, T& out) {
    const char* first = text.data();
    const char* last = first + text.size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    if (ec != std::errc{} || ptr != last)
        fail(Errc::invalid_config, "bad value for '" + key + "': '" + text + "'");
}

template <typename T>
std::string format_number(T v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

inline std::string trim(std::string s) {
    auto not_space = [](unsigned char c) { return !std::isspace(c); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
    s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
    return s;
}

template <typename Visitor>
void visit_fields(ScenarioConfig& c, Visitor&& v) {
    v("pair_rate_hz", c.pair_rate_hz);
    v("eff_a", c.eff_a);
    v("eff_b", c.eff_b);
    v("dark_rate_a_hz", c.dark_rate_a_hz);
    v("dark_rate_b_hz", c.dark_rate_b_hz);
    v("delay_a_ps", c.delay_a_ps);
    v("delay_b_ps", c.delay_b_ps);
    v("jitter_a_ps", c.jitter_a_ps);
    v("jitter_b_ps", c.jitter_b_ps);
    for (auto [prefix, osc] : {std::pair{"osc_a.", &c.osc_a}, std::pair{"osc_b.", &c.osc_b}}) {
        std::string p = prefix;
        v(p + "frac_offset", osc->frac_offset);
        v(p + "rw_step_ps", osc->rw_step_ps);
        v(p + "rw_knots_per_second", osc->rw_knots_per_second);
        v(p + "const_offset_ps", osc->const_offset_ps);
        v(p + "seed", osc->seed);
    }
    v("duration_s", c.duration_s);
    v("pps_jitter_ps", c.pps_jitter_ps);
    v("seed", c.seed);
    v("channel_a", c.channel_a);
    v("channel_b", c.channel_b);
    v("pps_channel", c.pps_channel);
    v("abs_origin_s", c.abs_origin_s);
}

}  // namespace detail

/// Parses a scenario; keys not present keep their reference-scenario default.
inline ScenarioConfig parse_scenario(const std::string& text, ScenarioConfig base = {}) {
    std::map<std::string, std::string> kv;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos)
            line.erase(hash);
        line = detail::trim(line);
        if (line.empty())
            continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            fail(Errc::invalid_config, "line " + std::to_string(lineno) + ": expected key = value");
        kv[detail::trim(line.substr(0, eq))] = detail::trim(line.substr(eq + 1));
    }
    detail::visit_fields(base, [&](const std::string& key, auto& field) {
        if (auto it = kv.find(key); it != kv.end()) {
            detail::parse_number(key, it->second, field);
            kv.erase(it);
        }
    });
    if (!kv.empty())
        fail(Errc::invalid_config, "unknown key '" + kv.begin()->first + "'");
    base.validate();
    return base;
}

inline ScenarioConfig load_scenario(const std::string& path) {
    std::ifstream f(path);
    if (!f)
        fail(Errc::io_error, "cannot open scenario file " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_scenario(ss.str());
}

inline std::string to_config_text(ScenarioConfig c) {
    std::string out;
    detail::visit_fields(c, [&](const std::string& key, auto& field) {
        out += key + " = " + detail::format_number(field) + "\n";
    });
    return out;
}

// ---------------------------------------------------------------------------
// Oscillator

/// Local-clock mapping of one tagger: linear drift plus a Gaussian phase
/// random walk sampled on a regular grid of knots and interpolated linearly
/// between them.
class DeviceClock {
public:
    DeviceClock() = default;

    DeviceClock(const OscillatorModel& model, std::uint32_t seconds_covered) : model_(model) {
        model.validate("oscillator");
        spacing_ = kNominalSecond.count() / model.rw_knots_per_second;
        std::size_t knots = std::size_t{seconds_covered} * model.rw_knots_per_second + 1;
        walk_.assign(knots, 0.0);
        if (model.rw_step_ps > 0.0) {
            SplitRng rng = SplitRng(model.seed).split("clock-walk");
            std::normal_distribution<double> step(0.0, 1.0);
            double sd = model.rw_step_ps / std::sqrt(static_cast<double>(model.rw_knots_per_second));
            for (std::size_t i = 1; i < knots; ++i)
                walk_[i] = walk_[i - 1] + sd * step(rng);
        }
    }

    const OscillatorModel& model() const { return model_; }

    /// Accumulated random-walk phase (ps) at true time t.
    double phase(Picoseconds t) const {
        if (walk_.empty() || t.count() <= 0)
            return walk_.empty() ? 0.0 : walk_.front();
        auto j = static_cast<std::size_t>(t.count() / spacing_);
        if (j + 1 >= walk_.size())
            return walk_.back();
        double frac = static_cast<double>(t.count() - static_cast<std::int64_t>(j) * spacing_) / static_cast<double>(spacing_);
        return walk_[j] + frac * (walk_[j + 1] - walk_[j]);
    }

    /// Exact, unrounded deviation local(t) - t - const_offset.
    double deviation(Picoseconds t) const {
        return static_cast<double>(t.count()) * model_.frac_offset + phase(t);
    }

    Picoseconds local(Picoseconds t) const {
        return Picoseconds{t.count() + std::llround(deviation(t)) + model_.const_offset_ps};
    }

private:
    OscillatorModel model_{};
    std::int64_t spacing_ = kNominalSecond.count();
    std::vector<double> walk_;
};

/// local(t) = t * (1 + frac_offset) + phase_walk(t) + const_offset,
/// rounded to the nearest picosecond. Non-decreasing in t; strictly
/// increasing for inputs at least 2 ps apart.
inline Picoseconds local_clock(Picoseconds t_true, const DeviceClock& clock) { return clock.local(t_true); }

// ---------------------------------------------------------------------------
// Streams

enum class EventKind : std::uint8_t { tag = 0, pps = 1, metadata = 2 };

/// One record of a tagger's output stream. abs_second is meaningful only
/// for PPS events.
struct DeviceEvent {
    Picoseconds t_local{0};
    std::uint64_t abs_second = 0;
    Channel channel = 0;
    EventKind kind = EventKind::tag;

    static DeviceEvent tag(Channel ch, Picoseconds t) { return {t, 0, ch, EventKind::tag}; }
    static DeviceEvent pps(Channel ch, Picoseconds t, std::uint64_t sec) { return {t, sec, ch, EventKind::pps}; }

    friend bool operator==(const DeviceEvent&, const DeviceEvent&) = default;
};

/// Stream order: by local time, PPS before tags on ties.
inline bool stream_order(const DeviceEvent& x, const DeviceEvent& y) {
    if (x.t_local != y.t_local)
        return x.t_local < y.t_local;
    auto rank = [](EventKind k) { return k == EventKind::pps ? 0 : 1; };
    if (rank(x.kind) != rank(y.kind))
        return rank(x.kind) < rank(y.kind);
    return x.channel < y.channel;
}

struct TruePair {
    Picoseconds emission{0};
    Picoseconds arrival_a{0};  // true time at Alice's detector (valid even if not detected)
    Picoseconds arrival_b{0};
    bool detected_a = false;
    bool detected_b = false;

    friend bool operator==(const TruePair&, const TruePair&) = default;
};

struct GroundTruth {
    std::vector<TruePair> true_pairs;
    DeviceClock clock_a;
    DeviceClock clock_b;
    std::uint64_t dark_counts_a = 0;
    std::uint64_t dark_counts_b = 0;
};

/// Generates both device streams one simulated second at a time. Each call
/// to next() returns every event that can no longer be preceded by a later
/// one, sorted in stream order.
class Simulator {
public:
    explicit Simulator(const ScenarioConfig& config, bool record_truth = true)
        : cfg_(config), record_truth_(record_truth), root_(config.seed) {
        cfg_.validate();
        truth_.clock_a = DeviceClock(cfg_.osc_a, cfg_.duration_s + 2);
        truth_.clock_b = DeviceClock(cfg_.osc_b, cfg_.duration_s + 2);
        emission_rng_ = root_.split("emission");
        a_ = Device(root_, "a", cfg_.dark_rate_a_hz);
        b_ = Device(root_, "b", cfg_.dark_rate_b_hz);
        if (cfg_.pair_rate_hz > 0.0)
            next_emission_ = draw_gap(emission_rng_, cfg_.pair_rate_hz);
    }

    const ScenarioConfig& config() const { return cfg_; }
    const GroundTruth& truth() const { return truth_; }
    GroundTruth take_truth() { return std::move(truth_); }

    /// Moves out the pairs recorded so far, keeping memory flat on long runs.
    std::vector<TruePair> drain_pairs() {
        std::vector<TruePair> out;
        out.swap(truth_.true_pairs);
        return out;
    }

    /// Appends the next finalized events; returns false when the run is exhausted.
    bool next(std::vector<DeviceEvent>& out_a, std::vector<DeviceEvent>& out_b) {
        if (step_ > cfg_.duration_s)
            return false;
        const std::uint32_t k = step_++;
        const std::int64_t second = kNominalSecond.count();
        add_pps(a_, truth_.clock_a, k);
        add_pps(b_, truth_.clock_b, k);
        if (k == cfg_.duration_s) {
            flush(a_, out_a, INT64_MAX);
            flush(b_, out_b, INT64_MAX);
            return true;
        }
        const double chunk_end = static_cast<double>(k + 1) * static_cast<double>(second);
        if (cfg_.pair_rate_hz > 0.0) {
            while (next_emission_ < chunk_end) {
                emit_pair(Picoseconds{std::llround(next_emission_)});
                next_emission_ += draw_gap(emission_rng_, cfg_.pair_rate_hz);
            }
        }
        add_darks(a_, truth_.clock_a, cfg_.channel_a, chunk_end, truth_.dark_counts_a);
        add_darks(b_, truth_.clock_b, cfg_.channel_b, chunk_end, truth_.dark_counts_b);

        const std::int64_t boundary = static_cast<std::int64_t>(k + 1) * second;
        const std::int64_t pps_margin = -clamp_sigmas(cfg_.pps_jitter_ps);
        flush(a_, out_a, boundary + std::min({cfg_.delay_a_ps - clamp_sigmas(cfg_.jitter_a_ps), pps_margin, std::int64_t{0}}));
        flush(b_, out_b, boundary + std::min({cfg_.delay_b_ps - clamp_sigmas(cfg_.jitter_b_ps), pps_margin, std::int64_t{0}}));
        return true;
    }

private:
    // Gaussian noise is truncated at this many standard deviations so that
    // the chunk frontier is a hard bound.
    static constexpr double kClampSigma = 8.0;

    struct Pending {
        std::int64_t t_true;
        DeviceEvent ev;
    };

    struct Device {
        Device() = default;
        Device(const SplitRng& root, const std::string& name, double dark_hz)
            : thin(root.split("thinning-" + name)), jitter(root.split("jitter-" + name)),
              dark(root.split("dark-" + name)), pps(root.split("pps-" + name)), dark_hz(dark_hz) {
            if (dark_hz > 0.0)
                next_dark = draw_gap(dark, dark_hz);
        }
        SplitRng thin{0}, jitter{0}, dark{0}, pps{0};
        std::normal_distribution<double> jitter_dist{0.0, 1.0};
        std::normal_distribution<double> pps_dist{0.0, 1.0};
        std::uniform_real_distribution<double> unit{0.0, 1.0};
        double dark_hz = 0.0;
        double next_dark = 0.0;
        std::vector<Pending> pending;
    };

    static double draw_gap(SplitRng& rng, double rate_hz) {
        std::exponential_distribution<double> gap(rate_hz / static_cast<double>(kNominalSecond.count()));
        return gap(rng);
    }

    static std::int64_t clamp_sigmas(double sd) { return static_cast<std::int64_t>(std::ceil(kClampSigma * sd)) + 1; }

    static std::int64_t gaussian(std::normal_distribution<double>& dist, SplitRng& rng, double sd) {
        double z = std::clamp(dist(rng), -kClampSigma, kClampSigma);
        return std::llround(z * sd);
    }

    void push(Device& dev, const DeviceClock& clock, Channel ch, std::int64_t t_true, EventKind kind, std::uint64_t sec = 0) {
        Picoseconds local = clock.local(Picoseconds{t_true});
        dev.pending.push_back({t_true, DeviceEvent{local, sec, ch, kind}});
    }

    void add_pps(Device& dev, const DeviceClock& clock, std::uint32_t k) {
        std::int64_t edge = static_cast<std::int64_t>(k) * kNominalSecond.count() + gaussian(dev.pps_dist, dev.pps, cfg_.pps_jitter_ps);
        push(dev, clock, cfg_.pps_channel, edge, EventKind::pps, cfg_.abs_origin_s + k);
    }

    void emit_pair(Picoseconds emission) {
        TruePair p;
        p.emission = emission;
        // Jitter is drawn for every photon so the jitter sub-stream does not
        // depend on the detection efficiency.
        p.arrival_a = emission + Picoseconds{cfg_.delay_a_ps + gaussian(a_.jitter_dist, a_.jitter, cfg_.jitter_a_ps)};
        p.arrival_b = emission + Picoseconds{cfg_.delay_b_ps + gaussian(b_.jitter_dist, b_.jitter, cfg_.jitter_b_ps)};
        p.detected_a = a_.unit(a_.thin) < cfg_.eff_a;
        p.detected_b = b_.unit(b_.thin) < cfg_.eff_b;
        if (p.detected_a)
            push(a_, truth_.clock_a, cfg_.channel_a, p.arrival_a.count(), EventKind::tag);
        if (p.detected_b)
            push(b_, truth_.clock_b, cfg_.channel_b, p.arrival_b.count(), EventKind::tag);
        if (record_truth_)
            truth_.true_pairs.push_back(p);
    }

    void add_darks(Device& dev, const DeviceClock& clock, Channel ch, double chunk_end, std::uint64_t& counter) {
        if (dev.dark_hz <= 0.0)
            return;
        while (dev.next_dark < chunk_end) {
            push(dev, clock, ch, std::llround(dev.next_dark), EventKind::tag);
            ++counter;
            dev.next_dark += draw_gap(dev.dark, dev.dark_hz);
        }
    }

    static void flush(Device& dev, std::vector<DeviceEvent>& out, std::int64_t frontier) {
        auto mid = std::partition(dev.pending.begin(), dev.pending.end(),
                                  [&](const Pending& p) { return p.t_true < frontier; });
        std::sort(dev.pending.begin(), mid, [](const Pending& x, const Pending& y) {
            if (stream_order(x.ev, y.ev))
                return true;
            if (stream_order(y.ev, x.ev))
                return false;
            return x.t_true < y.t_true;
        });
        out.reserve(out.size() + static_cast<std::size_t>(mid - dev.pending.begin()));
        for (auto it = dev.pending.begin(); it != mid; ++it)
            out.push_back(it->ev);
        dev.pending.erase(dev.pending.begin(), mid);
    }

    ScenarioConfig cfg_;
    bool record_truth_;
    SplitRng root_;
    SplitRng emission_rng_{0};
    Device a_, b_;
    double next_emission_ = 0.0;
    std::uint32_t step_ = 0;
    GroundTruth truth_;
};

struct SimulationResult {
    std::vector<DeviceEvent> stream_a;
    std::vector<DeviceEvent> stream_b;
    GroundTruth truth;
};

/// Runs a whole scenario in memory. For long high-rate runs prefer driving
/// a Simulator chunk by chunk.
inline SimulationResult simulate(const ScenarioConfig& config) {
    Simulator sim(config, true);
    SimulationResult r;
    while (sim.next(r.stream_a, r.stream_b)) {
    }
    r.truth = sim.take_truth();
    return r;
}

}  // namespace ttnet
