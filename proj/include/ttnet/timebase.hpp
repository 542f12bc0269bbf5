//
// timebase.hpp
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

#include "ttnet/error.hpp"

#include <bit>
#include <chrono>
#include <compare>
#include <cstdint>
#include <ratio>
#include <string>

namespace ttnet {

/// Integer picoseconds. The only time unit that crosses module boundaries.
using Picoseconds = std::chrono::duration<std::int64_t, std::pico>;

/// Fractional days, used only for reporting overflow horizons.
using Days = std::chrono::duration<long double, std::ratio<86400>>;

using Channel = std::uint16_t;

inline constexpr Picoseconds kNominalSecond{1'000'000'000'000};

/// Tags may land this far past the nominal second after calibration.
inline constexpr Picoseconds kEdgeSlack{1'000'000'000};

/// Fractional deviation of a PPS interval beyond which a PPS is considered missed.
inline constexpr long double kMaxPpsDeviation = 1e-3L;

/// Device resolution of the simulated taggers.
inline constexpr std::int64_t kResolutionPs = 1;

/// One detection event on a tagger's free-running clock.
struct RawTag {
    Channel channel = 0;
    Picoseconds t_local{0};

    friend bool operator==(const RawTag&, const RawTag&) = default;
};

/// A PPS edge as seen on a tagger's local clock, labelled with the
/// network-wide second it marks.
struct PpsEpoch {
    std::uint64_t abs_second = 0;
    Picoseconds t_local{0};

    friend bool operator==(const PpsEpoch&, const PpsEpoch&) = default;
};

struct RelativeTag {
    Channel channel = 0;
    Picoseconds t_rel{0};

    friend bool operator==(const RelativeTag&, const RelativeTag&) = default;
};

/// Measured length of one PPS interval against the nominal second. The
/// multiplier applied to relative tags is nominal / measured.
struct CalibrationFactor {
    Picoseconds nominal{kNominalSecond};
    Picoseconds measured{kNominalSecond};

    long double multiplier() const {
        return static_cast<long double>(nominal.count()) / static_cast<long double>(measured.count());
    }

    bool is_identity() const { return nominal == measured; }

    friend bool operator==(const CalibrationFactor&, const CalibrationFactor&) = default;
};

/// Network-comparable event time. Lexicographic on (abs_second, t_rel).
struct AbsTime {
    std::uint64_t abs_second = 0;
    Picoseconds t_rel{0};

    friend auto operator<=>(const AbsTime&, const AbsTime&) = default;
};

/// Minimum number of bits able to represent every offset in [0, interval)
/// at the given resolution.
constexpr unsigned required_bits(Picoseconds interval, std::int64_t resolution_ps) {
    if (interval.count() <= 0 || resolution_ps < 1)
        fail(Errc::invalid_argument, "required_bits needs interval > 0 and resolution >= 1");
    auto ticks = static_cast<std::uint64_t>(interval.count());
    auto res = static_cast<std::uint64_t>(resolution_ps);
    std::uint64_t distinct = ticks / res + (ticks % res != 0 ? 1 : 0);
    if (distinct <= 1)
        return 0;
    return static_cast<unsigned>(std::bit_width(distinct - 1));
}

/// Time until a counter of `bits` bits at `resolution_ps` wraps.
/// A signed 64-bit tagger has a 63-bit magnitude, which is the ~106.75 day figure.
inline Days overflow_horizon(unsigned bits, std::int64_t resolution_ps) {
    if (bits < 1 || bits > 63 || resolution_ps < 1)
        fail(Errc::invalid_argument, "overflow_horizon needs 1 <= bits <= 63 and resolution >= 1");
    long double ps = static_cast<long double>(std::uint64_t{1} << bits) * static_cast<long double>(resolution_ps);
    return Days{ps / 8.64e16L};
}

/// Horizon of a full unsigned 64-bit counter (no sign bit reserved).
inline Days overflow_horizon_unsigned64(std::int64_t resolution_ps) {
    if (resolution_ps < 1)
        fail(Errc::invalid_argument, "resolution must be >= 1");
    return Days{18446744073709551616.0L * static_cast<long double>(resolution_ps) / 8.64e16L};
}

inline constexpr AbsTime abs_time_of(const RelativeTag& tag, const PpsEpoch& epoch) {
    return AbsTime{epoch.abs_second, tag.t_rel};
}

inline std::string format_ps(Picoseconds t) { return std::to_string(t.count()) + " ps"; }

}  // namespace ttnet
