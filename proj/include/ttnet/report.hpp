//
// report.hpp
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

// Text artifacts: CSV, minimal SVG, key/value summaries and the run report.
//
// CSV schemas (header line always present, '\n' line ends):
//   histogram  bin_center_ps,count
//   rates      abs_second,rate_a,rate_b,coincidences,efficiency
//              efficiency is coincidences/max(rate_a,rate_b) with six
//              decimals, or "undefined" when both rates are zero
//   truth      emission_ps,arrival_a_ps,arrival_b_ps   (pairs seen by both labs)

#include "ttnet/clocksim.hpp"
#include "ttnet/codec.hpp"
#include "ttnet/coincidence.hpp"
#include "ttnet/error.hpp"
#include "ttnet/timebase.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace ttnet {

namespace fs = std::filesystem;

/// Shortest round-trip decimal form; identical on every run.
inline std::string format_double(double v) {
    if (std::isnan(v))
        return "nan";
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

inline std::string format_fixed(double v, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    return buf;
}

inline void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f)
        fail(Errc::io_error, "cannot create " + path.string());
    f << text;
    if (!f)
        fail(Errc::io_error, "write failed: " + path.string());
}

inline std::string read_text(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f)
        fail(Errc::io_error, "cannot open " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

inline std::string histogram_csv(const CoincidenceHistogram& h) {
    std::string out = "bin_center_ps,count\n";
    for (std::size_t i = 0; i < h.bins.size(); ++i) {
        out += format_double(h.bin_center(i));
        out += ',';
        out += std::to_string(h.bins[i]);
        out += '\n';
    }
    return out;
}

inline std::string format_efficiency(const std::optional<double>& e) { return e ? format_fixed(*e, 6) : "undefined"; }

inline std::string rates_csv(std::span<const RateRow> rows) {
    std::string out = "abs_second,rate_a,rate_b,coincidences,efficiency\n";
    for (const auto& r : rows) {
        out += std::to_string(r.abs_second) + ',' + std::to_string(r.rate_a) + ',' + std::to_string(r.rate_b) + ',' +
               std::to_string(r.coincidences) + ',' + format_efficiency(r.efficiency) + '\n';
    }
    return out;
}

inline constexpr const char* kTruthCsvHeader = "emission_ps,arrival_a_ps,arrival_b_ps\n";

inline void append_truth_csv(std::string& out, std::span<const TruePair> pairs) {
    for (const auto& p : pairs) {
        if (!(p.detected_a && p.detected_b))
            continue;
        out += std::to_string(p.emission.count()) + ',' + std::to_string(p.arrival_a.count()) + ',' +
               std::to_string(p.arrival_b.count()) + '\n';
    }
}

// ---------------------------------------------------------------------------
// SVG

/// Bar chart of a histogram with axes and an optional peak marker.
inline std::string histogram_svg(const CoincidenceHistogram& h, const std::string& title,
                                 const std::optional<PeakResult>& peak = std::nullopt) {
    const double W = 800, H = 400, L = 70, R = 20, T = 40, B = 50;
    const double pw = W - L - R, ph = H - T - B;
    std::uint64_t ymax = 1;
    for (auto c : h.bins)
        ymax = std::max(ymax, c);
    auto f = [](double v) { return format_fixed(v, 2); };
    std::string s;
    s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"800\" height=\"400\" viewBox=\"0 0 800 400\">\n";
    s += "<rect width=\"800\" height=\"400\" fill=\"white\"/>\n";
    s += "<text x=\"" + f(W / 2) + "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">" + title +
         "</text>\n";
    const double bw = pw / static_cast<double>(std::max<std::size_t>(h.bins.size(), 1));
    for (std::size_t i = 0; i < h.bins.size(); ++i) {
        if (h.bins[i] == 0)
            continue;
        double bh = ph * static_cast<double>(h.bins[i]) / static_cast<double>(ymax);
        s += "<rect x=\"" + f(L + bw * static_cast<double>(i)) + "\" y=\"" + f(T + ph - bh) + "\" width=\"" + f(std::max(bw, 0.5)) +
             "\" height=\"" + f(bh) + "\" fill=\"steelblue\"/>\n";
    }
    s += "<line x1=\"" + f(L) + "\" y1=\"" + f(T + ph) + "\" x2=\"" + f(L + pw) + "\" y2=\"" + f(T + ph) + "\" stroke=\"black\"/>\n";
    s += "<line x1=\"" + f(L) + "\" y1=\"" + f(T) + "\" x2=\"" + f(L) + "\" y2=\"" + f(T + ph) + "\" stroke=\"black\"/>\n";
    auto label = [&](double x, double y, const std::string& text, const char* anchor) {
        s += "<text x=\"" + f(x) + "\" y=\"" + f(y) + "\" text-anchor=\"" + anchor +
             "\" font-family=\"sans-serif\" font-size=\"12\">" + text + "</text>\n";
    };
    label(L, T + ph + 18, format_double(static_cast<double>(-h.half_window_ps)), "start");
    label(L + pw / 2, T + ph + 18, "0", "middle");
    label(L + pw, T + ph + 18, format_double(static_cast<double>(h.half_window_ps)), "end");
    label(L + pw / 2, H - 10, "dt = t_a - t_b (ps)", "middle");
    label(L - 6, T + 4, std::to_string(ymax), "end");
    label(L - 6, T + ph, "0", "end");
    if (peak) {
        double x = L + pw * (peak->center_ps + static_cast<double>(h.half_window_ps)) / static_cast<double>(2 * h.half_window_ps);
        s += "<line x1=\"" + f(x) + "\" y1=\"" + f(T) + "\" x2=\"" + f(x) + "\" y2=\"" + f(T + ph) +
             "\" stroke=\"crimson\" stroke-dasharray=\"4 3\"/>\n";
        label(x + 4, T + 14, "peak " + format_fixed(peak->center_ps, 1) + " ps", "start");
    }
    s += "</svg>\n";
    return s;
}

// ---------------------------------------------------------------------------
// key: value summaries

using KeyValues = std::vector<std::pair<std::string, std::string>>;

inline std::string format_key_values(const KeyValues& kv) {
    std::string out;
    for (const auto& [k, v] : kv)
        out += k + ": " + v + '\n';
    return out;
}

inline std::map<std::string, std::string> parse_key_values(const std::string& text) {
    std::map<std::string, std::string> out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        auto colon = line.find(": ");
        if (colon == std::string::npos)
            continue;
        out[line.substr(0, colon)] = line.substr(colon + 2);
    }
    return out;
}

inline std::optional<double> kv_number(const std::map<std::string, std::string>& kv, const std::string& key) {
    auto it = kv.find(key);
    if (it == kv.end())
        return std::nullopt;
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(it->second.data(), it->second.data() + it->second.size(), v);
    if (ec != std::errc{})
        return std::nullopt;
    return v;
}

// ---------------------------------------------------------------------------
// Codec statistics

struct CodecStats {
    CodecId codec = kDefaultCodec;
    std::uint64_t bytes = 0;
    std::uint64_t tags = 0;
    std::uint64_t blocks = 0;

    std::optional<double> bytes_per_tag() const {
        if (tags == 0)
            return std::nullopt;
        return static_cast<double>(bytes) / static_cast<double>(tags);
    }
};

/// Re-encodes every block under each codec.
class CodecTally {
public:
    CodecTally() {
        for (CodecId c : supported_codecs())
            stats_.push_back({c, 0, 0, 0});
    }

    void add(const TagBlock& b) {
        for (auto& s : stats_) {
            s.bytes += encode(b, s.codec).size();
            s.tags += b.count();
            ++s.blocks;
        }
    }

    const std::vector<CodecStats>& stats() const { return stats_; }

private:
    std::vector<CodecStats> stats_;
};

inline std::string codec_name(CodecId c) {
    switch (c) {
        case CodecId::raw40:                return "raw40";
        case CodecId::delta_varint:         return "delta-varint";
        case CodecId::delta_varint_deflate: return "delta-varint+deflate";
    }
    return "codec-" + std::to_string(static_cast<int>(c));
}

inline std::string reduction_line(double baseline, double compressed) {
    return format_fixed(baseline, 2) + " -> " + format_fixed(compressed, 2) + " bytes/tag = " +
           format_fixed(reduction_percent(baseline, compressed), 1) + "% reduction";
}

// ---------------------------------------------------------------------------
// Expected coincidence rate

/// Thinning-model expectation for a scenario: true pairs surviving both
/// detectors inside the window plus uniform accidentals among all singles.
struct RateModel {
    double singles_a = 0.0;
    double singles_b = 0.0;
    double true_coincidences = 0.0;
    double accidentals = 0.0;

    double coincidences() const { return true_coincidences + accidentals; }
    double ratio() const { return coincidences() / std::max(singles_a, singles_b); }
};

inline RateModel rate_model(const ScenarioConfig& c, Picoseconds half_window) {
    RateModel m;
    m.singles_a = c.pair_rate_hz * c.eff_a + c.dark_rate_a_hz;
    m.singles_b = c.pair_rate_hz * c.eff_b + c.dark_rate_b_hz;
    double sigma = std::sqrt(c.jitter_a_ps * c.jitter_a_ps + c.jitter_b_ps * c.jitter_b_ps);
    double hw = static_cast<double>(half_window.count());
    double inside = sigma > 0.0 ? std::erf(hw / (sigma * std::sqrt(2.0))) : 1.0;
    m.true_coincidences = c.pair_rate_hz * c.eff_a * c.eff_b * inside;
    m.accidentals = m.singles_a * m.singles_b * (2.0 * hw) / static_cast<double>(kNominalSecond.count());
    return m;
}

// ---------------------------------------------------------------------------
// Acceptance table

enum class CheckStatus { pass, fail, skip };

inline std::string to_string(CheckStatus s) {
    switch (s) {
        case CheckStatus::pass: return "PASS";
        case CheckStatus::fail: return "FAIL";
        case CheckStatus::skip: return "SKIP";
    }
    return "?";
}

struct AcceptanceRow {
    int id = 0;
    std::string name;
    CheckStatus status = CheckStatus::skip;
    std::string detail;
};

/// The nine acceptance checks, in order.
inline const std::vector<std::string>& acceptance_names() {
    static const std::vector<std::string> names{
        "overflow arithmetic",
        "calibration recovery",
        "coincidence oracle equivalence",
        "delay compensation",
        "rate reproduction",
        "compression",
        "protocol",
        "intra-second drift broadening",
        "determinism",
    };
    return names;
}

inline std::string format_acceptance_line(const AcceptanceRow& r) {
    return "[" + to_string(r.status) + "] " + std::to_string(r.id) + " " + r.name + (r.detail.empty() ? "" : ": " + r.detail);
}

inline std::string format_acceptance_table(std::span<const AcceptanceRow> rows) {
    std::string out = "id | check | status | detail\n";
    for (const auto& r : rows)
        out += std::to_string(r.id) + " | " + r.name + " | " + to_string(r.status) + " | " + r.detail + '\n';
    return out;
}

}  // namespace ttnet
