//
// ttnet.cpp
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

// ttnet command line.
//
// Exit codes: 0 ok, 1 other failure, 2 usage or config, 3 file or data,
// 4 connection, 5 protocol, 6 no overlap / empty, 7 no signal.

#include "ttnet/ttnet.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace {

std::atomic<bool> g_interrupted{false};

extern "C" void on_signal(int) { g_interrupted.store(true); }

void install_signal_handlers() {
    struct sigaction sa {};
    sa.sa_handler = on_signal;
    sigemptyset(&sa.sa_mask);
    sigaction(SIGINT, &sa, nullptr);
    sigaction(SIGTERM, &sa, nullptr);
}

std::string env_or(const char* name, const std::string& fallback) {
    const char* v = std::getenv(name);
    return v && *v ? std::string(v) : fallback;
}

ttnet::CodecId codec_from(int id) {
    if (!ttnet::is_known_codec(static_cast<std::uint8_t>(id)) || id < 0)
        ttnet::fail(ttnet::Errc::invalid_argument, "codec must be 0, 1 or 2");
    return static_cast<ttnet::CodecId>(id);
}

struct ScenarioArgs {
    std::string file;
    std::string preset = "default";
    std::optional<std::uint64_t> seed;
    std::optional<std::uint32_t> duration;

    void add(CLI::App* app) {
        app->add_option("--scenario", file, "Scenario config file (key = value)")->check(CLI::ExistingFile);
        app->add_option("--preset", preset, "Built-in scenario when no file is given")
            ->check(CLI::IsMember({"default", "desk"}));
        app->add_option("--seed", seed, "Override the scenario seed");
        app->add_option("--duration", duration, "Override duration_s");
    }

    ttnet::ScenarioConfig load() const {
        ttnet::ScenarioConfig c = preset == "desk" ? ttnet::desk_scenario() : ttnet::ScenarioConfig{};
        if (!file.empty())
            c = ttnet::parse_scenario(ttnet::read_text(file), c);
        if (seed)
            c.seed = *seed;
        if (duration)
            c.duration_s = *duration;
        c.validate();
        return c;
    }
};

void print_lines(const std::string& s) { std::cout << s << '\n' << std::flush; }

int cmd_simulate(const ScenarioArgs& sa, const std::string& out, bool no_truth) {
    auto cfg = sa.load();
    ttnet::simulate_to_dir(cfg, out, !no_truth);
    std::cout << ttnet::read_text(ttnet::fs::path(out) / "simulate_summary.txt");
    return 0;
}

struct AgentArgs {
    std::string input;
    std::string listen;
    std::vector<unsigned> channels{1, 2};
    int codec = 2;
    std::size_t retain = 0;
    bool fast = false;
    std::string ttb_out;
    bool quiet = false;
};

int cmd_agent(const AgentArgs& a) {
    ttnet::AgentServiceOptions o;
    o.input = a.input;
    o.listen = ttnet::parse_endpoint(a.listen);
    o.channels.clear();
    for (unsigned c : a.channels) {
        if (c > 0xFFFF)
            ttnet::fail(ttnet::Errc::invalid_argument, "channel out of range");
        o.channels.push_back(static_cast<ttnet::Channel>(c));
    }
    o.codec = codec_from(a.codec);
    o.retain_seconds = a.retain;
    o.pace = !a.fast;
    o.ttb_out = a.ttb_out;
    if (!a.quiet)
        o.log = print_lines;
    if (!std::ifstream(a.input))
        ttnet::fail(ttnet::Errc::io_error, "cannot open " + a.input);
    install_signal_handlers();
    ttnet::AgentService svc(o);
    print_lines(svc.banner());
    svc.start();
    bool reported = false;
    while (!g_interrupted.load()) {
        std::this_thread::sleep_for(std::chrono::milliseconds(100));
        if (!reported && svc.store().closed()) {
            auto c = svc.counters();
            print_lines("input done: seconds=" + std::to_string(c.seconds_out) + " tags_in=" + std::to_string(c.tags_in) +
                        " tags_out=" + std::to_string(c.tags_out) + " gap_invalid=" + std::to_string(c.gap_invalid_seconds) +
                        " discarded=" + std::to_string(c.discarded_before_first_pps + c.discarded_trailing));
            reported = true;
        }
    }
    print_lines("interrupted: flushing completed seconds");
    svc.interrupt();
    svc.wait_input();
    svc.stop();
    auto c = svc.counters();
    print_lines("served seconds=" + std::to_string(c.seconds_out) + " sessions=" + std::to_string(svc.service_stats().sessions));
    return 0;
}

struct CoincideArgs {
    std::string a, b;
    unsigned channel_a = 2, channel_b = 1;
    std::string window = "10ns";
    std::string bins = "100ps";
    bool no_auto = false;
    std::vector<std::string> comp;
    std::uint32_t calibration_seconds = 5;
    std::uint64_t start = 0, end = 0;
    int codec = 2;
    std::string out;
    bool svg = false;
    bool no_live = false;
};

int cmd_coincide(const CoincideArgs& a) {
    ttnet::CoincideOptions o;
    o.endpoint_a = ttnet::parse_endpoint(a.a);
    o.endpoint_b = ttnet::parse_endpoint(a.b);
    o.channel_a = static_cast<ttnet::Channel>(a.channel_a);
    o.channel_b = static_cast<ttnet::Channel>(a.channel_b);
    o.half_window = ttnet::half_window_of(ttnet::parse_duration(a.window));
    o.bin_width_ps = ttnet::parse_duration(a.bins).count();
    o.auto_compensate = !a.no_auto;
    for (const auto& c : a.comp)
        o.compensation.push_back(ttnet::parse_compensation(c));
    o.calibration_seconds = a.calibration_seconds;
    o.start_abs_second = a.start;
    o.end_abs_second = a.end;
    o.codec = codec_from(a.codec);
    o.out_dir = a.out;
    o.svg = a.svg;
    o.live_csv = !a.no_live;
    ttnet::CoincidenceHistogram probe(o.bin_width_ps, o.half_window.count());  // validates binning up front
    auto r = ttnet::run_coincide(o);
    std::cout << ttnet::format_key_values(r.summary);
    if (r.exit_code != 0)
        std::cerr << "ttnet: " << r.message << '\n';
    if (r.counters.one_sided_seconds > 0)
        std::cerr << "ttnet: warning: partial overlap, " << r.counters.one_sided_seconds << " one-sided seconds skipped\n";
    return r.exit_code;
}

int cmd_report(const std::string& dir) {
    auto rep = ttnet::build_report(dir);
    std::cout << rep.text;
    return 0;
}

struct RunArgs {
    std::string out;
    std::string window = "10ns";
    std::string bins = "100ps";
    bool fast = false;
    bool svg = false;
    std::uint32_t calibration_seconds = 5;
    int codec = 2;
};

int cmd_run(const ScenarioArgs& sa, const RunArgs& a) {
    ttnet::RunOptions o;
    o.scenario = sa.load();
    o.scenario_path = sa.file;
    o.out_dir = a.out;
    o.pace = !a.fast;
    o.half_window = ttnet::half_window_of(ttnet::parse_duration(a.window));
    o.bin_width_ps = ttnet::parse_duration(a.bins).count();
    o.calibration_seconds = a.calibration_seconds;
    o.codec = codec_from(a.codec);
    o.svg = a.svg;
    o.log = print_lines;
    ttnet::CoincidenceHistogram probe(o.bin_width_ps, o.half_window.count());
    auto r = ttnet::run_experiment(o);
    std::cout << r.report.text;
    if (r.exit_code != 0)
        std::cerr << "ttnet: " << r.coincide.message << '\n';
    return r.exit_code;
}

int cmd_bits(const std::string& interval, const std::string& resolution, const std::string& csv) {
    auto iv = ttnet::parse_duration(interval);
    auto res = ttnet::parse_duration(resolution).count();
    std::cout << "required_bits: " << ttnet::required_bits(iv, res) << '\n';
    for (unsigned bits : {32u, 40u, 48u, 63u})
        std::cout << "overflow_horizon_" << bits << "_bits_days: "
                  << ttnet::format_fixed(static_cast<double>(ttnet::overflow_horizon(bits, res).count()), 6) << '\n';
    std::cout << "overflow_horizon_unsigned64_days: "
              << ttnet::format_fixed(static_cast<double>(ttnet::overflow_horizon_unsigned64(res).count()), 6) << '\n';
    if (!csv.empty()) {
        // required bits over a grid of intervals and resolutions
        std::string out = "interval_ps,resolution_ps,required_bits\n";
        for (std::int64_t i = 1'000; i <= 1'000'000'000'000'000; i *= 10)
            for (std::int64_t r = 1; r <= 1'000'000; r *= 10)
                out += std::to_string(i) + ',' + std::to_string(r) + ',' +
                       std::to_string(ttnet::required_bits(ttnet::Picoseconds{i}, r)) + '\n';
        ttnet::write_text(csv, out);
    }
    return 0;
}

int cmd_inspect(const std::string& path) {
    ttnet::Bytes head = ttnet::read_file(path);
    if (head.size() >= 4 && std::equal(ttnet::kTtrawMagic.begin(), ttnet::kTtrawMagic.end(), head.begin())) {
        auto ev = ttnet::decode_ttraw(head);
        std::uint64_t tags = 0, pps = 0, meta = 0;
        std::map<ttnet::Channel, std::uint64_t> per;
        for (const auto& e : ev) {
            if (e.kind == ttnet::EventKind::tag) {
                ++tags;
                ++per[e.channel];
            } else if (e.kind == ttnet::EventKind::pps) {
                ++pps;
            } else {
                ++meta;
            }
        }
        std::cout << "format: ttraw\nrecords: " << ev.size() << "\ntags: " << tags << "\npps: " << pps << "\nmetadata: " << meta
                  << '\n';
        for (auto [c, n] : per)
            std::cout << "channel_" << c << ": " << n << '\n';
        if (!ev.empty())
            std::cout << "t_local_first_ps: " << ev.front().t_local.count() << "\nt_local_last_ps: " << ev.back().t_local.count()
                      << '\n';
        return 0;
    }
    auto blocks = ttnet::parse_ttb(head);
    std::uint64_t tags = 0, uncal = 0;
    std::map<int, std::uint64_t> codecs;
    for (const auto& b : blocks) {
        tags += b.header.count;
        uncal += (b.header.flags & ttnet::kFlagUncalibrated) != 0;
        ++codecs[static_cast<int>(b.header.codec)];
    }
    std::cout << "format: ttb\nblocks: " << blocks.size() << "\ntags: " << tags << "\nuncalibrated_blocks: " << uncal
              << "\nbytes: " << head.size() << '\n';
    for (auto [c, n] : codecs)
        std::cout << "codec_" << c << "_blocks: " << n << '\n';
    if (tags)
        std::cout << "bytes_per_tag: " << ttnet::format_fixed(ttnet::bytes_per_tag(blocks), 4) << '\n';
    if (!blocks.empty())
        std::cout << "first_abs_second: " << blocks.front().header.abs_second
                  << "\nlast_abs_second: " << blocks.back().header.abs_second << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ttnet: distributed time-tag acquisition and coincidence analysis"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "ttnet 1.0.0");

    ScenarioArgs sim_sa;
    std::string sim_out;
    bool no_truth = false;
    auto* sim = app.add_subcommand("simulate", "Simulate both labs and write .ttraw streams plus a truth file");
    sim_sa.add(sim);
    sim->add_option("--out", sim_out, "Output directory")->required();
    sim->add_flag("--no-truth", no_truth, "Skip truth.csv");

    AgentArgs ag;
    ag.listen = env_or("TTNET_LISTEN", "127.0.0.1:7700");
    auto* agent = app.add_subcommand("agent", "Serve a recorded stream as a TT agent until interrupted");
    agent->add_option("--input", ag.input, ".ttraw stream")->required();
    agent->add_option("--listen", ag.listen, "host:port (env TTNET_LISTEN)");
    agent->add_option("--channels", ag.channels, "Channels to serve")->delimiter(',');
    agent->add_option("--codec", ag.codec, "Block codec 0, 1 or 2");
    agent->add_option("--retain", ag.retain, "Seconds of history kept for clients (0 = all)");
    agent->add_flag("--as-fast-as-possible", ag.fast, "Do not pace input to wall-clock time");
    agent->add_option("--ttb-out", ag.ttb_out, "Also write every block to this .ttb file");
    agent->add_flag("--quiet", ag.quiet, "No per-second counters");

    CoincideArgs co;
    co.a = env_or("TTNET_ENDPOINT_A", "127.0.0.1:7700");
    co.b = env_or("TTNET_ENDPOINT_B", "127.0.0.1:7701");
    auto* coin = app.add_subcommand("coincide", "Fetch from two agents and run the coincidence analysis");
    coin->add_option("--a", co.a, "Agent A host:port (env TTNET_ENDPOINT_A)");
    coin->add_option("--b", co.b, "Agent B host:port (env TTNET_ENDPOINT_B)");
    coin->add_option("--channel-a", co.channel_a, "Alice channel");
    coin->add_option("--channel-b", co.channel_b, "Bob channel");
    coin->add_option("--window", co.window, "FULL coincidence window, e.g. 10ns (half window = window/2)");
    coin->add_option("--bins", co.bins, "Histogram bin width, e.g. 100ps");
    coin->add_flag("--no-auto-compensate", co.no_auto, "Use --comp instead of searching for the delay peak");
    coin->add_option("--comp", co.comp, "Delay compensation CHANNEL:DELAY (repeatable)");
    coin->add_option("--calibration-seconds", co.calibration_seconds, "Seconds buffered for the delay search");
    coin->add_option("--start", co.start, "First abs_second (0 = from the beginning)");
    coin->add_option("--end", co.end, "Last abs_second (0 = until the agents finish)");
    coin->add_option("--codec", co.codec, "Requested block codec");
    coin->add_option("--out", co.out, "Output directory")->required();
    coin->add_flag("--svg", co.svg, "Also write SVG plots");
    coin->add_flag("--no-live", co.no_live, "Skip per-second histogram files");

    std::string report_dir;
    auto* rep = app.add_subcommand("report", "Summarize a run directory");
    rep->add_option("dir", report_dir, "Run directory")->required();

    ScenarioArgs run_sa;
    RunArgs ra;
    auto* run = app.add_subcommand("run", "Simulate, serve both labs and analyze in one process");
    run_sa.add(run);
    run->add_option("--out", ra.out, "Output directory")->required();
    run->add_option("--window", ra.window, "FULL coincidence window");
    run->add_option("--bins", ra.bins, "Histogram bin width");
    run->add_option("--calibration-seconds", ra.calibration_seconds, "Seconds buffered for the delay search");
    run->add_option("--codec", ra.codec, "Block codec");
    run->add_flag("--as-fast-as-possible", ra.fast, "Do not pace agents to wall-clock time");
    run->add_flag("--svg", ra.svg, "Also write SVG plots");

    std::string interval = "1s", resolution = "1ps", bits_csv;
    auto* bits = app.add_subcommand("bits", "Counter width and overflow horizon arithmetic");
    bits->add_option("--interval", interval, "Interval to represent");
    bits->add_option("--resolution", resolution, "Tag resolution");
    bits->add_option("--csv", bits_csv, "Write a required-bits grid to this CSV");

    std::string inspect_path;
    auto* insp = app.add_subcommand("inspect", "Describe a .ttraw or .ttb file");
    insp->add_option("file", inspect_path, "File")->required()->check(CLI::ExistingFile);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (*sim)
            return cmd_simulate(sim_sa, sim_out, no_truth);
        if (*agent)
            return cmd_agent(ag);
        if (*coin)
            return cmd_coincide(co);
        if (*rep)
            return cmd_report(report_dir);
        if (*run)
            return cmd_run(run_sa, ra);
        if (*bits)
            return cmd_bits(interval, resolution, bits_csv);
        if (*insp)
            return cmd_inspect(inspect_path);
    } catch (const ttnet::Error& e) {
        std::cerr << "ttnet: " << e.what() << '\n';
        return ttnet::exit_code_for(e.code());
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "ttnet: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "ttnet: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
