//
// ttraw.hpp
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

// .ttraw: raw tagger stream as recorded by a device.
//
//   file header (16 bytes)
//     0   4  magic "TTRW"
//     4   1  version = 1
//     5   3  reserved, zero
//     8   8  t_base: full signed t_local of the first record (0 if empty)
//   record (8 bytes)
//     0   1  kind: 0 = tag, 1 = pps, 2 = metadata
//     1   2  channel
//     3   5  low 40 bits of t_local (two's complement)
//   pps records are followed by an 8-byte abs_second.
//
// All integers little-endian. The reader rebuilds full timestamps by
// unwrapping the 40-bit field, so consecutive records must be non-decreasing
// and less than 2^40 ps (about 1.0995 s) apart; PPS every second guarantees it.

#include "ttnet/bytes.hpp"
#include "ttnet/clocksim.hpp"
#include "ttnet/error.hpp"

#include <array>
#include <fstream>
#include <span>
#include <string>
#include <vector>

namespace ttnet {

inline constexpr std::array<std::uint8_t, 4> kTtrawMagic{'T', 'T', 'R', 'W'};
inline constexpr std::size_t kTtrawHeaderSize = 16;
inline constexpr std::uint64_t kTtrawMask = (std::uint64_t{1} << 40) - 1;

class TtrawEncoder {
public:
    /// Appends the record for `ev`; the first call also emits the file header.
    void encode(const DeviceEvent& ev, Bytes& out) {
        if (!started_) {
            out.insert(out.end(), kTtrawMagic.begin(), kTtrawMagic.end());
            put_le(out, 1, 1);
            put_le(out, 0, 3);
            put_le(out, static_cast<std::uint64_t>(ev.t_local.count()), 8);
            started_ = true;
        } else {
            auto gap = ev.t_local - prev_;
            if (gap.count() < 0 || static_cast<std::uint64_t>(gap.count()) > kTtrawMask)
                fail(Errc::invalid_argument, "ttraw records must be ordered and < 2^40 ps apart");
        }
        prev_ = ev.t_local;
        put_le(out, static_cast<std::uint8_t>(ev.kind), 1);
        put_le(out, ev.channel, 2);
        put_le(out, static_cast<std::uint64_t>(ev.t_local.count()) & kTtrawMask, 5);
        if (ev.kind == EventKind::pps)
            put_le(out, ev.abs_second, 8);
    }

    /// Header for a stream with no records.
    static Bytes empty_file() {
        Bytes out(kTtrawMagic.begin(), kTtrawMagic.end());
        put_le(out, 1, 1);
        put_le(out, 0, 3);
        put_le(out, 0, 8);
        return out;
    }

    bool started() const { return started_; }

private:
    bool started_ = false;
    Picoseconds prev_{0};
};

class TtrawDecoder {
public:
    /// Parses the 16-byte header.
    void header(ByteView h) {
        if (h.size() < kTtrawHeaderSize || !std::equal(kTtrawMagic.begin(), kTtrawMagic.end(), h.begin()))
            fail(Errc::io_error, "not a .ttraw stream (bad magic)");
        if (h[4] != 1)
            fail(Errc::io_error, "unsupported .ttraw version " + std::to_string(h[4]));
        prev_ = Picoseconds{static_cast<std::int64_t>(get_le(h.subspan(8, 8), 8))};
        first_ = true;
    }

    /// Size of the record starting with the given kind byte.
    static std::size_t record_size(std::uint8_t kind) { return kind == 1 ? 16 : 8; }

    DeviceEvent record(ByteView r) {
        if (r[0] > 2)
            fail(Errc::io_error, "unknown .ttraw record kind " + std::to_string(r[0]));
        DeviceEvent ev;
        ev.kind = static_cast<EventKind>(r[0]);
        ev.channel = static_cast<Channel>(get_le(r.subspan(1, 2), 2));
        std::uint64_t low = get_le(r.subspan(3, 5), 5);
        if (first_) {
            if ((static_cast<std::uint64_t>(prev_.count()) & kTtrawMask) != low)
                fail(Errc::io_error, ".ttraw first record does not match t_base");
            first_ = false;
        } else {
            std::uint64_t delta = (low - (static_cast<std::uint64_t>(prev_.count()) & kTtrawMask)) & kTtrawMask;
            prev_ += Picoseconds{static_cast<std::int64_t>(delta)};
        }
        ev.t_local = prev_;
        if (ev.kind == EventKind::pps)
            ev.abs_second = get_le(r.subspan(8, 8), 8);
        return ev;
    }

private:
    Picoseconds prev_{0};
    bool first_ = true;
};

inline Bytes encode_ttraw(std::span<const DeviceEvent> events) {
    if (events.empty())
        return TtrawEncoder::empty_file();
    Bytes out;
    out.reserve(kTtrawHeaderSize + events.size() * 8);
    TtrawEncoder enc;
    for (const auto& ev : events)
        enc.encode(ev, out);
    return out;
}

inline std::vector<DeviceEvent> decode_ttraw(ByteView data) {
    TtrawDecoder dec;
    dec.header(data);
    std::vector<DeviceEvent> out;
    std::size_t pos = kTtrawHeaderSize;
    while (pos < data.size()) {
        std::size_t n = TtrawDecoder::record_size(data[pos]);
        if (data.size() - pos < n)
            fail(Errc::io_error, "truncated .ttraw record");
        out.push_back(dec.record(data.subspan(pos, n)));
        pos += n;
    }
    return out;
}

class TtrawWriter {
public:
    explicit TtrawWriter(const std::string& path) : out_(path, std::ios::binary | std::ios::trunc) {
        if (!out_)
            fail(Errc::io_error, "cannot create " + path);
    }

    ~TtrawWriter() {
        try {
            close();
        } catch (...) {
        }
    }

    void write(std::span<const DeviceEvent> events) {
        buf_.clear();
        for (const auto& ev : events)
            enc_.encode(ev, buf_);
        out_.write(reinterpret_cast<const char*>(buf_.data()), static_cast<std::streamsize>(buf_.size()));
        if (!out_)
            fail(Errc::io_error, "write failed");
    }

    void close() {
        if (!out_.is_open())
            return;
        if (!enc_.started()) {
            auto h = TtrawEncoder::empty_file();
            out_.write(reinterpret_cast<const char*>(h.data()), static_cast<std::streamsize>(h.size()));
        }
        out_.close();
    }

private:
    std::ofstream out_;
    TtrawEncoder enc_;
    Bytes buf_;
};

/// Streams a .ttraw file record by record.
class TtrawReader {
public:
    explicit TtrawReader(const std::string& path) : in_(path, std::ios::binary) {
        if (!in_)
            fail(Errc::io_error, "cannot open " + path);
        std::array<std::uint8_t, kTtrawHeaderSize> h{};
        if (!in_.read(reinterpret_cast<char*>(h.data()), h.size()))
            fail(Errc::io_error, path + " is too short for a .ttraw header");
        dec_.header(h);
    }

    /// Reads up to `max` events into `out` (appending). Returns false at end of file.
    bool read(std::vector<DeviceEvent>& out, std::size_t max = 65536) {
        std::array<std::uint8_t, 16> r{};
        std::size_t n = 0;
        while (n < max) {
            if (!in_.read(reinterpret_cast<char*>(r.data()), 1))
                return n > 0;
            std::size_t size = TtrawDecoder::record_size(r[0]);
            if (!in_.read(reinterpret_cast<char*>(r.data()) + 1, static_cast<std::streamsize>(size - 1)))
                fail(Errc::io_error, "truncated .ttraw record");
            out.push_back(dec_.record(std::span<const std::uint8_t>(r.data(), size)));
            ++n;
        }
        return true;
    }

private:
    std::ifstream in_;
    TtrawDecoder dec_;
};

}  // namespace ttnet
