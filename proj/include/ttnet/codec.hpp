//
// codec.hpp
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

// Self-describing TagBlock container (.ttb element).
//
//   offset size field
//     0     4  magic "TTB1"
//     4     8  abs_second
//    12     2  channel
//    14     2  flags (bit 0 = uncalibrated; other bits must be zero)
//    16     8  cf_measured_ps
//    24     8  count
//    32     1  codec_id
//    33     8  payload_len
//    41        payload
//
// Payloads:
//   codec 0  count x 5-byte little-endian t_rel (40 bits)
//   codec 1  varint(t_0), varint(t_i - t_{i-1}) ...   (LEB128)
//   codec 2  stage id (1 byte, 1 = zlib deflate level 6), varint(codec-1 length),
//            deflate stream of the codec-1 payload
// Empty blocks carry an empty payload under every codec.

#include "ttnet/bytes.hpp"
#include "ttnet/error.hpp"
#include "ttnet/ttagent.hpp"

#include <zlib.h>

#include <array>
#include <fstream>
#include <span>
#include <string>
#include <vector>

namespace ttnet {

enum class CodecId : std::uint8_t { raw40 = 0, delta_varint = 1, delta_varint_deflate = 2 };

inline constexpr CodecId kDefaultCodec = CodecId::delta_varint_deflate;
inline constexpr std::array<std::uint8_t, 4> kBlockMagic{'T', 'T', 'B', '1'};
inline constexpr std::size_t kBlockHeaderSize = 41;
inline constexpr std::uint8_t kDeflateStage = 1;
inline constexpr int kDeflateLevel = 6;
inline constexpr std::uint16_t kFlagUncalibrated = 0x1;

/// Uncompressed per-tag cost of the vendor stream the pipeline replaces.
inline constexpr double kVendorBytesPerTag = 14.32;

inline bool is_known_codec(std::uint8_t id) { return id <= 2; }

inline std::vector<CodecId> supported_codecs() {
    return {CodecId::raw40, CodecId::delta_varint, CodecId::delta_varint_deflate};
}

struct BlockHeader {
    std::uint64_t abs_second = 0;
    Channel channel = 0;
    std::uint16_t flags = 0;
    std::uint64_t cf_measured_ps = 0;
    std::uint64_t count = 0;
    CodecId codec = CodecId::raw40;
    std::uint64_t payload_len = 0;

    friend bool operator==(const BlockHeader&, const BlockHeader&) = default;
};

struct EncodedBlock {
    BlockHeader header;
    Bytes payload;

    std::size_t size() const { return kBlockHeaderSize + payload.size(); }

    /// Wire/file bytes: header followed by payload.
    Bytes bytes() const {
        Bytes out;
        out.reserve(size());
        append_to(out);
        return out;
    }

    void append_to(Bytes& out) const {
        out.insert(out.end(), kBlockMagic.begin(), kBlockMagic.end());
        put_le(out, header.abs_second, 8);
        put_le(out, header.channel, 2);
        put_le(out, header.flags, 2);
        put_le(out, header.cf_measured_ps, 8);
        put_le(out, header.count, 8);
        put_le(out, static_cast<std::uint8_t>(header.codec), 1);
        put_le(out, header.payload_len, 8);
        out.insert(out.end(), payload.begin(), payload.end());
    }

    friend bool operator==(const EncodedBlock&, const EncodedBlock&) = default;
};

namespace detail {

inline Bytes delta_varint(const TagBlock& block) {
    Bytes out;
    out.reserve(block.count() * 3 + 8);
    std::uint64_t prev = 0;
    for (Picoseconds t : block.tags) {
        auto v = static_cast<std::uint64_t>(t.count());
        put_varint(out, v - prev);
        prev = v;
    }
    return out;
}

inline Bytes deflate(ByteView in) {
    uLongf cap = compressBound(static_cast<uLong>(in.size()));
    Bytes out(cap);
    int rc = compress2(out.data(), &cap, in.data(), static_cast<uLong>(in.size()), kDeflateLevel);
    if (rc != Z_OK)
        fail(Errc::invalid_argument, "deflate failed (" + std::to_string(rc) + ")");
    out.resize(cap);
    return out;
}

inline Bytes inflate(ByteView in, std::uint64_t expected) {
    if (expected > (std::uint64_t{1} << 34))
        fail(Errc::corrupt_payload, "implausible inflated size");
    Bytes out(static_cast<std::size_t>(expected));
    uLongf len = static_cast<uLongf>(expected);
    int rc = uncompress(out.data(), &len, in.data(), static_cast<uLong>(in.size()));
    if (rc != Z_OK || len != expected)
        fail(Errc::corrupt_payload, "deflate stream invalid or wrong length");
    return out;
}

inline std::vector<Picoseconds> undelta_varint(ByteView payload, std::uint64_t count) {
    std::vector<Picoseconds> tags;
    if (count > payload.size())
        fail(Errc::corrupt_payload, "count exceeds payload capacity");
    tags.reserve(static_cast<std::size_t>(count));
    std::size_t pos = 0;
    std::uint64_t acc = 0;
    for (std::uint64_t i = 0; i < count; ++i) {
        auto d = get_varint(payload, pos);
        if (!d)
            fail(Errc::corrupt_payload, "truncated varint at tag " + std::to_string(i));
        if (*d >= (std::uint64_t{1} << 48) || acc + *d >= (std::uint64_t{1} << 48))
            fail(Errc::corrupt_payload, "decoded tag exceeds 48 bits");
        acc += *d;
        tags.emplace_back(static_cast<std::int64_t>(acc));
    }
    if (pos != payload.size())
        fail(Errc::corrupt_payload, "trailing bytes after last tag");
    return tags;
}

}  // namespace detail

inline EncodedBlock encode(const TagBlock& block, CodecId codec = kDefaultCodec) {
    if (!is_known_codec(static_cast<std::uint8_t>(codec)))
        fail(Errc::unknown_codec, "codec " + std::to_string(static_cast<int>(codec)));
    if (block.cf.measured.count() <= 0)
        fail(Errc::invalid_argument, "block has non-positive cf.measured");
    const unsigned limit_bits = codec == CodecId::raw40 ? 40 : 48;
    Picoseconds prev{0};
    for (Picoseconds t : block.tags) {
        if (t.count() < 0 || static_cast<std::uint64_t>(t.count()) >= (std::uint64_t{1} << limit_bits))
            fail(Errc::tag_out_of_range, format_ps(t) + " does not fit " + std::to_string(limit_bits) + " bits");
        if (t < prev)
            fail(Errc::invalid_argument, "block tags are not ascending");
        prev = t;
    }

    EncodedBlock enc;
    enc.header.abs_second = block.abs_second;
    enc.header.channel = block.channel;
    enc.header.flags = block.uncalibrated ? kFlagUncalibrated : 0;
    enc.header.cf_measured_ps = static_cast<std::uint64_t>(block.cf.measured.count());
    enc.header.count = block.count();
    enc.header.codec = codec;
    if (!block.tags.empty()) {
        switch (codec) {
            case CodecId::raw40:
                enc.payload.reserve(block.count() * 5);
                for (Picoseconds t : block.tags)
                    put_le(enc.payload, static_cast<std::uint64_t>(t.count()), 5);
                break;
            case CodecId::delta_varint:
                enc.payload = detail::delta_varint(block);
                break;
            case CodecId::delta_varint_deflate: {
                Bytes stage1 = detail::delta_varint(block);
                enc.payload.push_back(kDeflateStage);
                put_varint(enc.payload, stage1.size());
                Bytes z = detail::deflate(stage1);
                enc.payload.insert(enc.payload.end(), z.begin(), z.end());
                break;
            }
        }
    }
    enc.header.payload_len = enc.payload.size();
    return enc;
}

inline TagBlock decode(const EncodedBlock& enc) {
    const BlockHeader& h = enc.header;
    if (!is_known_codec(static_cast<std::uint8_t>(h.codec)))
        fail(Errc::unknown_codec, "codec " + std::to_string(static_cast<int>(h.codec)));
    if (h.flags & ~kFlagUncalibrated)
        fail(Errc::corrupt_header, "unknown flag bits");
    if (h.cf_measured_ps == 0 || h.cf_measured_ps > static_cast<std::uint64_t>(INT64_MAX))
        fail(Errc::corrupt_header, "cf_measured_ps out of range");
    if (h.payload_len != enc.payload.size())
        fail(Errc::corrupt_payload, "payload_len does not match payload");

    TagBlock b;
    b.abs_second = h.abs_second;
    b.channel = h.channel;
    b.cf = CalibrationFactor{kNominalSecond, Picoseconds{static_cast<std::int64_t>(h.cf_measured_ps)}};
    b.uncalibrated = (h.flags & kFlagUncalibrated) != 0;
    if (h.count == 0) {
        if (!enc.payload.empty())
            fail(Errc::corrupt_payload, "empty block with non-empty payload");
        return b;
    }
    ByteView payload = enc.payload;
    switch (h.codec) {
        case CodecId::raw40: {
            if (h.count > payload.size() / 5 || h.count * 5 != payload.size())
                fail(Errc::corrupt_payload, "raw40 payload length is not count * 5");
            b.tags.reserve(static_cast<std::size_t>(h.count));
            Picoseconds prev{0};
            for (std::size_t i = 0; i < h.count; ++i) {
                Picoseconds t{static_cast<std::int64_t>(get_le(payload.subspan(i * 5, 5), 5))};
                if (t < prev)
                    fail(Errc::corrupt_payload, "raw40 tags not ascending");
                prev = t;
                b.tags.push_back(t);
            }
            break;
        }
        case CodecId::delta_varint:
            b.tags = detail::undelta_varint(payload, h.count);
            break;
        case CodecId::delta_varint_deflate: {
            std::size_t pos = 0;
            if (payload.empty() || payload[pos++] != kDeflateStage)
                fail(Errc::unknown_codec, "unsupported compression stage");
            auto raw_len = get_varint(payload, pos);
            if (!raw_len)
                fail(Errc::corrupt_payload, "truncated stage length");
            Bytes stage1 = detail::inflate(payload.subspan(pos), *raw_len);
            b.tags = detail::undelta_varint(stage1, h.count);
            break;
        }
    }
    return b;
}

/// Parses one EncodedBlock from the front of `data`. `consumed` receives the
/// number of bytes used.
inline EncodedBlock parse_block(ByteView data, std::size_t* consumed = nullptr) {
    ByteReader r(data);
    auto magic = r.take(4);
    if (!magic || !std::equal(kBlockMagic.begin(), kBlockMagic.end(), magic->begin()))
        fail(Errc::corrupt_header, "bad block magic");
    if (!r.has(kBlockHeaderSize - 4))
        fail(Errc::corrupt_header, "truncated block header");
    EncodedBlock e;
    e.header.abs_second = *r.le(8);
    e.header.channel = static_cast<Channel>(*r.le(2));
    e.header.flags = static_cast<std::uint16_t>(*r.le(2));
    e.header.cf_measured_ps = *r.le(8);
    e.header.count = *r.le(8);
    auto codec = static_cast<std::uint8_t>(*r.le(1));
    if (!is_known_codec(codec))
        fail(Errc::unknown_codec, "codec " + std::to_string(codec));
    e.header.codec = static_cast<CodecId>(codec);
    e.header.payload_len = *r.le(8);
    if (e.header.payload_len > r.remaining())
        fail(Errc::corrupt_payload, "payload truncated: need " + std::to_string(e.header.payload_len) + " bytes, have " +
                                        std::to_string(r.remaining()));
    auto body = r.take(static_cast<std::size_t>(e.header.payload_len));
    e.payload.assign(body->begin(), body->end());
    if (consumed)
        *consumed = r.position();
    return e;
}

/// Parses a buffer that must hold exactly one block.
inline EncodedBlock parse_block_exact(ByteView data) {
    std::size_t used = 0;
    EncodedBlock e = parse_block(data, &used);
    if (used != data.size())
        fail(Errc::corrupt_payload, "trailing bytes after block");
    return e;
}

/// Total encoded bytes (headers + payloads) per tag.
inline double bytes_per_tag(std::span<const EncodedBlock> blocks) {
    std::uint64_t bytes = 0, tags = 0;
    for (const auto& b : blocks) {
        bytes += b.size();
        tags += b.header.count;
    }
    if (tags == 0)
        fail(Errc::undefined_for_empty, "bytes_per_tag over zero tags");
    return static_cast<double>(bytes) / static_cast<double>(tags);
}

/// Storage reduction in percent going from `baseline` to `compressed` bytes per tag.
inline double reduction_percent(double baseline, double compressed) {
    if (!(baseline > 0.0))
        fail(Errc::invalid_argument, "baseline must be positive");
    return 100.0 * (baseline - compressed) / baseline;
}

// .ttb files: EncodedBlocks back to back.

inline void write_ttb(const std::string& path, std::span<const EncodedBlock> blocks) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f)
        fail(Errc::io_error, "cannot create " + path);
    Bytes buf;
    for (const auto& b : blocks) {
        buf.clear();
        b.append_to(buf);
        f.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    }
    if (!f)
        fail(Errc::io_error, "write failed: " + path);
}

inline std::vector<EncodedBlock> parse_ttb(ByteView data) {
    std::vector<EncodedBlock> out;
    std::size_t pos = 0;
    while (pos < data.size()) {
        std::size_t used = 0;
        out.push_back(parse_block(data.subspan(pos), &used));
        pos += used;
    }
    return out;
}

inline Bytes read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f)
        fail(Errc::io_error, "cannot open " + path);
    return Bytes(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

inline std::vector<EncodedBlock> read_ttb(const std::string& path) { return parse_ttb(read_file(path)); }

}  // namespace ttnet
