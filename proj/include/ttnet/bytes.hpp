//
// bytes.hpp
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

// Little-endian field access and LEB128 varints. All on-disk and on-wire
// integers in this project go through these helpers.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace ttnet {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

/// Appends the low `width` bytes of v, least significant first.
inline void put_le(Bytes& out, std::uint64_t v, std::size_t width) {
    for (std::size_t i = 0; i < width; ++i)
        out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline std::uint64_t get_le(ByteView in, std::size_t width) {
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < width; ++i)
        v |= std::uint64_t{in[i]} << (8 * i);
    return v;
}

inline void put_varint(Bytes& out, std::uint64_t v) {
    while (v >= 0x80) {
        out.push_back(static_cast<std::uint8_t>(v | 0x80));
        v >>= 7;
    }
    out.push_back(static_cast<std::uint8_t>(v));
}

/// Decodes one varint at `pos`, advancing it. nullopt on truncation or
/// on encodings longer than 64 bits.
inline std::optional<std::uint64_t> get_varint(ByteView in, std::size_t& pos) {
    std::uint64_t v = 0;
    for (unsigned shift = 0; shift < 64; shift += 7) {
        if (pos >= in.size())
            return std::nullopt;
        std::uint8_t b = in[pos++];
        std::uint64_t bits = b & 0x7f;
        if (shift == 63 && bits > 1)
            return std::nullopt;
        v |= bits << shift;
        if (!(b & 0x80))
            return v;
    }
    return std::nullopt;
}

/// Sequential reader over a byte view; every accessor bounds-checks.
class ByteReader {
public:
    explicit ByteReader(ByteView data) : data_(data) {}

    bool has(std::size_t n) const { return data_.size() - pos_ >= n; }
    std::size_t remaining() const { return data_.size() - pos_; }
    std::size_t position() const { return pos_; }

    std::optional<std::uint64_t> le(std::size_t width) {
        if (!has(width))
            return std::nullopt;
        auto v = get_le(data_.subspan(pos_, width), width);
        pos_ += width;
        return v;
    }

    std::optional<std::uint64_t> varint() { return get_varint(data_, pos_); }

    std::optional<ByteView> take(std::size_t n) {
        if (!has(n))
            return std::nullopt;
        auto v = data_.subspan(pos_, n);
        pos_ += n;
        return v;
    }

private:
    ByteView data_;
    std::size_t pos_ = 0;
};

}  // namespace ttnet
