//
// random.hpp
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

#include <cstdint>
#include <random>
#include <string_view>

namespace ttnet {

/// Seedable generator that can derive independent, named sub-streams.
/// A child's sequence depends only on the parent seed and the child's name,
/// never on how much the parent or any sibling has been consumed.
class SplitRng {
public:
    using result_type = std::uint64_t;

    explicit SplitRng(std::uint64_t seed) : seed_(seed), engine_(mix(seed)) {}

    SplitRng split(std::string_view name) const { return SplitRng(mix(seed_ ^ fnv1a(name))); }
    SplitRng split(std::uint64_t index) const { return SplitRng(mix(seed_ + 0x9e3779b97f4a7c15ULL * (index + 1))); }

    std::uint64_t seed() const { return seed_; }

    static constexpr result_type min() { return std::mt19937_64::min(); }
    static constexpr result_type max() { return std::mt19937_64::max(); }
    result_type operator()() { return engine_(); }

    static constexpr std::uint64_t mix(std::uint64_t z) {
        // splitmix64 finalizer
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    static constexpr std::uint64_t fnv1a(std::string_view s) {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (char c : s) {
            h ^= static_cast<unsigned char>(c);
            h *= 0x100000001b3ULL;
        }
        return h;
    }

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
};

}  // namespace ttnet
