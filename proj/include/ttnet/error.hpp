//
// error.hpp
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

#include <stdexcept>
#include <string>
#include <string_view>

namespace ttnet {

/// Machine-readable failure classes. Every throw site in the library uses one.
enum class Errc {
    invalid_argument,
    invalid_config,
    io_error,
    // ttagent
    negative_offset,
    missed_pps,
    non_monotone_pps,
    // codec
    tag_out_of_range,
    corrupt_header,
    corrupt_payload,
    unknown_codec,
    undefined_for_empty,
    // measureplane
    connection_error,
    protocol_error,
    version_mismatch,
    unknown_channel,
    malformed_request,
    overrun,
    ordering_violation,
    remote_error,
    // coincidence
    invalid_binning,
    shape_mismatch,
    no_signal,
    no_overlap,
};

constexpr std::string_view to_string(Errc e) noexcept {
    switch (e) {
        case Errc::invalid_argument:    return "invalid-argument";
        case Errc::invalid_config:      return "invalid-config";
        case Errc::io_error:            return "io-error";
        case Errc::negative_offset:     return "negative-offset";
        case Errc::missed_pps:          return "missed-pps";
        case Errc::non_monotone_pps:    return "non-monotone-pps";
        case Errc::tag_out_of_range:    return "tag-out-of-range";
        case Errc::corrupt_header:      return "corrupt-header";
        case Errc::corrupt_payload:     return "corrupt-payload";
        case Errc::unknown_codec:       return "unknown-codec";
        case Errc::undefined_for_empty: return "undefined-for-empty";
        case Errc::connection_error:    return "connection-error";
        case Errc::protocol_error:      return "protocol-error";
        case Errc::version_mismatch:    return "version-mismatch";
        case Errc::unknown_channel:     return "unknown-channel";
        case Errc::malformed_request:   return "malformed-request";
        case Errc::overrun:             return "overrun";
        case Errc::ordering_violation:  return "ordering-violation";
        case Errc::remote_error:        return "remote-error";
        case Errc::invalid_binning:     return "invalid-binning";
        case Errc::shape_mismatch:      return "shape-mismatch";
        case Errc::no_signal:           return "no-signal";
        case Errc::no_overlap:          return "no-overlap";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

}  // namespace ttnet
