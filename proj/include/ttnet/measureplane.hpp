//
// measureplane.hpp
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

// Measurement-plane protocol: an agent advertises what it can measure,
// accepts a request for a time scope and set of channels, then streams one
// DATA message per TagBlock in (abs_second, channel) order.
//
// Frame (all integers little-endian):
//   0  4  magic "TTMP"
//   4  1  version = 1
//   5  1  type
//   6  4  body_len
//  10     body
//
// Bodies:
//   ADVERTISE  resolution_ps u32, n u16, channel u16 * n, m u8, codec u8 * m
//   REQUEST    start u64, end u64 (0 = live), n u16, channel u16 * n, codec u8
//   ACCEPT     same layout as REQUEST (echo of the accepted request)
//   DATA       one EncodedBlock
//   END        data_messages u64
//   ERROR      code u16, utf-8 text
//   RATE       abs_second u64, n u16, (channel u16, count u64) * n

#include "ttnet/bytes.hpp"
#include "ttnet/codec.hpp"
#include "ttnet/error.hpp"
#include "ttnet/transport.hpp"
#include "ttnet/ttagent.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <functional>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace ttnet {

inline constexpr std::array<std::uint8_t, 4> kFrameMagic{'T', 'T', 'M', 'P'};
inline constexpr std::uint8_t kProtocolVersion = 1;
inline constexpr std::size_t kFrameHeaderSize = 10;
inline constexpr std::uint32_t kMaxBodyLen = 1u << 30;

enum class MessageType : std::uint8_t {
    advertise = 1,
    request = 2,
    accept = 3,
    data = 4,
    end = 5,
    error = 6,
    rate = 7,
};

inline bool is_known_type(std::uint8_t t) { return t >= 1 && t <= 7; }

enum class WireError : std::uint16_t {
    unknown_channel = 1,
    malformed_request = 2,
    overrun = 3,
    version_mismatch = 4,
    unsupported_codec = 5,
    protocol_error = 6,
    internal = 7,
};

inline std::string to_string(WireError e) {
    switch (e) {
        case WireError::unknown_channel:   return "unknown-channel";
        case WireError::malformed_request: return "malformed-request";
        case WireError::overrun:           return "overrun";
        case WireError::version_mismatch:  return "version-mismatch";
        case WireError::unsupported_codec: return "unsupported-codec";
        case WireError::protocol_error:    return "protocol-error";
        case WireError::internal:          return "internal";
    }
    return "code-" + std::to_string(static_cast<int>(e));
}

struct Message {
    MessageType type = MessageType::end;
    Bytes body;

    friend bool operator==(const Message&, const Message&) = default;
};

inline void serialize_message(const Message& m, Bytes& out) {
    if (m.body.size() > kMaxBodyLen)
        fail(Errc::protocol_error, "message body too large");
    out.insert(out.end(), kFrameMagic.begin(), kFrameMagic.end());
    put_le(out, kProtocolVersion, 1);
    put_le(out, static_cast<std::uint8_t>(m.type), 1);
    put_le(out, m.body.size(), 4);
    out.insert(out.end(), m.body.begin(), m.body.end());
}

inline Bytes serialize_message(const Message& m) {
    Bytes out;
    out.reserve(kFrameHeaderSize + m.body.size());
    serialize_message(m, out);
    return out;
}

/// Validates a frame header and returns the body length.
inline std::uint32_t check_frame_header(ByteView h, MessageType& type) {
    if (!std::equal(kFrameMagic.begin(), kFrameMagic.end(), h.begin()))
        fail(Errc::protocol_error, "bad frame magic");
    if (h[4] != kProtocolVersion)
        fail(Errc::version_mismatch, "peer speaks protocol version " + std::to_string(h[4]));
    if (!is_known_type(h[5]))
        fail(Errc::protocol_error, "unknown message type " + std::to_string(h[5]));
    type = static_cast<MessageType>(h[5]);
    auto len = static_cast<std::uint32_t>(get_le(h.subspan(6, 4), 4));
    if (len > kMaxBodyLen)
        fail(Errc::protocol_error, "body_len " + std::to_string(len) + " exceeds limit");
    return len;
}

/// Parses one frame from the front of `data`. Returns nullopt when more
/// bytes are needed; throws on a malformed frame.
inline std::optional<Message> parse_message(ByteView data, std::size_t* consumed = nullptr) {
    if (data.size() < kFrameHeaderSize)
        return std::nullopt;
    Message m;
    std::uint32_t len = check_frame_header(data.first(kFrameHeaderSize), m.type);
    if (data.size() - kFrameHeaderSize < len)
        return std::nullopt;
    auto body = data.subspan(kFrameHeaderSize, len);
    m.body.assign(body.begin(), body.end());
    if (consumed)
        *consumed = kFrameHeaderSize + len;
    return m;
}

/// Blocking read of one frame. nullopt on clean end of stream.
inline std::optional<Message> read_message(ByteStream& s) {
    std::array<std::uint8_t, kFrameHeaderSize> h{};
    if (!s.read_exact(h))
        return std::nullopt;
    Message m;
    std::uint32_t len = check_frame_header(h, m.type);
    m.body.resize(len);
    if (len && !s.read_exact(m.body))
        fail(Errc::connection_error, "stream ended before message body");
    return m;
}

inline void write_message(ByteStream& s, const Message& m) { s.write_all(serialize_message(m)); }

// ---------------------------------------------------------------------------
// Bodies

struct Advertise {
    std::uint32_t resolution_ps = static_cast<std::uint32_t>(kResolutionPs);
    std::vector<Channel> channels;
    std::vector<CodecId> codecs;

    friend bool operator==(const Advertise&, const Advertise&) = default;
};

struct MeasurementRequest {
    std::uint64_t start_abs_second = 0;
    std::uint64_t end_abs_second = 0;  // 0 = live / open-ended
    std::vector<Channel> channels;
    CodecId codec = kDefaultCodec;

    bool live() const { return end_abs_second == 0; }

    void validate() const {
        if (channels.empty())
            fail(Errc::malformed_request, "request names no channels");
        if (end_abs_second != 0 && end_abs_second < start_abs_second)
            fail(Errc::malformed_request, "request end precedes start");
    }

    friend bool operator==(const MeasurementRequest&, const MeasurementRequest&) = default;
};

struct RateReport {
    std::uint64_t abs_second = 0;
    std::vector<std::pair<Channel, std::uint64_t>> counts;

    friend bool operator==(const RateReport&, const RateReport&) = default;
};

inline Bytes encode_body(const Advertise& a) {
    Bytes b;
    put_le(b, a.resolution_ps, 4);
    put_le(b, a.channels.size(), 2);
    for (Channel c : a.channels)
        put_le(b, c, 2);
    put_le(b, a.codecs.size(), 1);
    for (CodecId c : a.codecs)
        put_le(b, static_cast<std::uint8_t>(c), 1);
    return b;
}

inline Advertise decode_advertise(ByteView body) {
    ByteReader r(body);
    Advertise a;
    auto res = r.le(4);
    auto n = r.le(2);
    if (!res || !n)
        fail(Errc::protocol_error, "short ADVERTISE");
    a.resolution_ps = static_cast<std::uint32_t>(*res);
    for (std::uint64_t i = 0; i < *n; ++i) {
        auto c = r.le(2);
        if (!c)
            fail(Errc::protocol_error, "short ADVERTISE channel list");
        a.channels.push_back(static_cast<Channel>(*c));
    }
    auto m = r.le(1);
    if (!m)
        fail(Errc::protocol_error, "short ADVERTISE codec list");
    for (std::uint64_t i = 0; i < *m; ++i) {
        auto c = r.le(1);
        if (!c)
            fail(Errc::protocol_error, "short ADVERTISE codec list");
        a.codecs.push_back(static_cast<CodecId>(*c));
    }
    if (r.remaining())
        fail(Errc::protocol_error, "trailing bytes in ADVERTISE");
    return a;
}

inline Bytes encode_body(const MeasurementRequest& q) {
    Bytes b;
    put_le(b, q.start_abs_second, 8);
    put_le(b, q.end_abs_second, 8);
    put_le(b, q.channels.size(), 2);
    for (Channel c : q.channels)
        put_le(b, c, 2);
    put_le(b, static_cast<std::uint8_t>(q.codec), 1);
    return b;
}

inline MeasurementRequest decode_request(ByteView body) {
    ByteReader r(body);
    MeasurementRequest q;
    auto start = r.le(8), end = r.le(8), n = r.le(2);
    if (!start || !end || !n)
        fail(Errc::malformed_request, "short REQUEST");
    q.start_abs_second = *start;
    q.end_abs_second = *end;
    for (std::uint64_t i = 0; i < *n; ++i) {
        auto c = r.le(2);
        if (!c)
            fail(Errc::malformed_request, "short REQUEST channel list");
        q.channels.push_back(static_cast<Channel>(*c));
    }
    auto codec = r.le(1);
    if (!codec || r.remaining())
        fail(Errc::malformed_request, "REQUEST codec field missing or trailing bytes");
    q.codec = static_cast<CodecId>(*codec);
    return q;
}

inline Bytes encode_body(const RateReport& rr) {
    Bytes b;
    put_le(b, rr.abs_second, 8);
    put_le(b, rr.counts.size(), 2);
    for (auto [c, n] : rr.counts) {
        put_le(b, c, 2);
        put_le(b, n, 8);
    }
    return b;
}

inline RateReport decode_rate(ByteView body) {
    ByteReader r(body);
    RateReport rr;
    auto s = r.le(8), n = r.le(2);
    if (!s || !n)
        fail(Errc::protocol_error, "short RATE");
    rr.abs_second = *s;
    for (std::uint64_t i = 0; i < *n; ++i) {
        auto c = r.le(2), k = r.le(8);
        if (!c || !k)
            fail(Errc::protocol_error, "short RATE entry");
        rr.counts.emplace_back(static_cast<Channel>(*c), *k);
    }
    if (r.remaining())
        fail(Errc::protocol_error, "trailing bytes in RATE");
    return rr;
}

inline Message error_message(WireError code, const std::string& text) {
    Message m{MessageType::error, {}};
    put_le(m.body, static_cast<std::uint16_t>(code), 2);
    m.body.insert(m.body.end(), text.begin(), text.end());
    return m;
}

inline std::pair<WireError, std::string> decode_error(ByteView body) {
    if (body.size() < 2)
        fail(Errc::protocol_error, "short ERROR");
    auto code = static_cast<WireError>(get_le(body, 2));
    return {code, std::string(body.begin() + 2, body.end())};
}

inline Message end_message(std::uint64_t data_messages) {
    Message m{MessageType::end, {}};
    put_le(m.body, data_messages, 8);
    return m;
}

/// Failure reported by the remote agent through an ERROR message.
class RemoteError : public Error {
public:
    RemoteError(WireError code, const std::string& text)
        : Error(Errc::remote_error, to_string(code) + ": " + text), wire_(code) {}
    WireError wire_code() const noexcept { return wire_; }

private:
    WireError wire_;
};

// ---------------------------------------------------------------------------
// Agent-side block history

struct SecondRecord {
    std::uint64_t abs_second = 0;
    std::vector<TagBlock> blocks;  // ascending channel
    std::vector<Bytes> encoded;    // blocks[i] encoded with the store codec
};

/// Ordered history of processed seconds shared by all sessions. Holds at
/// most `retain_seconds` records (0 = unbounded); a session whose next
/// record was evicted before it could be sent is overrun.
class BlockStore {
public:
    BlockStore(std::vector<Channel> channels, CodecId codec = kDefaultCodec, std::size_t retain_seconds = 0)
        : channels_(std::move(channels)), codec_(codec), retain_(retain_seconds) {
        std::sort(channels_.begin(), channels_.end());
    }

    const std::vector<Channel>& channels() const { return channels_; }
    CodecId codec() const { return codec_; }

    std::shared_ptr<const SecondRecord> publish(SecondBlocks&& sb) {
        auto rec = std::make_shared<SecondRecord>();
        rec->abs_second = sb.abs_second;
        rec->blocks = std::move(sb.blocks);
        for (const auto& b : rec->blocks)
            rec->encoded.push_back(encode(b, codec_).bytes());
        std::lock_guard lk(mu_);
        if (closed_)
            fail(Errc::invalid_argument, "publish on a closed store");
        if (!records_.empty() && rec->abs_second <= records_.back()->abs_second)
            fail(Errc::ordering_violation, "store seconds must increase");
        records_.push_back(rec);
        if (retain_ && records_.size() > retain_) {
            records_.pop_front();
            ++first_seq_;
        }
        cv_.notify_all();
        return rec;
    }

    /// No more seconds will be published.
    void close() {
        std::lock_guard lk(mu_);
        closed_ = true;
        cv_.notify_all();
    }

    bool closed() const {
        std::lock_guard lk(mu_);
        return closed_;
    }

    std::uint64_t published() const {
        std::lock_guard lk(mu_);
        return first_seq_ + records_.size();
    }

    /// Sequence number of the first retained record with abs_second >= start,
    /// or the next sequence number to be published.
    std::uint64_t seek(std::uint64_t start_abs_second) const {
        std::lock_guard lk(mu_);
        auto it = std::lower_bound(records_.begin(), records_.end(), start_abs_second,
                                   [](const auto& r, std::uint64_t s) { return r->abs_second < s; });
        return first_seq_ + static_cast<std::uint64_t>(it - records_.begin());
    }

    enum class Status { ok, ended, evicted, cancelled };

    struct Next {
        Status status = Status::ended;
        std::shared_ptr<const SecondRecord> record;
    };

    /// Blocks until record `seq` exists, the store is closed, or `cancel` is set.
    Next wait(std::uint64_t seq, const std::atomic<bool>& cancel) const {
        std::unique_lock lk(mu_);
        for (;;) {
            if (seq < first_seq_)
                return {Status::evicted, nullptr};
            if (seq < first_seq_ + records_.size())
                return {Status::ok, records_[static_cast<std::size_t>(seq - first_seq_)]};
            if (closed_)
                return {Status::ended, nullptr};
            if (cancel.load())
                return {Status::cancelled, nullptr};
            cv_.wait_for(lk, std::chrono::milliseconds(50));
        }
    }

    void notify_all() const { cv_.notify_all(); }

private:
    std::vector<Channel> channels_;
    CodecId codec_;
    std::size_t retain_;
    mutable std::mutex mu_;
    mutable std::condition_variable cv_;
    std::deque<std::shared_ptr<const SecondRecord>> records_;
    std::uint64_t first_seq_ = 0;
    bool closed_ = false;
};

// ---------------------------------------------------------------------------
// Server

struct ServiceStats {
    std::uint64_t sessions = 0;
    std::uint64_t data_messages = 0;
    std::uint64_t errors_sent = 0;
    std::uint64_t overruns = 0;
};

class MeasurementService {
public:
    explicit MeasurementService(BlockStore& store) : store_(store) {}

    ~MeasurementService() { stop(); }

    /// Runs one client session to completion on `conn`.
    void serve_session(ByteStream& conn) {
        {
            std::lock_guard lk(mu_);
            ++stats_.sessions;
        }
        try {
            run_session(conn);
        } catch (const Error&) {
            // peer went away or sent garbage we could not even answer
        }
        conn.close();
    }

    /// Serves every client that connects to `listener` on its own thread
    /// until stop() is called.
    void serve(TcpListener& listener) {
        while (!stopping_.load()) {
            auto conn = listener.accept(std::chrono::milliseconds(100));
            if (!conn)
                continue;
            std::lock_guard lk(mu_);
            auto& slot = sessions_.emplace_back();
            slot.conn = std::move(conn);
            ByteStream* raw = slot.conn.get();
            slot.thread = std::thread([this, raw] { serve_session(*raw); });
        }
    }

    void stop() {
        stopping_.store(true);
        store_.notify_all();
        std::list<Session> sessions;
        {
            std::lock_guard lk(mu_);
            sessions.swap(sessions_);
        }
        for (auto& s : sessions) {
            s.conn->close();
            if (s.thread.joinable())
                s.thread.join();
        }
    }

    ServiceStats stats() const {
        std::lock_guard lk(mu_);
        return stats_;
    }

    Advertise advertise() const { return {static_cast<std::uint32_t>(kResolutionPs), store_.channels(), supported_codecs()}; }

private:
    struct Session {
        std::unique_ptr<ByteStream> conn;
        std::thread thread;
    };

    void send_error(ByteStream& conn, WireError code, const std::string& text) {
        {
            std::lock_guard lk(mu_);
            ++stats_.errors_sent;
            if (code == WireError::overrun)
                ++stats_.overruns;
        }
        write_message(conn, error_message(code, text));
    }

    void run_session(ByteStream& conn) {
        write_message(conn, {MessageType::advertise, encode_body(advertise())});

        std::optional<Message> msg;
        try {
            msg = read_message(conn);
        } catch (const Error& e) {
            if (e.code() == Errc::version_mismatch)
                send_error(conn, WireError::version_mismatch, e.what());
            else if (e.code() == Errc::protocol_error)
                send_error(conn, WireError::protocol_error, e.what());
            return;
        }
        if (!msg)
            return;
        if (msg->type != MessageType::request) {
            send_error(conn, WireError::malformed_request, "expected REQUEST");
            return;
        }
        MeasurementRequest req;
        try {
            req = decode_request(msg->body);
            req.validate();
        } catch (const Error& e) {
            send_error(conn, WireError::malformed_request, e.what());
            return;
        }
        if (!is_known_codec(static_cast<std::uint8_t>(req.codec))) {
            send_error(conn, WireError::unsupported_codec, "codec " + std::to_string(static_cast<int>(req.codec)));
            return;
        }
        const auto& available = store_.channels();
        for (Channel c : req.channels) {
            if (!std::binary_search(available.begin(), available.end(), c)) {
                send_error(conn, WireError::unknown_channel, "channel " + std::to_string(c) + " is not served here");
                return;
            }
        }
        std::sort(req.channels.begin(), req.channels.end());
        req.channels.erase(std::unique(req.channels.begin(), req.channels.end()), req.channels.end());
        write_message(conn, {MessageType::accept, encode_body(req)});

        std::uint64_t sent = 0;
        std::uint64_t seq = store_.seek(req.start_abs_second);
        Bytes frame;
        for (;;) {
            auto next = store_.wait(seq, stopping_);
            if (next.status == BlockStore::Status::evicted) {
                send_error(conn, WireError::overrun, "session fell behind the agent's retention window");
                return;
            }
            if (next.status == BlockStore::Status::cancelled)
                return;
            if (next.status == BlockStore::Status::ended)
                break;
            const SecondRecord& rec = *next.record;
            ++seq;
            if (!req.live() && rec.abs_second > req.end_abs_second)
                break;
            if (rec.abs_second < req.start_abs_second)
                continue;

            RateReport rate{rec.abs_second, {}};
            for (std::size_t i = 0; i < rec.blocks.size(); ++i) {
                const TagBlock& b = rec.blocks[i];
                if (!std::binary_search(req.channels.begin(), req.channels.end(), b.channel))
                    continue;
                Message data{MessageType::data, {}};
                data.body = req.codec == store_.codec() ? rec.encoded[i] : encode(b, req.codec).bytes();
                frame.clear();
                serialize_message(data, frame);
                conn.write_all(frame);
                ++sent;
                rate.counts.emplace_back(b.channel, b.count());
            }
            write_message(conn, {MessageType::rate, encode_body(rate)});
            {
                std::lock_guard lk(mu_);
                stats_.data_messages += rate.counts.size();
            }
            if (!req.live() && rec.abs_second >= req.end_abs_second)
                break;
        }
        write_message(conn, end_message(sent));
    }

    BlockStore& store_;
    std::atomic<bool> stopping_{false};
    mutable std::mutex mu_;
    std::list<Session> sessions_;
    ServiceStats stats_;
};

// ---------------------------------------------------------------------------
// Client

struct ReceivedBlock {
    const EncodedBlock& encoded;
    const Bytes& wire;  // exact DATA body bytes
    TagBlock block;
};

struct FetchResult {
    Advertise advertise;
    MeasurementRequest accepted;
    std::uint64_t data_messages = 0;
    std::uint64_t data_bytes = 0;
    std::uint64_t tags = 0;
    std::uint64_t end_reported = 0;
    std::vector<RateReport> rates;
};

/// Client side of one measurement. Validates framing, scope and ordering,
/// decodes each block and hands it to `on_block` in arrival order.
inline FetchResult fetch(ByteStream& conn, const MeasurementRequest& request,
                         const std::function<void(const ReceivedBlock&)>& on_block) {
    request.validate();
    FetchResult res;

    auto expect = [&]() -> Message {
        auto m = read_message(conn);
        if (!m)
            fail(Errc::connection_error, "agent closed the connection before END");
        if (m->type == MessageType::error) {
            auto [code, text] = decode_error(m->body);
            throw RemoteError(code, text);
        }
        return std::move(*m);
    };

    Message adv = expect();
    if (adv.type != MessageType::advertise)
        fail(Errc::protocol_error, "expected ADVERTISE first");
    res.advertise = decode_advertise(adv.body);

    write_message(conn, {MessageType::request, encode_body(request)});
    Message acc = expect();
    if (acc.type != MessageType::accept)
        fail(Errc::protocol_error, "expected ACCEPT");
    res.accepted = decode_request(acc.body);

    std::vector<Channel> wanted = request.channels;
    std::sort(wanted.begin(), wanted.end());
    struct ChannelState {
        std::uint64_t last_second = 0;
        bool last_uncalibrated = false;
        bool seen = false;
    };
    std::map<Channel, ChannelState> state;
    std::optional<std::pair<std::uint64_t, Channel>> last_key;

    for (;;) {
        Message m = expect();
        switch (m.type) {
            case MessageType::data: {
                EncodedBlock enc = parse_block_exact(m.body);
                TagBlock block = decode(enc);
                if (!std::binary_search(wanted.begin(), wanted.end(), block.channel))
                    fail(Errc::protocol_error, "DATA for unrequested channel " + std::to_string(block.channel));
                if (block.abs_second < request.start_abs_second ||
                    (!request.live() && block.abs_second > request.end_abs_second))
                    fail(Errc::protocol_error, "DATA outside the requested scope");
                std::pair key{block.abs_second, block.channel};
                if (last_key && key <= *last_key)
                    fail(Errc::ordering_violation, "DATA (" + std::to_string(key.first) + ", " + std::to_string(key.second) +
                                                       ") does not follow (" + std::to_string(last_key->first) + ", " +
                                                       std::to_string(last_key->second) + ")");
                auto& st = state[block.channel];
                if (st.seen && block.abs_second != st.last_second + 1 && !st.last_uncalibrated)
                    fail(Errc::ordering_violation, "unflagged gap on channel " + std::to_string(block.channel) + " after second " +
                                                       std::to_string(st.last_second));
                st = {block.abs_second, block.uncalibrated, true};
                last_key = key;
                ++res.data_messages;
                res.data_bytes += m.body.size();
                res.tags += block.count();
                on_block(ReceivedBlock{enc, m.body, std::move(block)});
                break;
            }
            case MessageType::rate:
                res.rates.push_back(decode_rate(m.body));
                break;
            case MessageType::end:
                if (m.body.size() != 8)
                    fail(Errc::protocol_error, "malformed END");
                res.end_reported = get_le(m.body, 8);
                if (res.end_reported != res.data_messages)
                    fail(Errc::protocol_error, "END reports " + std::to_string(res.end_reported) + " DATA messages, received " +
                                                   std::to_string(res.data_messages));
                return res;
            default:
                fail(Errc::protocol_error, "unexpected message type " + std::to_string(static_cast<int>(m.type)));
        }
    }
}

inline std::vector<TagBlock> fetch_blocks(ByteStream& conn, const MeasurementRequest& request, FetchResult* result = nullptr) {
    std::vector<TagBlock> out;
    auto r = fetch(conn, request, [&](const ReceivedBlock& rb) { out.push_back(rb.block); });
    if (result)
        *result = std::move(r);
    return out;
}

inline std::vector<TagBlock> fetch_blocks(const Endpoint& ep, const MeasurementRequest& request, FetchResult* result = nullptr) {
    auto conn = connect_tcp(ep);
    return fetch_blocks(*conn, request, result);
}

}  // namespace ttnet
