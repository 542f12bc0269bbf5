//
// transport.hpp
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

// Reliable ordered byte streams: TCP sockets for deployment and a bounded
// in-process duplex pipe for tests. Nothing above this layer may rely on
// the transport preserving write boundaries.

#include "ttnet/bytes.hpp"
#include "ttnet/error.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <memory>
#include <mutex>
#include <string>
#include <utility>

namespace ttnet {

class ByteStream {
public:
    virtual ~ByteStream() = default;

    /// Writes everything or throws connection_error.
    virtual void write_all(ByteView data) = 0;

    /// Reads at least one byte into `buf`; returns 0 on orderly end of stream.
    virtual std::size_t read_some(std::span<std::uint8_t> buf) = 0;

    /// Stops both directions; pending and future reads see end of stream.
    virtual void close() = 0;

    /// Fills `buf` completely. Returns false if the stream ended before the
    /// first byte; throws if it ended part-way.
    bool read_exact(std::span<std::uint8_t> buf) {
        std::size_t got = 0;
        while (got < buf.size()) {
            std::size_t n = read_some(buf.subspan(got));
            if (n == 0) {
                if (got == 0)
                    return false;
                fail(Errc::connection_error, "stream ended mid-message");
            }
            got += n;
        }
        return true;
    }
};

// ---------------------------------------------------------------------------
// In-process pipe

namespace detail {

/// One direction of a pipe: a bounded byte FIFO.
class PipeChannel {
public:
    explicit PipeChannel(std::size_t capacity) : capacity_(std::max<std::size_t>(capacity, 1)) {}

    void write(ByteView data) {
        std::unique_lock lk(mu_);
        std::size_t off = 0;
        while (off < data.size()) {
            cv_.wait(lk, [&] { return closed_ || buf_.size() < capacity_; });
            if (closed_)
                fail(Errc::connection_error, "pipe closed by peer");
            std::size_t n = std::min(capacity_ - buf_.size(), data.size() - off);
            buf_.insert(buf_.end(), data.begin() + static_cast<std::ptrdiff_t>(off),
                        data.begin() + static_cast<std::ptrdiff_t>(off + n));
            off += n;
            cv_.notify_all();
        }
    }

    std::size_t read(std::span<std::uint8_t> out) {
        std::unique_lock lk(mu_);
        cv_.wait(lk, [&] { return closed_ || !buf_.empty(); });
        if (buf_.empty())
            return 0;
        std::size_t n = std::min(out.size(), buf_.size());
        std::copy_n(buf_.begin(), n, out.begin());
        buf_.erase(buf_.begin(), buf_.begin() + static_cast<std::ptrdiff_t>(n));
        cv_.notify_all();
        return n;
    }

    void close() {
        std::lock_guard lk(mu_);
        closed_ = true;
        cv_.notify_all();
    }

private:
    std::size_t capacity_;
    std::mutex mu_;
    std::condition_variable cv_;
    std::deque<std::uint8_t> buf_;
    bool closed_ = false;
};

}  // namespace detail

class PipeStream final : public ByteStream {
public:
    PipeStream(std::shared_ptr<detail::PipeChannel> in, std::shared_ptr<detail::PipeChannel> out)
        : in_(std::move(in)), out_(std::move(out)) {}

    ~PipeStream() override { close(); }

    void write_all(ByteView data) override { out_->write(data); }
    std::size_t read_some(std::span<std::uint8_t> buf) override { return in_->read(buf); }

    void close() override {
        in_->close();
        out_->close();
    }

private:
    std::shared_ptr<detail::PipeChannel> in_;
    std::shared_ptr<detail::PipeChannel> out_;
};

/// Two connected ends; each direction buffers at most `capacity` bytes.
inline std::pair<std::unique_ptr<ByteStream>, std::unique_ptr<ByteStream>> make_pipe(std::size_t capacity = 1 << 20) {
    auto ab = std::make_shared<detail::PipeChannel>(capacity);
    auto ba = std::make_shared<detail::PipeChannel>(capacity);
    return {std::make_unique<PipeStream>(ba, ab), std::make_unique<PipeStream>(ab, ba)};
}

// ---------------------------------------------------------------------------
// TCP

struct Endpoint {
    std::string host = "127.0.0.1";
    std::uint16_t port = 0;

    std::string to_string() const { return host + ":" + std::to_string(port); }
};

inline Endpoint parse_endpoint(const std::string& text) {
    auto colon = text.rfind(':');
    if (colon == std::string::npos || colon + 1 >= text.size())
        fail(Errc::invalid_argument, "endpoint must be host:port, got '" + text + "'");
    Endpoint ep;
    ep.host = text.substr(0, colon);
    if (ep.host.empty())
        ep.host = "127.0.0.1";
    unsigned long port = 0;
    try {
        std::size_t used = 0;
        port = std::stoul(text.substr(colon + 1), &used);
        if (used != text.size() - colon - 1)
            throw std::invalid_argument("junk");
    } catch (const std::exception&) {
        fail(Errc::invalid_argument, "bad port in '" + text + "'");
    }
    if (port > 65535)
        fail(Errc::invalid_argument, "port out of range in '" + text + "'");
    ep.port = static_cast<std::uint16_t>(port);
    return ep;
}

class TcpStream final : public ByteStream {
public:
    explicit TcpStream(int fd) : fd_(fd) {
        int one = 1;
        ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    }
    ~TcpStream() override {
        if (fd_ >= 0)
            ::close(fd_);
    }
    TcpStream(const TcpStream&) = delete;
    TcpStream& operator=(const TcpStream&) = delete;

    void write_all(ByteView data) override {
        std::size_t off = 0;
        while (off < data.size()) {
            ssize_t n = ::send(fd_, data.data() + off, data.size() - off, MSG_NOSIGNAL);
            if (n < 0) {
                if (errno == EINTR)
                    continue;
                fail(Errc::connection_error, std::string("send: ") + std::strerror(errno));
            }
            off += static_cast<std::size_t>(n);
        }
    }

    std::size_t read_some(std::span<std::uint8_t> buf) override {
        for (;;) {
            ssize_t n = ::recv(fd_, buf.data(), buf.size(), 0);
            if (n >= 0)
                return static_cast<std::size_t>(n);
            if (errno == EINTR)
                continue;
            if (errno == ECONNRESET || errno == ENOTCONN)
                return 0;
            fail(Errc::connection_error, std::string("recv: ") + std::strerror(errno));
        }
    }

    void close() override {
        if (fd_ >= 0)
            ::shutdown(fd_, SHUT_RDWR);
    }

private:
    int fd_;
};

namespace detail {

inline addrinfo* resolve(const Endpoint& ep, bool passive) {
    addrinfo hints{};
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_STREAM;
    if (passive)
        hints.ai_flags = AI_PASSIVE;
    addrinfo* res = nullptr;
    std::string port = std::to_string(ep.port);
    int rc = ::getaddrinfo(ep.host.empty() ? nullptr : ep.host.c_str(), port.c_str(), &hints, &res);
    if (rc != 0)
        fail(Errc::connection_error, "resolve " + ep.to_string() + ": " + ::gai_strerror(rc));
    return res;
}

}  // namespace detail

inline std::unique_ptr<ByteStream> connect_tcp(const Endpoint& ep) {
    addrinfo* res = detail::resolve(ep, false);
    int fd = -1;
    for (addrinfo* ai = res; ai; ai = ai->ai_next) {
        fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
        if (fd < 0)
            continue;
        if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0)
            break;
        ::close(fd);
        fd = -1;
    }
    ::freeaddrinfo(res);
    if (fd < 0)
        fail(Errc::connection_error, "cannot connect to " + ep.to_string());
    return std::make_unique<TcpStream>(fd);
}

class TcpListener {
public:
    explicit TcpListener(const Endpoint& ep) {
        addrinfo* res = detail::resolve(ep, true);
        fd_ = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
        int one = 1;
        if (fd_ >= 0)
            ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
        bool ok = fd_ >= 0 && ::bind(fd_, res->ai_addr, res->ai_addrlen) == 0 && ::listen(fd_, 16) == 0;
        ::freeaddrinfo(res);
        if (!ok) {
            std::string why = std::strerror(errno);
            if (fd_ >= 0)
                ::close(fd_);
            fail(Errc::connection_error, "cannot listen on " + ep.to_string() + ": " + why);
        }
        sockaddr_in addr{};
        socklen_t len = sizeof addr;
        ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
        bound_ = ep;
        bound_.port = ntohs(addr.sin_port);
    }

    ~TcpListener() {
        if (fd_ >= 0)
            ::close(fd_);
    }
    TcpListener(const TcpListener&) = delete;
    TcpListener& operator=(const TcpListener&) = delete;

    /// Endpoint actually bound (port 0 resolves to an ephemeral port).
    const Endpoint& endpoint() const { return bound_; }

    /// Waits up to `timeout` for a client; nullptr on timeout.
    std::unique_ptr<ByteStream> accept(std::chrono::milliseconds timeout) {
        pollfd p{fd_, POLLIN, 0};
        int rc = ::poll(&p, 1, static_cast<int>(timeout.count()));
        if (rc <= 0)
            return nullptr;
        int c = ::accept(fd_, nullptr, nullptr);
        if (c < 0)
            return nullptr;
        return std::make_unique<TcpStream>(c);
    }

private:
    int fd_ = -1;
    Endpoint bound_;
};

}  // namespace ttnet
