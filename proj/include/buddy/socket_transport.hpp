#pragma once

// Stream-socket transport for multi-process runs.
//
// Every frame on the wire is [u32 LE length][u8 tag][body], where length
// counts the tag and the body:
//   tag 0x01  data frame, body = bundle bytes [0, tail)
//   tag 0x02  credit grant, body = u16 LE count
//
// A sender may have at most `credits` data frames outstanding per link. The
// receiver returns one credit each time a frame from that link lands in a
// posted receive buffer, so frames staged at the receiver (no receive posted
// yet) never exceed credits x max bundle size per link.

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/eventfd.h>
#include <sys/socket.h>
#include <sys/uio.h>
#include <unistd.h>

#include <algorithm>
#include <array>
#include <cerrno>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "buddy/error.hpp"
#include "buddy/transport.hpp"

namespace buddy {

namespace frame {

inline constexpr std::uint8_t kData = 0x01;
inline constexpr std::uint8_t kCredit = 0x02;
inline constexpr std::size_t kPrefixSize = 5;
inline constexpr std::size_t kCreditFrameSize = kPrefixSize + 2;

inline std::array<std::byte, kPrefixSize> data_prefix(std::uint32_t body_len) {
  std::array<std::byte, kPrefixSize> out{};
  detail::store_le32(out.data(), body_len + 1);
  out[4] = std::byte{kData};
  return out;
}

inline std::array<std::byte, kCreditFrameSize> credit_frame(std::uint16_t count) {
  std::array<std::byte, kCreditFrameSize> out{};
  detail::store_le32(out.data(), 3);
  out[4] = std::byte{kCredit};
  detail::store_le16(out.data() + kPrefixSize, count);
  return out;
}

/// Incremental frame decoder. The caller reads socket bytes into window()
/// and reports them with advance(). Once a data prefix is complete the caller
/// supplies the destination buffer, which lets the body be read straight into
/// a posted receive buffer.
class Reader {
 public:
  enum class Event { none, data, credit };

  explicit Reader(std::size_t max_body) : max_body_(max_body) {}

  bool needs_target() const { return state_ == State::await_target; }
  std::uint32_t body_length() const { return body_len_; }

  void set_target(Bundle target) {
    if (state_ != State::await_target) throw usage_error("frame reader is not waiting for a target");
    if (target.capacity() < body_len_) throw usage_error("frame target too small");
    target.clear();
    target_ = std::move(target);
    got_ = 0;
    state_ = State::body;
  }

  std::span<std::byte> window() {
    switch (state_) {
      case State::prefix:
        return {prefix_.data() + got_, kPrefixSize - got_};
      case State::credit:
        return {credit_.data() + got_, 2 - got_};
      case State::body:
        return {target_.data() + got_, body_len_ - got_};
      case State::await_target:
        break;
    }
    return {};
  }

  Event advance(std::size_t n) {
    got_ += n;
    switch (state_) {
      case State::prefix: {
        if (got_ < kPrefixSize) return Event::none;
        const std::uint32_t len = detail::load_le32(prefix_.data());
        const auto tag = std::to_integer<std::uint8_t>(prefix_[4]);
        got_ = 0;
        if (len == 0) throw framing_error("zero-length frame");
        if (tag == kData) {
          body_len_ = len - 1;
          if (body_len_ > max_body_) {
            throw framing_error("data frame of " + std::to_string(body_len_) + " bytes exceeds limit");
          }
          state_ = State::await_target;
          return Event::none;
        }
        if (tag == kCredit) {
          if (len != 3) throw framing_error("credit frame with bad length");
          state_ = State::credit;
          return Event::none;
        }
        throw framing_error("unknown frame tag " + std::to_string(tag));
      }
      case State::credit:
        if (got_ < 2) return Event::none;
        credit_count_ = detail::load_le16(credit_.data());
        got_ = 0;
        state_ = State::prefix;
        return Event::credit;
      case State::body:
        if (got_ < body_len_) return Event::none;
        target_.set_tail(body_len_);
        got_ = 0;
        state_ = State::prefix;
        return Event::data;
      case State::await_target:
        break;
    }
    return Event::none;
  }

  Bundle take_data() { return std::move(target_); }
  std::uint16_t credit_count() const { return credit_count_; }

 private:
  enum class State { prefix, await_target, body, credit };
  State state_ = State::prefix;
  std::size_t max_body_;
  std::array<std::byte, kPrefixSize> prefix_{};
  std::array<std::byte, 2> credit_{};
  std::size_t got_ = 0;
  std::uint32_t body_len_ = 0;
  std::uint16_t credit_count_ = 0;
  Bundle target_;
};

}  // namespace frame

namespace detail {

inline constexpr std::uint32_t kHelloMagic = 0x59444442;  // "BDDY"

struct Fd {
  int fd = -1;
  Fd() = default;
  explicit Fd(int f) : fd(f) {}
  Fd(Fd&& o) noexcept : fd(std::exchange(o.fd, -1)) {}
  Fd& operator=(Fd&& o) noexcept {
    if (this != &o) {
      reset();
      fd = std::exchange(o.fd, -1);
    }
    return *this;
  }
  Fd(const Fd&) = delete;
  Fd& operator=(const Fd&) = delete;
  ~Fd() { reset(); }
  void reset() {
    if (fd >= 0) ::close(fd);
    fd = -1;
  }
  int release() { return std::exchange(fd, -1); }
};

inline sockaddr_in resolve(const std::string& host, std::uint16_t port) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  const std::string h = host.empty() ? "0.0.0.0" : host;
  if (int rc = ::getaddrinfo(h.c_str(), nullptr, &hints, &res); rc != 0 || !res) {
    throw startup_error("cannot resolve host '" + h + "': " + ::gai_strerror(rc));
  }
  sockaddr_in addr{};
  std::memcpy(&addr, res->ai_addr, sizeof(addr));
  ::freeaddrinfo(res);
  addr.sin_port = htons(port);
  return addr;
}

inline void set_nonblocking(int fd, bool on) {
  int flags = ::fcntl(fd, F_GETFL, 0);
  ::fcntl(fd, F_SETFL, on ? (flags | O_NONBLOCK) : (flags & ~O_NONBLOCK));
}

inline void set_nodelay(int fd) {
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
}

inline int remaining_ms(SteadyClock::time_point deadline) {
  auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - SteadyClock::now());
  return left.count() < 0 ? 0 : static_cast<int>(left.count());
}

// Blocking exact-length I/O against a deadline (setup phase only).
inline bool io_exact(int fd, std::byte* buf, std::size_t len, bool writing,
                     SteadyClock::time_point deadline) {
  std::size_t done = 0;
  while (done < len) {
    pollfd p{fd, static_cast<short>(writing ? POLLOUT : POLLIN), 0};
    int ms = remaining_ms(deadline);
    if (ms == 0 || ::poll(&p, 1, ms) <= 0) return false;
    ssize_t n = writing ? ::send(fd, buf + done, len - done, MSG_NOSIGNAL)
                        : ::recv(fd, buf + done, len - done, 0);
    if (n < 0 && (errno == EINTR || errno == EAGAIN)) continue;
    if (n <= 0) return false;
    done += static_cast<std::size_t>(n);
  }
  return true;
}

}  // namespace detail

/// Binds an ephemeral port on the loopback interface and releases it.
inline std::uint16_t reserve_free_port() {
  detail::Fd s(::socket(AF_INET, SOCK_STREAM, 0));
  sockaddr_in addr = detail::resolve("127.0.0.1", 0);
  if (::bind(s.fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    throw startup_error("cannot bind an ephemeral port");
  }
  socklen_t len = sizeof(addr);
  ::getsockname(s.fd, reinterpret_cast<sockaddr*>(&addr), &len);
  return ntohs(addr.sin_port);
}

class SocketEndpoint final : public Endpoint {
  struct Outgoing {
    WorkId id;
    Bundle bundle;
  };

  struct Peer {
    Peer(PeerId i, int f, std::size_t credits, std::size_t max_frame)
        : id(i), fd(f), credits(credits), reader(max_frame) {}
    PeerId id;
    detail::Fd fd;
    bool alive = true;
    std::size_t credits;
    std::deque<Outgoing> queue;
    std::optional<Outgoing> current;
    std::array<std::byte, frame::kCreditFrameSize> prefix{};
    std::size_t prefix_len = 0;
    std::size_t written = 0;
    bool current_is_credit = false;
    std::uint32_t grants_owed = 0;
    frame::Reader reader;
    bool into_posted = false;
    WorkId target_id = 0;

    bool has_write_work() const {
      return alive && (current || grants_owed > 0 || (!queue.empty() && credits > 0));
    }
  };

 public:
  SocketEndpoint(PeerId self, std::map<PeerId, detail::Fd> sockets, std::size_t credits,
                 std::size_t max_frame)
      : self_(self), wake_(::eventfd(0, EFD_NONBLOCK)) {
    for (auto& [id, fd] : sockets) {
      detail::set_nonblocking(fd.fd, true);
      detail::set_nodelay(fd.fd);
      peers_.emplace(id, std::make_unique<Peer>(id, fd.release(), credits, max_frame));
    }
    io_ = std::thread([this] { io_loop(); });
  }

  ~SocketEndpoint() override {
    {
      std::lock_guard lock(mu_);
      stopping_ = true;
    }
    wake();
    if (io_.joinable()) io_.join();
  }

  PeerId local_id() const override { return self_; }
  std::vector<PeerId> peers() const override {
    std::vector<PeerId> out;
    for (const auto& [id, p] : peers_) out.push_back(id);
    return out;
  }

  WorkId post_send(PeerId peer, Bundle bundle, WorkId id) override {
    if (bundle.empty()) throw usage_error("post_send of an empty bundle");
    {
      std::lock_guard lock(mu_);
      auto it = peers_.find(peer);
      if (it == peers_.end() || !it->second->alive) {
        complete_send(peer, id, std::move(bundle), CompletionStatus::link_error);
        cv_.notify_one();
        return id;
      }
      it->second->queue.push_back({id, std::move(bundle)});
    }
    wake();
    return id;
  }
  using Endpoint::post_send;

  WorkId post_recv(Bundle buffer, WorkId id) override {
    buffer.clear();
    bool grant = false;
    {
      std::lock_guard lock(mu_);
      if (staged_.empty()) {
        posted_.push_back({id, std::move(buffer)});
        return id;
      }
      auto [from, data] = std::move(staged_.front());
      staged_.pop_front();
      staged_bytes_ -= data.tail();
      Completion c;
      c.kind = CompletionKind::recv;
      c.peer = from;
      c.id = id;
      c.length = static_cast<std::uint32_t>(data.tail());
      if (buffer.capacity() < data.tail()) {
        c.status = CompletionStatus::link_error;
      } else {
        std::memcpy(buffer.data(), data.data(), data.tail());
        buffer.set_tail(data.tail());
      }
      c.buffer = std::move(buffer);
      cq_.push_back(std::move(c));
      if (auto it = peers_.find(from); it != peers_.end()) {
        ++it->second->grants_owed;
        grant = true;
      }
    }
    cv_.notify_one();
    if (grant) wake();
    return id;
  }
  using Endpoint::post_recv;

  std::size_t poll(std::vector<Completion>& out, std::size_t max) override {
    std::lock_guard lock(mu_);
    std::size_t n = 0;
    while (n < max && !cq_.empty()) {
      out.push_back(std::move(cq_.front()));
      cq_.pop_front();
      ++n;
    }
    return n;
  }
  using Endpoint::poll;

  bool wait(Micros timeout) override {
    std::unique_lock lock(mu_);
    return cv_.wait_for(lock, timeout, [&] { return !cq_.empty(); });
  }

  std::size_t posted_recvs() const override {
    std::lock_guard lock(mu_);
    return posted_.size();
  }

  std::size_t pending_sends(PeerId peer) const override {
    std::lock_guard lock(mu_);
    auto it = peers_.find(peer);
    if (it == peers_.end()) return 0;
    return it->second->queue.size() + (it->second->current && !it->second->current_is_credit ? 1 : 0);
  }

  // Bytes received but not yet matched with a posted receive.
  std::size_t staged_bytes() const {
    std::lock_guard lock(mu_);
    return staged_bytes_;
  }

  bool peer_alive(PeerId peer) const {
    std::lock_guard lock(mu_);
    auto it = peers_.find(peer);
    return it != peers_.end() && it->second->alive;
  }

 private:
  void wake() {
    std::uint64_t one = 1;
    [[maybe_unused]] auto n = ::write(wake_.fd, &one, sizeof(one));
  }

  void complete_send(PeerId peer, WorkId id, Bundle b, CompletionStatus st) {
    Completion c;
    c.kind = CompletionKind::send;
    c.peer = peer;
    c.id = id;
    c.length = static_cast<std::uint32_t>(b.tail());
    c.status = st;
    c.buffer = std::move(b);
    cq_.push_back(std::move(c));
  }

  void fail(Peer& p) {
    if (!p.alive) return;
    p.alive = false;
    p.fd.reset();
    if (p.current && !p.current_is_credit) {
      complete_send(p.id, p.current->id, std::move(p.current->bundle), CompletionStatus::link_error);
    }
    p.current.reset();
    for (auto& o : p.queue) complete_send(p.id, o.id, std::move(o.bundle), CompletionStatus::link_error);
    p.queue.clear();
  }

  // Returns true when completions were produced.
  bool do_write(Peer& p) {
    bool produced = false;
    while (p.alive) {
      if (!p.current) {
        if (p.grants_owed > 0) {
          const auto count = static_cast<std::uint16_t>(std::min<std::uint32_t>(p.grants_owed, 0xFFFF));
          p.grants_owed -= count;
          auto f = frame::credit_frame(count);
          std::copy(f.begin(), f.end(), p.prefix.begin());
          p.prefix_len = f.size();
          p.current = Outgoing{0, Bundle()};
          p.current_is_credit = true;
        } else if (!p.queue.empty() && p.credits > 0) {
          p.current = std::move(p.queue.front());
          p.queue.pop_front();
          --p.credits;
          auto f = frame::data_prefix(static_cast<std::uint32_t>(p.current->bundle.tail()));
          std::copy(f.begin(), f.end(), p.prefix.begin());
          p.prefix_len = f.size();
          p.current_is_credit = false;
        } else {
          break;
        }
        p.written = 0;
      }
      const std::size_t body = p.current_is_credit ? 0 : p.current->bundle.tail();
      const std::size_t total = p.prefix_len + body;
      iovec iov[2];
      int iovcnt = 0;
      if (p.written < p.prefix_len) {
        iov[iovcnt++] = {p.prefix.data() + p.written, p.prefix_len - p.written};
        if (body) iov[iovcnt++] = {p.current->bundle.data(), body};
      } else {
        const std::size_t off = p.written - p.prefix_len;
        iov[iovcnt++] = {p.current->bundle.data() + off, body - off};
      }
      msghdr msg{};
      msg.msg_iov = iov;
      msg.msg_iovlen = static_cast<decltype(msg.msg_iovlen)>(iovcnt);
      ssize_t n = ::sendmsg(p.fd.fd, &msg, MSG_NOSIGNAL);
      if (n < 0) {
        if (errno == EAGAIN || errno == EWOULDBLOCK || errno == EINTR) break;
        fail(p);
        return true;
      }
      p.written += static_cast<std::size_t>(n);
      if (p.written == total) {
        if (!p.current_is_credit) {
          complete_send(p.id, p.current->id, std::move(p.current->bundle), CompletionStatus::ok);
          produced = true;
        }
        p.current.reset();
      }
    }
    return produced;
  }

  bool do_read(Peer& p) {
    bool produced = false;
    try {
      while (p.alive) {
        if (p.reader.needs_target()) {
          const auto len = p.reader.body_length();
          if (!posted_.empty() && posted_.front().second.capacity() >= len) {
            auto [id, buf] = std::move(posted_.front());
            posted_.pop_front();
            p.reader.set_target(std::move(buf));
            p.into_posted = true;
            p.target_id = id;
          } else {
            p.reader.set_target(Bundle(len));
            p.into_posted = false;
          }
        }
        auto w = p.reader.window();
        ssize_t n = w.empty() ? 0 : ::recv(p.fd.fd, w.data(), w.size(), 0);
        if (w.empty()) n = 0;
        if (n < 0) {
          if (errno == EAGAIN || errno == EWOULDBLOCK || errno == EINTR) break;
          fail(p);
          return true;
        }
        if (n == 0 && !w.empty()) {
          fail(p);  // orderly shutdown by the peer
          return true;
        }
        switch (p.reader.advance(static_cast<std::size_t>(n))) {
          case frame::Reader::Event::data: {
            Bundle b = p.reader.take_data();
            if (p.into_posted) {
              Completion c;
              c.kind = CompletionKind::recv;
              c.peer = p.id;
              c.id = p.target_id;
              c.length = static_cast<std::uint32_t>(b.tail());
              c.buffer = std::move(b);
              cq_.push_back(std::move(c));
              ++p.grants_owed;
              produced = true;
            } else {
              staged_bytes_ += b.tail();
              staged_.emplace_back(p.id, std::move(b));
            }
            break;
          }
          case frame::Reader::Event::credit:
            p.credits += p.reader.credit_count();
            break;
          case frame::Reader::Event::none:
            break;
        }
      }
    } catch (const framing_error&) {
      fail(p);
      return true;
    }
    return produced;
  }

  void io_loop() {
    std::vector<pollfd> fds;
    std::vector<Peer*> order;
    std::unique_lock lock(mu_);
    while (!stopping_) {
      fds.clear();
      order.clear();
      fds.push_back({wake_.fd, POLLIN, 0});
      for (auto& [id, p] : peers_) {
        if (!p->alive) continue;
        short ev = POLLIN;
        if (p->has_write_work()) ev |= POLLOUT;
        fds.push_back({p->fd.fd, ev, 0});
        order.push_back(p.get());
      }
      lock.unlock();
      ::poll(fds.data(), fds.size(), 100);
      if (fds[0].revents & POLLIN) {
        std::uint64_t v;
        while (::read(wake_.fd, &v, sizeof(v)) > 0) {
        }
      }
      lock.lock();
      bool produced = false;
      for (std::size_t i = 0; i < order.size(); ++i) {
        Peer& p = *order[i];
        if (fds[i + 1].revents & (POLLIN | POLLHUP | POLLERR)) produced |= do_read(p);
        if (p.has_write_work()) produced |= do_write(p);
      }
      if (produced) cv_.notify_all();
    }
  }

  PeerId self_;
  detail::Fd wake_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  bool stopping_ = false;
  std::map<PeerId, std::unique_ptr<Peer>> peers_;
  std::deque<std::pair<WorkId, Bundle>> posted_;
  std::deque<std::pair<PeerId, Bundle>> staged_;
  std::size_t staged_bytes_ = 0;
  std::deque<Completion> cq_;
  std::thread io_;
};

/// Builds the mesh described by `config`: connects to every peer with a
/// smaller id, accepts every peer with a larger id, and returns only once all
/// of them are up. Throws startup_error when that does not happen within
/// config.connect_timeout.
inline std::unique_ptr<SocketEndpoint> connect_all(const TransportConfig& config) {
  using namespace std::chrono_literals;
  const auto deadline = SteadyClock::now() + config.connect_timeout;
  std::set<PeerId> expect_accept;
  std::vector<const PeerAddress*> to_connect;
  for (const auto& p : config.peers) {
    if (p.id == config.self) throw config_error("endpoint lists itself as a peer");
    if (p.id > config.self) {
      expect_accept.insert(p.id);
    } else {
      to_connect.push_back(&p);
    }
  }

  detail::Fd listener;
  if (!expect_accept.empty()) {
    if (!config.listen) throw config_error("endpoint " + std::to_string(config.self) + " needs a listen address");
    listener = detail::Fd(::socket(AF_INET, SOCK_STREAM, 0));
    int one = 1;
    ::setsockopt(listener.fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    sockaddr_in addr = detail::resolve(config.listen->host, config.listen->port);
    if (::bind(listener.fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0 ||
        ::listen(listener.fd, 128) != 0) {
      throw startup_error("cannot listen on " + config.listen->host + ":" +
                          std::to_string(config.listen->port) + ": " + std::strerror(errno));
    }
  }

  std::map<PeerId, detail::Fd> sockets;
  std::array<std::byte, 8> hello{};
  detail::store_le32(hello.data(), detail::kHelloMagic);
  detail::store_le32(hello.data() + 4, config.self);

  for (const PeerAddress* p : to_connect) {
    const sockaddr_in addr = detail::resolve(p->host, p->port);
    while (true) {
      if (SteadyClock::now() >= deadline) {
        throw startup_error("peer " + std::to_string(p->id) + " at " + p->host + ":" +
                            std::to_string(p->port) + " unreachable within timeout");
      }
      detail::Fd s(::socket(AF_INET, SOCK_STREAM, 0));
      detail::set_nonblocking(s.fd, true);
      int rc = ::connect(s.fd, reinterpret_cast<const sockaddr*>(&addr), sizeof(addr));
      if (rc != 0 && errno == EINPROGRESS) {
        pollfd pf{s.fd, POLLOUT, 0};
        if (::poll(&pf, 1, std::min(detail::remaining_ms(deadline), 200)) == 1) {
          int err = 0;
          socklen_t len = sizeof(err);
          ::getsockopt(s.fd, SOL_SOCKET, SO_ERROR, &err, &len);
          rc = err == 0 ? 0 : -1;
        } else {
          rc = -1;
        }
      }
      if (rc == 0 && detail::io_exact(s.fd, hello.data(), hello.size(), true, deadline)) {
        sockets.emplace(p->id, std::move(s));
        break;
      }
      std::this_thread::sleep_for(20ms);
    }
  }

  while (!expect_accept.empty()) {
    pollfd pf{listener.fd, POLLIN, 0};
    const int ms = detail::remaining_ms(deadline);
    if (ms == 0 || ::poll(&pf, 1, ms) <= 0) {
      throw startup_error("endpoint " + std::to_string(config.self) + " timed out waiting for " +
                          std::to_string(expect_accept.size()) + " peer(s) to connect");
    }
    detail::Fd s(::accept(listener.fd, nullptr, nullptr));
    if (s.fd < 0) continue;
    std::array<std::byte, 8> got{};
    if (!detail::io_exact(s.fd, got.data(), got.size(), false, deadline)) continue;
    if (detail::load_le32(got.data()) != detail::kHelloMagic) continue;
    const PeerId id = detail::load_le32(got.data() + 4);
    if (sockets.count(id)) throw config_error("peer id " + std::to_string(id) + " connected twice");
    if (!expect_accept.erase(id)) continue;
    sockets.emplace(id, std::move(s));
  }

  return std::make_unique<SocketEndpoint>(config.self, std::move(sockets), config.credits, config.max_frame);
}

}  // namespace buddy
