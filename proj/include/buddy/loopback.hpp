#pragma once

// In-process transport: endpoints registered on one fabric exchange bundles
// by copying into the receiver's posted buffer, the way a NIC would DMA into
// a posted RECV. A bundle sent while the receiver has nothing posted is held
// until a receive is posted.

#include <condition_variable>
#include <cstring>
#include <deque>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "buddy/error.hpp"
#include "buddy/transport.hpp"

namespace buddy {

class LoopbackFabric : public std::enable_shared_from_this<LoopbackFabric> {
  struct Held {
    PeerId src;
    WorkId id;
    Bundle bundle;
  };

  struct Port {
    explicit Port(PeerId i) : id(i) {}
    const PeerId id;
    mutable std::mutex mu;
    std::condition_variable cv;
    bool open = true;
    std::deque<std::pair<WorkId, Bundle>> posted;
    std::deque<Held> held;
    std::deque<Completion> cq;
    std::unordered_map<PeerId, std::size_t> outstanding;
  };

 public:
  static std::shared_ptr<LoopbackFabric> create() {
    return std::shared_ptr<LoopbackFabric>(new LoopbackFabric());
  }

  class LoopbackEndpoint;

  /// Registers `id` without waiting for its peers.
  std::unique_ptr<Endpoint> open(PeerId id, std::vector<PeerId> peers);

  /// Waits until every id in `ids` is registered and open.
  bool wait_for(const std::vector<PeerId>& ids, std::chrono::milliseconds timeout) {
    std::unique_lock lock(mu_);
    return registered_cv_.wait_for(lock, timeout, [&] {
      for (PeerId p : ids) {
        auto it = ports_.find(p);
        if (it == ports_.end() || !it->second->open) return false;
      }
      return true;
    });
  }

 private:
  LoopbackFabric() = default;

  std::shared_ptr<Port> find(PeerId id) const {
    std::shared_lock lock(mu_);
    auto it = ports_.find(id);
    return it == ports_.end() ? nullptr : it->second;
  }

  static void push(Port& port, Completion c) {
    {
      std::lock_guard lock(port.mu);
      if (c.kind == CompletionKind::send) {
        auto it = port.outstanding.find(c.peer);
        if (it != port.outstanding.end() && it->second > 0) --it->second;
      }
      port.cq.push_back(std::move(c));
    }
    port.cv.notify_one();
  }

  static Completion send_done(PeerId dst, WorkId id, Bundle b, CompletionStatus st) {
    Completion c;
    c.kind = CompletionKind::send;
    c.peer = dst;
    c.id = id;
    c.length = static_cast<std::uint32_t>(b.tail());
    c.status = st;
    c.buffer = std::move(b);
    return c;
  }

  // Copies `src` into `dst_buf`; returns the receive completion.
  static Completion fill(PeerId from, WorkId recv_id, Bundle dst_buf, const Bundle& src) {
    std::memcpy(dst_buf.data(), src.data(), src.tail());
    dst_buf.set_tail(src.tail());
    Completion c;
    c.kind = CompletionKind::recv;
    c.peer = from;
    c.id = recv_id;
    c.length = static_cast<std::uint32_t>(src.tail());
    c.buffer = std::move(dst_buf);
    return c;
  }

  void send(Port& src, PeerId dst_id, Bundle bundle, WorkId id) {
    {
      std::lock_guard lock(src.mu);
      ++src.outstanding[dst_id];
    }
    auto dst = find(dst_id);
    if (!dst) {
      push(src, send_done(dst_id, id, std::move(bundle), CompletionStatus::link_error));
      return;
    }
    std::unique_lock lock(dst->mu);
    if (!dst->open) {
      lock.unlock();
      push(src, send_done(dst_id, id, std::move(bundle), CompletionStatus::link_error));
      return;
    }
    if (dst->posted.empty()) {
      dst->held.push_back({src.id, id, std::move(bundle)});
      return;
    }
    auto [recv_id, buf] = std::move(dst->posted.front());
    dst->posted.pop_front();
    if (buf.capacity() < bundle.tail()) {
      dst->posted.push_front({recv_id, std::move(buf)});
      lock.unlock();
      push(src, send_done(dst_id, id, std::move(bundle), CompletionStatus::link_error));
      return;
    }
    dst->cq.push_back(fill(src.id, recv_id, std::move(buf), bundle));
    lock.unlock();
    dst->cv.notify_one();
    push(src, send_done(dst_id, id, std::move(bundle), CompletionStatus::ok));
  }

  void post_recv(Port& port, Bundle buf, WorkId id) {
    std::unique_lock lock(port.mu);
    if (!port.open) return;
    if (port.held.empty()) {
      port.posted.emplace_back(id, std::move(buf));
      return;
    }
    Held h = std::move(port.held.front());
    port.held.pop_front();
    if (buf.capacity() < h.bundle.tail()) {
      lock.unlock();
      if (auto src = find(h.src)) {
        push(*src, send_done(port.id, h.id, std::move(h.bundle), CompletionStatus::link_error));
      }
      return;
    }
    port.cq.push_back(fill(h.src, id, std::move(buf), h.bundle));
    lock.unlock();
    port.cv.notify_one();
    if (auto src = find(h.src)) {
      push(*src, send_done(port.id, h.id, std::move(h.bundle), CompletionStatus::ok));
    }
  }

  void close(const std::shared_ptr<Port>& port) {
    std::deque<Held> orphans;
    {
      std::lock_guard lock(port->mu);
      port->open = false;
      orphans.swap(port->held);
      port->posted.clear();
    }
    for (auto& h : orphans) {
      if (auto src = find(h.src)) {
        push(*src, send_done(port->id, h.id, std::move(h.bundle), CompletionStatus::link_error));
      }
    }
    std::unique_lock lock(mu_);
    auto it = ports_.find(port->id);
    if (it != ports_.end() && it->second == port) ports_.erase(it);
  }

  mutable std::shared_mutex mu_;
  std::condition_variable_any registered_cv_;
  std::unordered_map<PeerId, std::shared_ptr<Port>> ports_;
};

class LoopbackFabric::LoopbackEndpoint final : public Endpoint {
 public:
  LoopbackEndpoint(std::shared_ptr<LoopbackFabric> fabric, std::shared_ptr<Port> port,
                   std::vector<PeerId> peers)
      : fabric_(std::move(fabric)), port_(std::move(port)), peers_(std::move(peers)) {}
  ~LoopbackEndpoint() override { fabric_->close(port_); }

  PeerId local_id() const override { return port_->id; }
  std::vector<PeerId> peers() const override { return peers_; }

  WorkId post_send(PeerId peer, Bundle bundle, WorkId id) override {
    if (bundle.empty()) throw usage_error("post_send of an empty bundle");
    fabric_->send(*port_, peer, std::move(bundle), id);
    return id;
  }
  using Endpoint::post_send;

  WorkId post_recv(Bundle buffer, WorkId id) override {
    buffer.clear();
    fabric_->post_recv(*port_, std::move(buffer), id);
    return id;
  }
  using Endpoint::post_recv;

  std::size_t poll(std::vector<Completion>& out, std::size_t max) override {
    std::lock_guard lock(port_->mu);
    std::size_t n = 0;
    while (n < max && !port_->cq.empty()) {
      out.push_back(std::move(port_->cq.front()));
      port_->cq.pop_front();
      ++n;
    }
    return n;
  }
  using Endpoint::poll;

  bool wait(Micros timeout) override {
    std::unique_lock lock(port_->mu);
    return port_->cv.wait_for(lock, timeout, [&] { return !port_->cq.empty(); });
  }

  std::size_t posted_recvs() const override {
    std::lock_guard lock(port_->mu);
    return port_->posted.size();
  }

  std::size_t pending_sends(PeerId peer) const override {
    std::lock_guard lock(port_->mu);
    auto it = port_->outstanding.find(peer);
    return it == port_->outstanding.end() ? 0 : it->second;
  }

  std::size_t held_bundles() const {
    std::lock_guard lock(port_->mu);
    return port_->held.size();
  }

 private:
  std::shared_ptr<LoopbackFabric> fabric_;
  std::shared_ptr<Port> port_;
  std::vector<PeerId> peers_;
};

inline std::unique_ptr<Endpoint> LoopbackFabric::open(PeerId id, std::vector<PeerId> peers) {
  auto port = std::make_shared<Port>(id);
  {
    std::unique_lock lock(mu_);
    auto [it, inserted] = ports_.emplace(id, port);
    if (!inserted) throw config_error("endpoint id " + std::to_string(id) + " is already registered");
  }
  registered_cv_.notify_all();
  return std::make_unique<LoopbackEndpoint>(shared_from_this(), std::move(port), std::move(peers));
}

/// Registers the endpoint and waits (barrier) until all configured peers
/// have registered too.
inline std::unique_ptr<Endpoint> connect_all(const std::shared_ptr<LoopbackFabric>& fabric,
                                             const TransportConfig& config) {
  std::vector<PeerId> ids;
  ids.reserve(config.peers.size());
  for (const auto& p : config.peers) ids.push_back(p.id);
  auto ep = fabric->open(config.self, ids);
  if (!fabric->wait_for(ids, config.connect_timeout)) {
    throw startup_error("loopback peers of endpoint " + std::to_string(config.self) +
                        " did not register within the connect timeout");
  }
  return ep;
}

}  // namespace buddy
