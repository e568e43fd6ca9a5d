#pragma once

// Application-facing runtime. Aggregates outgoing messages into bundles for
// the node's agent and hands out received messages. Nothing here blocks on
// network progress except wait() and finalize().

#include <cstdint>
#include <deque>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "buddy/clock.hpp"
#include "buddy/control.hpp"
#include "buddy/error.hpp"
#include "buddy/loopback.hpp"
#include "buddy/settings.hpp"
#include "buddy/socket_transport.hpp"
#include "buddy/topology.hpp"
#include "buddy/transport.hpp"
#include "buddy/wire.hpp"

namespace buddy {

class link_fault : public error {
 public:
  using error::error;
};

struct RuntimeStats {
  std::uint64_t sent_msgs = 0;
  std::uint64_t sent_bytes = 0;  // header + payload of every accepted send
  std::uint64_t received_msgs = 0;
  std::uint64_t received_bytes = 0;
  std::uint64_t bundles_sent = 0;
  std::uint64_t bundle_bytes_sent = 0;
  std::uint64_t bundles_received = 0;
  std::uint64_t bundle_bytes_received = 0;
  std::uint64_t control_bytes_sent = 0;
  std::uint64_t corrupt_bundles = 0;

  double mean_send_transfer() const {
    return bundles_sent ? static_cast<double>(bundle_bytes_sent) / static_cast<double>(bundles_sent) : 0.0;
  }
  double mean_recv_transfer() const {
    return bundles_received ? static_cast<double>(bundle_bytes_received) / static_cast<double>(bundles_received)
                            : 0.0;
  }
};

/// One rank's connection to its agent. Single-threaded; may be moved
/// between threads.
class Handle {
 public:
  Handle(const RuntimeConfig& cfg, Rank rank, std::size_t world_size, PeerId agent,
         std::unique_ptr<Endpoint> ep, const Clock& clock = monotonic_clock())
      : cfg_(checked(cfg)), rank_(rank), world_(world_size), agent_(agent), ep_(std::move(ep)), clock_(&clock) {
    if (rank >= world_size) {
      throw config_error("rank " + std::to_string(rank) + " >= world size " + std::to_string(world_size));
    }
    for (std::size_t i = 0; i < cfg_.runtime_bufs; ++i) idle_.emplace_back(cfg_.buf_size);
    for (std::size_t i = 0; i < cfg_.runtime_bufs; ++i) ep_->post_recv(Bundle(cfg_.receive_capacity()));
  }

  Handle(const Handle&) = delete;
  Handle& operator=(const Handle&) = delete;
  Handle(Handle&&) = default;

  Rank rank() const { return rank_; }
  std::size_t world_size() const { return world_; }
  const RuntimeConfig& config() const { return cfg_; }
  Endpoint& endpoint() { return *ep_; }

  /// Appends one message. False only when every send bundle is in flight;
  /// poll() and retry.
  bool send(Rank dst, std::span<const std::byte> payload) {
    if (dst >= world_) {
      throw usage_error("destination " + std::to_string(dst) + " >= world size " + std::to_string(world_));
    }
    if (payload.size() > cfg_.max_payload()) {
      throw oversize_message("payload of " + std::to_string(payload.size()) + " bytes exceeds " +
                             std::to_string(cfg_.max_payload()));
    }
    Bundle* b = room_for(kHeaderSize + payload.size());
    if (!b) return false;
    b->append(dst, payload);
    ++stats_.sent_msgs;
    stats_.sent_bytes += kHeaderSize + payload.size();
    voted_ = false;
    return true;
  }

  bool send(Rank dst, std::string_view payload) { return send(dst, as_bytes(payload)); }

  /// Copies pre-encoded records (a bundle body) into the send path. All or
  /// nothing; false when no bundle is free. Control records are rejected.
  bool send_bundle(std::span<const std::byte> records) {
    RecordCounts counts;
    if (!validate_records(records, &counts)) throw corrupt_bundle("send_bundle: malformed records");
    if (counts.control) throw usage_error("send_bundle: control records are reserved");
    if (records.size() > cfg_.buf_size) throw oversize_message("send_bundle: records exceed buf_size");
    for (const auto& r : RecordRange(records)) {
      if (r.dst >= world_) throw usage_error("send_bundle: destination out of range");
    }
    Bundle* b = room_for(records.size());
    if (!b) return false;
    b->append_raw(records);
    stats_.sent_msgs += counts.app;
    stats_.sent_bytes += counts.app_bytes;
    if (counts.app) voted_ = false;
    return true;
  }

  /// Posts the open bundle if it holds anything.
  void flush() {
    if (open_ && !open_->empty()) post_open();
  }

  /// Harvests completions, handles control records, applies the runtime
  /// flush_timeout and sends pending control replies. Returns the number of
  /// newly delivered application messages.
  std::size_t poll() {
    const std::size_t delivered = harvest();
    pump_control();
    check_link();
    return delivered;
  }

  /// Next delivered payload, viewed in place. Valid until the next call.
  std::optional<std::span<const std::byte>> recv_next() {
    if (release_pending_) {
      release_front();
    }
    if (!retained_.empty()) {
      current_copy_ = std::move(retained_.front());
      retained_.pop_front();
      return std::span<const std::byte>(current_copy_);
    }
    while (!ready_.empty()) {
      auto& rb = ready_.front();
      while (rb.offset < rb.bundle.tail()) {
        const auto* p = rb.bundle.data() + rb.offset;
        const std::uint32_t size = detail::load_le32(p);
        const Rank dst = detail::load_le32(p + 4);
        rb.offset += kHeaderSize + size;
        if (dst == kControlRank) continue;
        --rb.remaining;
        --unconsumed_;
        ++stats_.received_msgs;
        stats_.received_bytes += kHeaderSize + size;
        voted_ = false;
        if (rb.remaining == 0) release_pending_ = true;
        return std::span<const std::byte>(p + kHeaderSize, size);
      }
      release_front();
    }
    return std::nullopt;
  }

  /// Copy-out variant.
  bool recv_next(std::vector<std::byte>& out) {
    auto m = recv_next();
    if (!m) return false;
    out.assign(m->begin(), m->end());
    return true;
  }

  /// Raw bundle access: the next received bundle with its app records not
  /// yet consumed through recv_next. Must be returned via release_bundle().
  std::optional<Bundle> take_bundle() {
    if (release_pending_) release_front();
    if (ready_.empty() || ready_.front().offset != 0) return std::nullopt;
    auto rb = std::move(ready_.front());
    ready_.pop_front();
    RecordCounts counts;
    validate_records(rb.bundle.bytes(), &counts);
    unconsumed_ -= rb.remaining;
    stats_.received_msgs += counts.app;
    stats_.received_bytes += counts.app_bytes;
    if (counts.app) voted_ = false;
    return std::move(rb.bundle);
  }

  void release_bundle(Bundle b) { ep_->post_recv(std::move(b)); }

  /// Votes to stop and reports whether global termination has been
  /// confirmed. The vote holds only while this rank has no unconsumed
  /// messages; any later send or receive withdraws it.
  bool try_terminate() {
    harvest();
    if (!terminated_ && unconsumed_ == 0) {
      flush();
      voted_ = true;
      if (!done_sent_) {
        done_sent_ = true;
        pending_control_.push_back(ControlMessage::local_done());
      }
    }
    pump_control();
    check_link();
    return terminated_;
  }

  bool terminated() const { return terminated_; }

  /// Flushes, votes and polls until global termination. Messages arriving
  /// meanwhile are kept for recv_next(). Raises timeout_error after
  /// config().finalize_timeout.
  RuntimeStats finalize() {
    const auto deadline = SteadyClock::now() + cfg_.finalize_timeout;
    retain_ = true;
    while (!ready_.empty() || release_pending_) drain_front_into_retained();
    while (!try_terminate()) {
      if (SteadyClock::now() >= deadline) {
        throw timeout_error("rank " + std::to_string(rank_) + ": no global quiescence within " +
                            std::to_string(cfg_.finalize_timeout.count()) + " ms (sent " +
                            std::to_string(stats_.sent_msgs) + ", received " + std::to_string(stats_.received_msgs) +
                            ", in flight " + std::to_string(in_flight_) + ", probes answered " +
                            std::to_string(acks_sent_) + ")");
      }
      wait(Micros(200));
    }
    return stats_;
  }

  /// Blocks until a completion is pending or `timeout` passes.
  bool wait(Micros timeout) { return ep_->wait(timeout); }

  std::size_t in_flight() const { return in_flight_; }
  std::size_t idle_bundles() const { return idle_.size(); }
  std::size_t unconsumed() const { return unconsumed_; }
  std::size_t open_bytes() const { return open_ ? open_->tail() : 0; }
  bool voted() const { return voted_; }
  const RuntimeStats& stats() const { return stats_; }

 private:
  struct Received {
    Bundle bundle;
    std::size_t offset = 0;
    std::size_t remaining = 0;
  };

  static RuntimeConfig checked(const RuntimeConfig& cfg) {
    cfg.validate();
    return cfg;
  }

  std::size_t harvest() {
    scratch_.clear();
    ep_->poll(scratch_, 64);
    std::size_t delivered = 0;
    for (auto& c : scratch_) {
      if (!c.ok()) {
        link_failed_ = true;
        if (c.kind == CompletionKind::send) {
          --in_flight_;
          idle_.push_back(std::move(c.buffer));
        }
        continue;
      }
      if (c.kind == CompletionKind::send) {
        --in_flight_;
        c.buffer.clear();
        idle_.push_back(std::move(c.buffer));
      } else {
        delivered += absorb(std::move(c.buffer));
      }
    }
    scratch_.clear();
    if (open_ && !open_->empty() && clock_->now() - opened_at_ >= cfg_.flush_timeout) post_open();
    return delivered;
  }

  void check_link() const {
    if (link_failed_ && !terminated_) throw link_fault("rank " + std::to_string(rank_) + ": link to agent failed");
  }

  Bundle* room_for(std::size_t bytes) {
    if (open_ && open_->free_space() >= bytes) return &*open_;
    if (open_) {
      if (!open_->empty()) post_open();
      else {
        idle_.push_back(std::move(*open_));
        open_.reset();
      }
    }
    if (idle_.empty()) return nullptr;
    open_.emplace(std::move(idle_.back()));
    idle_.pop_back();
    opened_at_ = clock_->now();
    return &*open_;
  }

  void post_open() {
    ++stats_.bundles_sent;
    stats_.bundle_bytes_sent += open_->tail();
    ++in_flight_;
    ep_->post_send(agent_, std::move(*open_));
    open_.reset();
  }

  std::size_t absorb(Bundle b) {
    ++stats_.bundles_received;
    stats_.bundle_bytes_received += b.tail();
    RecordCounts counts;
    if (!validate_records(b.bytes(), &counts)) {
      ++stats_.corrupt_bundles;
      ep_->post_recv(std::move(b));
      return 0;
    }
    if (counts.control) {
      for (const auto& r : b.records()) {
        if (!r.is_control()) continue;
        if (auto m = decode_control(r.payload)) {
          if (m->op == ControlOp::probe) pending_probe_ = m->round;
          if (m->op == ControlOp::terminate) terminated_ = true;
        }
      }
    }
    if (counts.app == 0) {
      ep_->post_recv(std::move(b));
      return 0;
    }
    if (retain_) {
      for (const auto& r : b.records()) {
        if (r.is_control()) continue;
        retained_.emplace_back(r.payload.begin(), r.payload.end());
        ++stats_.received_msgs;
        stats_.received_bytes += r.wire_size();
      }
      voted_ = false;
      ep_->post_recv(std::move(b));
      return counts.app;
    }
    unconsumed_ += counts.app;
    ready_.push_back({std::move(b), 0, counts.app});
    return counts.app;
  }

  void release_front() {
    release_pending_ = false;
    if (ready_.empty()) return;
    auto rb = std::move(ready_.front());
    ready_.pop_front();
    unconsumed_ -= rb.remaining;
    ep_->post_recv(std::move(rb.bundle));
  }

  void drain_front_into_retained() {
    if (release_pending_) {
      release_front();
      return;
    }
    auto& rb = ready_.front();
    for (const auto& r : RecordRange(rb.bundle.bytes().subspan(rb.offset))) {
      if (r.is_control()) continue;
      retained_.emplace_back(r.payload.begin(), r.payload.end());
      ++stats_.received_msgs;
      stats_.received_bytes += r.wire_size();
    }
    release_front();
  }

  // Control records share the send bundles. An ACK reads the counters at
  // the moment it is written.
  void pump_control() {
    if (pending_probe_) {
      pending_control_.push_back(
          ControlMessage::ack(*pending_probe_, stats_.sent_msgs, stats_.received_msgs, voted_));
      pending_probe_.reset();
    }
    while (!pending_control_.empty()) {
      const auto payload = encode_control(pending_control_.front());
      Bundle* b = room_for(kHeaderSize + payload.size());
      if (!b) return;
      b->append(kControlRank, payload);
      stats_.control_bytes_sent += kHeaderSize + payload.size();
      if (pending_control_.front().op == ControlOp::ack) ++acks_sent_;
      pending_control_.pop_front();
      post_open();
    }
  }

  RuntimeConfig cfg_;
  Rank rank_;
  std::size_t world_;
  PeerId agent_;
  std::unique_ptr<Endpoint> ep_;
  const Clock* clock_;

  std::vector<Bundle> idle_;
  std::optional<Bundle> open_;
  TimePoint opened_at_{};
  std::size_t in_flight_ = 0;

  std::deque<Received> ready_;
  bool release_pending_ = false;
  std::size_t unconsumed_ = 0;
  bool retain_ = false;
  std::deque<std::vector<std::byte>> retained_;
  std::vector<std::byte> current_copy_;

  std::optional<std::uint32_t> pending_probe_;
  std::deque<ControlMessage> pending_control_;
  bool voted_ = false;
  bool done_sent_ = false;
  bool terminated_ = false;
  bool link_failed_ = false;
  std::uint64_t acks_sent_ = 0;

  std::vector<Completion> scratch_;
  RuntimeStats stats_;
};

/// Connects rank `rank` to its node's agent over the in-process fabric.
inline Handle init(const RuntimeConfig& cfg, const Topology& topo, Rank rank,
                   const std::shared_ptr<LoopbackFabric>& fabric, const Clock& clock = monotonic_clock(),
                   std::chrono::milliseconds connect_timeout = std::chrono::milliseconds(10000)) {
  auto tcfg = topo.rank_transport(rank);
  tcfg.connect_timeout = connect_timeout;
  auto ep = connect_all(fabric, tcfg);
  return Handle(cfg, rank, topo.world_size(), topo.agent_peer(topo.node_of(rank)), std::move(ep), clock);
}

/// Connects rank `rank` to its node's agent over a stream socket.
inline Handle init(const RuntimeConfig& cfg, const Topology& topo, Rank rank, const Clock& clock = monotonic_clock(),
                   std::chrono::milliseconds connect_timeout = std::chrono::milliseconds(10000)) {
  auto tcfg = topo.rank_transport(rank);
  tcfg.connect_timeout = connect_timeout;
  tcfg.max_frame = std::max<std::size_t>(tcfg.max_frame, cfg.receive_capacity());
  std::unique_ptr<Endpoint> ep = connect_all(tcfg);
  return Handle(cfg, rank, topo.world_size(), topo.agent_peer(topo.node_of(rank)), std::move(ep), clock);
}

}  // namespace buddy
