#pragma once

// The routing agent. Routing threads share the endpoint's receive queue,
// route each received bundle into their own per-hop send buffers and flush
// them on fill, flush_timeout and idle_timeout.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <memory>
#include <mutex>
#include <thread>
#include <vector>

#include "buddy/clock.hpp"
#include "buddy/control.hpp"
#include "buddy/error.hpp"
#include "buddy/quiescence.hpp"
#include "buddy/routing.hpp"
#include "buddy/send_state.hpp"
#include "buddy/settings.hpp"
#include "buddy/topology.hpp"
#include "buddy/transport.hpp"

namespace buddy {

struct AgentThreadStats {
  SendStats send;
  std::uint64_t ingress_bundles = 0;  // bundles received from local ranks
  std::uint64_t ingress_msgs = 0;
  std::uint64_t ingress_bytes = 0;          // app record bytes from local ranks
  std::uint64_t ingress_control_bytes = 0;  // control record bytes from local ranks
  std::uint64_t transit_bundles = 0;        // bundles received from remote agents
  std::uint64_t transit_bytes = 0;
  std::uint64_t local_bundles = 0;  // posted to local ranks
  std::uint64_t local_bytes = 0;
  std::uint64_t remote_bundles = 0;  // posted to remote agents
  std::uint64_t remote_bytes = 0;
  std::uint64_t link_faults = 0;
  std::uint64_t control_faults = 0;

  AgentThreadStats& operator+=(const AgentThreadStats& o) {
    send.routed_msgs += o.send.routed_msgs;
    send.routed_bytes += o.send.routed_bytes;
    send.blocked_msgs += o.send.blocked_msgs;
    send.corrupt_bundles += o.send.corrupt_bundles;
    send.protocol_faults += o.send.protocol_faults;
    send.posted_bundles += o.send.posted_bundles;
    send.posted_bytes += o.send.posted_bytes;
    ingress_bundles += o.ingress_bundles;
    ingress_msgs += o.ingress_msgs;
    ingress_bytes += o.ingress_bytes;
    ingress_control_bytes += o.ingress_control_bytes;
    transit_bundles += o.transit_bundles;
    transit_bytes += o.transit_bytes;
    local_bundles += o.local_bundles;
    local_bytes += o.local_bytes;
    remote_bundles += o.remote_bundles;
    remote_bytes += o.remote_bytes;
    link_faults += o.link_faults;
    control_faults += o.control_faults;
    return *this;
  }
};

struct AgentStats {
  std::vector<AgentThreadStats> threads;
  std::uint64_t control_bundles = 0;  // agent-originated control bundles
  std::uint64_t control_bytes = 0;
  std::uint32_t rounds = 0;

  AgentThreadStats total() const {
    AgentThreadStats t;
    for (const auto& s : threads) t += s;
    return t;
  }
};

enum class AgentExit : int { clean = 0, link_fault = 1, stopped = 2 };

class Agent {
 public:
  Agent(const AgentConfig& cfg, const Topology& topo, NodeId self, Endpoint& ep,
        const Clock& clock = monotonic_clock())
      : cfg_(validated(cfg)),
        topo_(topo),
        self_(self),
        table_(build_routing_table(topo_, self)),
        ep_(ep),
        clock_(clock),
        quiescence_(self, topo_.num_nodes(), rank_peers(topo_, self), cfg_.flush_timeout) {
    for (std::size_t t = 0; t < cfg_.routing_threads; ++t) {
      workers_.push_back(std::make_unique<Worker>(table_, cfg_));
    }
    const std::size_t bufsize = std::max(cfg_.remote_buf_size, cfg_.local_buf_size);
    const std::size_t nbufs = ep_.peers().size() * cfg_.recv_buffers_per_link();
    for (std::size_t i = 0; i < nbufs; ++i) ep_.post_recv(Bundle(bufsize), make_id(Kind::recv, 0, 0, 0));
    std::vector<ControlSend> out;
    {
      std::lock_guard lock(control_mu_);
      quiescence_.start(clock_.now(), out);
      terminated_.store(quiescence_.terminated(), std::memory_order_release);
    }
    send_control(out);
  }

  Agent(const Agent&) = delete;
  Agent& operator=(const Agent&) = delete;

  const AgentConfig& config() const { return cfg_; }
  const RoutingTable& table() const { return table_; }
  NodeId node() const { return self_; }

  /// One pass of routing thread `t`: harvest completions, route received
  /// bundles, replay blocklists, then flush on timeout and idleness. True
  /// when any completion was processed.
  bool step(std::size_t t) {
    Worker& w = *workers_.at(t);
    const TimePoint now = clock_.now();
    bool work = false;
    if (w.has_mail.load(std::memory_order_acquire)) {
      {
        std::lock_guard lock(w.mail_mu);
        w.mail_local.swap(w.mailbox);
        w.has_mail.store(false, std::memory_order_release);
      }
      for (auto& c : w.mail_local) complete_send(w, c);
      w.mail_local.clear();
      work = true;
    }
    w.scratch.clear();
    ep_.poll(w.scratch, cfg_.poll_batch);
    for (auto& c : w.scratch) {
      handle(t, w, c, now);
      work = true;
    }
    w.scratch.clear();
    w.state.replay_all(now);
    auto post = [&](std::uint32_t hop, std::uint32_t slot, Bundle&& b) { post_bundle(t, w, hop, slot, std::move(b)); };
    w.state.flush_ready(now, cfg_.flush_timeout, post);
    w.state.idle_flush(now, cfg_.idle_timeout, post);
    if (t == 0 && quiescence_.is_coordinator() && !terminated()) {
      std::vector<ControlSend> out;
      {
        std::lock_guard lock(control_mu_);
        quiescence_.tick(now, out);
      }
      send_control(out);
    }
    return work;
  }

  /// Runs the routing threads until global termination (and every send
  /// completed), a link fault, or request_stop().
  AgentExit run() {
    std::vector<std::thread> threads;
    for (std::size_t t = 1; t < workers_.size(); ++t) threads.emplace_back([this, t] { loop(t); });
    loop(0);
    for (auto& th : threads) th.join();
    if (faulted()) return AgentExit::link_fault;
    if (stop_.load()) return AgentExit::stopped;
    return AgentExit::clean;
  }

  void request_stop() { stop_.store(true, std::memory_order_release); }

  bool terminated() const { return terminated_.load(std::memory_order_acquire); }
  bool faulted() const { return faulted_.load(std::memory_order_acquire); }
  std::size_t control_in_flight() const { return control_in_flight_.load(std::memory_order_acquire); }

  /// Terminated and nothing left to send on thread `t`.
  bool done(std::size_t t) const {
    return terminated() && control_in_flight() == 0 && workers_.at(t)->state.drained();
  }
  bool done() const {
    for (std::size_t t = 0; t < workers_.size(); ++t)
      if (!done(t)) return false;
    return true;
  }

  // The accessors below read per-thread state; call them from the thread
  // driving step() or after run() has returned.
  AgentStats stats() const {
    AgentStats s;
    for (const auto& w : workers_) {
      AgentThreadStats t = w->stats;
      t.send = w->state.stats();
      s.threads.push_back(t);
    }
    s.control_bundles = control_bundles_.load();
    s.control_bytes = control_bytes_.load();
    std::lock_guard lock(control_mu_);
    s.rounds = quiescence_.rounds();
    return s;
  }

  std::size_t blocked_records() const {
    std::size_t n = 0;
    for (const auto& w : workers_) n += w->state.blocked_records();
    return n;
  }

  std::size_t resident_bytes() const {
    std::size_t n = 0;
    for (const auto& w : workers_) n += w->state.resident_bytes();
    return n;
  }

  const ThreadSendState& send_state(std::size_t t) const { return workers_.at(t)->state; }

 private:
  enum class Kind : std::uint64_t { app = 1, recv = 2, control = 3 };

  struct Worker {
    Worker(const RoutingTable& table, const AgentConfig& cfg) : state(table, cfg) {}
    ThreadSendState state;
    AgentThreadStats stats;
    std::mutex mail_mu;
    std::vector<Completion> mailbox;
    std::vector<Completion> mail_local;
    std::atomic<bool> has_mail{false};
    std::vector<Completion> scratch;
  };

  static AgentConfig validated(const AgentConfig& cfg) {
    cfg.validate();
    return cfg;
  }

  static std::vector<PeerId> rank_peers(const Topology& topo, NodeId self) {
    std::vector<PeerId> out;
    for (Rank r : topo.ranks_on(self)) out.push_back(topo.rank_peer(r));
    return out;
  }

  static WorkId make_id(Kind k, std::size_t thread, std::uint32_t hop, std::uint32_t slot) {
    return (static_cast<std::uint64_t>(k) << 60) | (static_cast<std::uint64_t>(thread) << 40) |
           (static_cast<std::uint64_t>(hop) << 16) | slot;
  }
  static Kind id_kind(WorkId id) { return static_cast<Kind>(id >> 60); }
  static std::size_t id_thread(WorkId id) { return (id >> 40) & 0xFFFFF; }
  static std::uint32_t id_hop(WorkId id) { return static_cast<std::uint32_t>((id >> 16) & 0xFFFFFF); }
  static std::uint32_t id_slot(WorkId id) { return static_cast<std::uint32_t>(id & 0xFFFF); }

  void loop(std::size_t t) {
    const auto bound = std::clamp<Micros>(cfg_.flush_timeout / 2, Micros(20), Micros(1000));
    while (!stop_.load(std::memory_order_acquire) && !faulted()) {
      if (done(t)) break;
      if (!step(t)) ep_.wait(bound);
    }
  }

  void link_fault(Worker& w) {
    ++w.stats.link_faults;
    if (!terminated()) faulted_.store(true, std::memory_order_release);
  }

  void complete_send(Worker& w, Completion& c) {
    if (!c.ok()) link_fault(w);
    w.state.complete(id_hop(c.id), id_slot(c.id), std::move(c.buffer));
  }

  void handle(std::size_t t, Worker& w, Completion& c, TimePoint now) {
    switch (id_kind(c.id)) {
      case Kind::recv: {
        if (!c.ok()) {
          link_fault(w);
          break;
        }
        const PeerId from = c.peer;
        const bool from_rank = !topo_.is_agent_peer(from);
        RecordCounts counts;
        if (validate_records(c.buffer.bytes(), &counts)) {
          if (from_rank) {
            ++w.stats.ingress_bundles;
            w.stats.ingress_msgs += counts.app;
            w.stats.ingress_bytes += counts.app_bytes;
            w.stats.ingress_control_bytes += counts.control_bytes;
          } else {
            ++w.stats.transit_bundles;
            w.stats.transit_bytes += c.buffer.tail();
          }
        }
        route(c.buffer.bytes(), w.state, now, [&](const Record& r) { on_control(w, from, from_rank, r, now); });
        ep_.post_recv(std::move(c.buffer), c.id);
        break;
      }
      case Kind::app: {
        const std::size_t owner = id_thread(c.id);
        if (owner == t) {
          complete_send(w, c);
        } else {
          Worker& o = *workers_.at(owner);
          std::lock_guard lock(o.mail_mu);
          o.mailbox.push_back(std::move(c));
          o.has_mail.store(true, std::memory_order_release);
        }
        break;
      }
      case Kind::control:
        if (!c.ok()) link_fault(w);
        control_in_flight_.fetch_sub(1, std::memory_order_acq_rel);
        break;
    }
  }

  void on_control(Worker& w, PeerId from, bool from_rank, const Record& r, TimePoint now) {
    const auto msg = decode_control(r.payload);
    if (!msg) {
      ++w.stats.control_faults;
      return;
    }
    std::vector<ControlSend> out;
    {
      std::lock_guard lock(control_mu_);
      if (!quiescence_.handle(from, from_rank, *msg, now, out)) ++w.stats.control_faults;
      if (quiescence_.terminated()) terminated_.store(true, std::memory_order_release);
    }
    send_control(out);
  }

  void send_control(const std::vector<ControlSend>& out) {
    for (const auto& s : out) {
      const auto payload = encode_control(s.msg);
      Bundle b(kHeaderSize + payload.size());
      b.append(kControlRank, payload);
      control_in_flight_.fetch_add(1, std::memory_order_acq_rel);
      control_bundles_.fetch_add(1, std::memory_order_relaxed);
      control_bytes_.fetch_add(b.tail(), std::memory_order_relaxed);
      ep_.post_send(s.to, std::move(b), make_id(Kind::control, 0, 0, 0));
    }
  }

  void post_bundle(std::size_t t, Worker& w, std::uint32_t hop, std::uint32_t slot, Bundle&& b) {
    const NextHop& nh = table_.hop(hop);
    PeerId peer;
    if (nh.is_local()) {
      peer = topo_.rank_peer(table_.local_ranks()[nh.target]);
      ++w.stats.local_bundles;
      w.stats.local_bytes += b.tail();
    } else {
      peer = topo_.agent_peer(nh.target);
      ++w.stats.remote_bundles;
      w.stats.remote_bytes += b.tail();
    }
    ep_.post_send(peer, std::move(b), make_id(Kind::app, t, hop, slot));
  }

  AgentConfig cfg_;
  Topology topo_;
  NodeId self_;
  RoutingTable table_;
  Endpoint& ep_;
  const Clock& clock_;
  std::vector<std::unique_ptr<Worker>> workers_;

  mutable std::mutex control_mu_;
  Quiescence quiescence_;
  std::atomic<bool> terminated_{false};
  std::atomic<bool> faulted_{false};
  std::atomic<bool> stop_{false};
  std::atomic<std::size_t> control_in_flight_{0};
  std::atomic<std::uint64_t> control_bundles_{0};
  std::atomic<std::uint64_t> control_bytes_{0};
};

}  // namespace buddy
