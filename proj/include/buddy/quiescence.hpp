#pragma once

// Global termination detection run by the agents. Agent 0 coordinates.
//
//  1. A rank sends LOCAL_DONE once it has voted to stop. When every local
//     rank has done so, its agent reports LOCAL_DONE to the coordinator.
//  2. Once all agents have reported, the coordinator runs probe rounds: a
//     PROBE goes to every agent, each agent probes its ranks, ranks ACK
//     with (sent, received, voted) and agents ACK the sums.
//  3. TERMINATE is broadcast once a round finds every rank voted,
//     sum(sent) == sum(received), and the previous round reported the same
//     sums. Counters only grow, so two identical balanced rounds mean no
//     message was in flight between them.

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "buddy/clock.hpp"
#include "buddy/control.hpp"
#include "buddy/topology.hpp"
#include "buddy/transport.hpp"

namespace buddy {

struct ControlSend {
  PeerId to = 0;
  ControlMessage msg;
};

/// Pure state machine; the caller delivers the returned sends and holds a
/// lock around every call.
class Quiescence {
 public:
  struct Totals {
    std::uint64_t sent = 0;
    std::uint64_t received = 0;
    bool voted = true;
    friend bool operator==(const Totals&, const Totals&) = default;
  };

  Quiescence(NodeId self, std::size_t num_agents, std::vector<PeerId> local_ranks,
             Micros probe_interval = Micros(500))
      : self_(self),
        num_agents_(num_agents),
        local_ranks_(std::move(local_ranks)),
        probe_interval_(probe_interval),
        agent_done_(num_agents, false) {}

  static constexpr PeerId kCoordinator = 0;

  bool is_coordinator() const { return self_ == kCoordinator; }
  bool terminated() const { return terminated_; }
  bool reported_done() const { return reported_; }
  std::uint32_t rounds() const { return round_; }
  std::size_t done_ranks() const { return done_ranks_.size(); }

  /// Call once after construction; a node without ranks is done at once.
  void start(TimePoint now, std::vector<ControlSend>& out) {
    now_ = now;
    maybe_report(out);
  }

  /// Drives round pacing on the coordinator.
  void tick(TimePoint now, std::vector<ControlSend>& out) {
    now_ = now;
    maybe_start_round(out);
  }

  /// A control record from transport peer `from`. Returns false when the
  /// message makes no sense for this agent (counted as a protocol fault).
  bool handle(PeerId from, bool from_rank, const ControlMessage& m, TimePoint now,
              std::vector<ControlSend>& out) {
    now_ = now;
    if (from_rank) {
      switch (m.op) {
        case ControlOp::local_done:
          if (!is_local(from)) return false;
          done_ranks_.insert(from);
          maybe_report(out);
          return true;
        case ControlOp::ack:
          return rank_ack(from, m, out);
        default:
          return false;
      }
    }
    switch (m.op) {
      case ControlOp::local_done:
        if (!is_coordinator() || from >= num_agents_) return false;
        agent_reported(static_cast<NodeId>(from), out);
        return true;
      case ControlOp::probe:
        if (from != kCoordinator) return false;
        probe(m.round, out);
        return true;
      case ControlOp::ack:
        if (!is_coordinator() || from >= num_agents_) return false;
        agent_ack(static_cast<NodeId>(from), m, out);
        return true;
      case ControlOp::terminate:
        if (from != kCoordinator) return false;
        terminate(out);
        return true;
    }
    return false;
  }

 private:
  bool is_local(PeerId p) const {
    for (PeerId r : local_ranks_)
      if (r == p) return true;
    return false;
  }

  // Routes a message to agent `to`, short-circuiting messages to self.
  void to_agent(NodeId to, const ControlMessage& m, std::vector<ControlSend>& out) {
    if (to == self_) {
      handle(self_, false, m, now_, out);
    } else {
      out.push_back({to, m});
    }
  }

  void maybe_report(std::vector<ControlSend>& out) {
    if (reported_ || done_ranks_.size() < local_ranks_.size()) return;
    reported_ = true;
    to_agent(kCoordinator, ControlMessage::local_done(), out);
  }

  void agent_reported(NodeId from, std::vector<ControlSend>& out) {
    if (!agent_done_[from]) {
      agent_done_[from] = true;
      ++agents_done_;
    }
    maybe_start_round(out);
  }

  void maybe_start_round(std::vector<ControlSend>& out) {
    if (!is_coordinator() || terminated_ || round_open_ || agents_done_ < num_agents_) return;
    if (round_ > 0 && now_ - round_started_ < probe_interval_) return;
    ++round_;
    round_open_ = true;
    round_started_ = now_;
    agent_acks_.clear();
    current_ = Totals{};
    for (NodeId a = 0; a < num_agents_; ++a) to_agent(a, ControlMessage::probe(round_), out);
  }

  void probe(std::uint32_t round, std::vector<ControlSend>& out) {
    probe_round_ = round;
    rank_acks_.clear();
    node_ = Totals{};
    if (local_ranks_.empty()) {
      to_agent(kCoordinator, ControlMessage::ack(round, 0, 0, true), out);
      return;
    }
    for (PeerId r : local_ranks_) out.push_back({r, ControlMessage::probe(round)});
  }

  bool rank_ack(PeerId from, const ControlMessage& m, std::vector<ControlSend>& out) {
    if (!is_local(from)) return false;
    if (m.round != probe_round_ || rank_acks_.count(from)) return true;  // stale
    rank_acks_.insert(from);
    node_.sent += m.sent;
    node_.received += m.received;
    node_.voted = node_.voted && m.voted;
    if (rank_acks_.size() == local_ranks_.size()) {
      to_agent(kCoordinator, ControlMessage::ack(probe_round_, node_.sent, node_.received, node_.voted), out);
    }
    return true;
  }

  void agent_ack(NodeId from, const ControlMessage& m, std::vector<ControlSend>& out) {
    if (!round_open_ || m.round != round_ || agent_acks_.count(from)) return;
    agent_acks_.insert(from);
    current_.sent += m.sent;
    current_.received += m.received;
    current_.voted = current_.voted && m.voted;
    if (agent_acks_.size() < num_agents_) return;
    round_open_ = false;
    const bool balanced = current_.voted && current_.sent == current_.received;
    if (balanced && have_previous_ && previous_ == current_) {
      for (NodeId a = 0; a < num_agents_; ++a) to_agent(a, ControlMessage::terminate(), out);
      return;
    }
    previous_ = current_;
    have_previous_ = balanced;
    maybe_start_round(out);
  }

  void terminate(std::vector<ControlSend>& out) {
    if (terminated_) return;
    terminated_ = true;
    for (PeerId r : local_ranks_) out.push_back({r, ControlMessage::terminate()});
  }

  NodeId self_;
  std::size_t num_agents_;
  std::vector<PeerId> local_ranks_;
  Micros probe_interval_;
  TimePoint now_{};

  std::set<PeerId> done_ranks_;
  bool reported_ = false;
  std::uint32_t probe_round_ = 0;
  std::set<PeerId> rank_acks_;
  Totals node_;

  std::vector<bool> agent_done_;
  std::size_t agents_done_ = 0;
  std::uint32_t round_ = 0;
  bool round_open_ = false;
  TimePoint round_started_{};
  std::set<NodeId> agent_acks_;
  Totals current_;
  Totals previous_;
  bool have_previous_ = false;
  bool terminated_ = false;
};

}  // namespace buddy
