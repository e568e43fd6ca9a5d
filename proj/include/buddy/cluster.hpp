#pragma once

// All agents of a topology as threads in this process, linked by one
// loopback fabric. Ranks attach with connect().

#include <atomic>
#include <chrono>
#include <memory>
#include <thread>
#include <vector>

#include "buddy/agent.hpp"
#include "buddy/loopback.hpp"
#include "buddy/runtime.hpp"

namespace buddy {

class InlineCluster {
 public:
  InlineCluster(const Topology& topo, const AgentConfig& cfg, const Clock& clock = monotonic_clock())
      : topo_(topo), clock_(clock), fabric_(LoopbackFabric::create()) {
    cfg.validate();
    // Every agent endpoint exists before any agent can post to another.
    for (NodeId n = 0; n < topo_.num_nodes(); ++n) {
      std::vector<PeerId> peers;
      for (const auto& p : topo_.agent_transport(n).peers) peers.push_back(p.id);
      endpoints_.push_back(fabric_->open(topo_.agent_peer(n), peers));
    }
    for (NodeId n = 0; n < topo_.num_nodes(); ++n) {
      agents_.push_back(std::make_unique<Agent>(cfg, topo_, n, *endpoints_[n], clock_));
    }
  }

  ~InlineCluster() {
    stop();
    join();
  }

  InlineCluster(const InlineCluster&) = delete;
  InlineCluster& operator=(const InlineCluster&) = delete;

  /// Starts one driver thread per agent. Each waits until all of its
  /// peers are attached, then runs the agent's routing threads until
  /// termination. Peers missing after `attach_timeout` count as a link
  /// fault.
  void start(std::chrono::milliseconds attach_timeout = std::chrono::milliseconds(30000)) {
    exits_.assign(agents_.size(), AgentExit::stopped);
    for (std::size_t n = 0; n < agents_.size(); ++n) {
      threads_.emplace_back([this, n, attach_timeout] {
        std::vector<PeerId> ids;
        for (const auto& p : topo_.agent_transport(static_cast<NodeId>(n)).peers) ids.push_back(p.id);
        const auto deadline = std::chrono::steady_clock::now() + attach_timeout;
        while (!fabric_->wait_for(ids, std::chrono::milliseconds(20))) {
          if (stopping_.load()) return;
          if (std::chrono::steady_clock::now() >= deadline) {
            exits_[n] = AgentExit::link_fault;
            return;
          }
        }
        exits_[n] = agents_[n]->run();
      });
    }
  }

  std::vector<AgentExit> join() {
    for (auto& t : threads_)
      if (t.joinable()) t.join();
    threads_.clear();
    return exits_;
  }

  void stop() {
    stopping_.store(true);
    for (auto& a : agents_) a->request_stop();
  }

  Handle connect(Rank r, const RuntimeConfig& cfg) { return init(cfg, topo_, r, fabric_, clock_); }

  Agent& agent(NodeId n) { return *agents_.at(n); }
  std::size_t num_agents() const { return agents_.size(); }
  const Topology& topology() const { return topo_; }
  const std::shared_ptr<LoopbackFabric>& fabric() const { return fabric_; }

 private:
  Topology topo_;
  const Clock& clock_;
  std::shared_ptr<LoopbackFabric> fabric_;
  std::vector<std::unique_ptr<Endpoint>> endpoints_;
  std::vector<std::unique_ptr<Agent>> agents_;
  std::vector<std::thread> threads_;
  std::vector<AgentExit> exits_;
  std::atomic<bool> stopping_{false};
};

}  // namespace buddy
