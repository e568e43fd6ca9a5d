#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "buddy/error.hpp"
#include "buddy/topology.hpp"
#include "buddy/wire.hpp"

namespace buddy {

struct NextHop {
  enum class Kind : std::uint8_t { local, remote };
  Kind kind = Kind::local;
  std::uint32_t target = 0;  // local slot for `local`, node id for `remote`

  static NextHop local(std::uint32_t slot) { return {Kind::local, slot}; }
  static NextHop remote(NodeId node) { return {Kind::remote, node}; }
  bool is_local() const { return kind == Kind::local; }

  friend bool operator==(const NextHop&, const NextHop&) = default;
};

/// Precomputed destination rank -> next hop map for one node's agent. Each
/// distinct next hop gets a dense index (local ranks first, then remote
/// nodes in id order) used to address per-hop send buffers.
class RoutingTable {
 public:
  RoutingTable() = default;

  std::size_t world_size() const { return hop_of_rank_.size(); }
  NodeId self() const { return self_; }
  std::size_t num_hops() const { return hops_.size(); }
  std::size_t num_local() const { return local_ranks_.size(); }

  NextHop next_hop(Rank r) const { return hops_[hop_of_rank_.at(r)]; }
  std::uint32_t hop_index(Rank r) const { return hop_of_rank_[r]; }
  const NextHop& hop(std::uint32_t index) const { return hops_[index]; }
  const std::vector<NextHop>& hops() const { return hops_; }
  const std::vector<Rank>& local_ranks() const { return local_ranks_; }
  NodeId node_of(Rank r) const { return node_of_.at(r); }

 private:
  friend RoutingTable build_routing_table(const std::vector<std::vector<Rank>>&, NodeId);

  NodeId self_ = 0;
  std::vector<NextHop> hops_;
  std::vector<std::uint32_t> hop_of_rank_;
  std::vector<NodeId> node_of_;
  std::vector<Rank> local_ranks_;
};

/// `node_ranks[n]` lists the ranks hosted by node n. They must cover
/// 0..world_size-1 exactly once.
inline RoutingTable build_routing_table(const std::vector<std::vector<Rank>>& node_ranks, NodeId self) {
  if (self >= node_ranks.size()) throw config_error("self node " + std::to_string(self) + " not in topology");
  std::size_t world = 0;
  for (const auto& ranks : node_ranks) world += ranks.size();
  constexpr NodeId kNone = 0xFFFFFFFFu;
  RoutingTable t;
  t.self_ = self;
  t.node_of_.assign(world, kNone);
  for (NodeId n = 0; n < node_ranks.size(); ++n) {
    for (Rank r : node_ranks[n]) {
      if (r >= world) throw config_error("rank " + std::to_string(r) + " out of range; topology is missing ranks");
      if (t.node_of_[r] != kNone) throw config_error("rank " + std::to_string(r) + " listed twice");
      t.node_of_[r] = n;
    }
  }
  t.local_ranks_ = node_ranks[self];
  std::sort(t.local_ranks_.begin(), t.local_ranks_.end());
  for (std::uint32_t s = 0; s < t.local_ranks_.size(); ++s) t.hops_.push_back(NextHop::local(s));
  std::vector<std::uint32_t> remote_index(node_ranks.size(), 0);
  for (NodeId n = 0; n < node_ranks.size(); ++n) {
    if (n == self) continue;
    remote_index[n] = static_cast<std::uint32_t>(t.hops_.size());
    t.hops_.push_back(NextHop::remote(n));
  }
  t.hop_of_rank_.assign(world, 0);
  for (Rank r = 0; r < world; ++r) {
    const NodeId n = t.node_of_[r];
    if (n == self) {
      auto it = std::lower_bound(t.local_ranks_.begin(), t.local_ranks_.end(), r);
      t.hop_of_rank_[r] = static_cast<std::uint32_t>(it - t.local_ranks_.begin());
    } else {
      t.hop_of_rank_[r] = remote_index[n];
    }
  }
  return t;
}

inline RoutingTable build_routing_table(const Topology& topo, NodeId self) {
  std::vector<std::vector<Rank>> node_ranks;
  for (NodeId n = 0; n < topo.num_nodes(); ++n) node_ranks.push_back(topo.ranks_on(n));
  return build_routing_table(node_ranks, self);
}

}  // namespace buddy
