#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "buddy/config.hpp"
#include "buddy/error.hpp"
#include "buddy/transport.hpp"
#include "buddy/wire.hpp"

namespace buddy {

using NodeId = std::uint32_t;

struct NodeSpec {
  NodeId id = 0;
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;  // agent listen port
  std::vector<Rank> ranks;
};

/// Node -> ranks placement plus agent addresses. Transport peer ids are
/// derived from it: agents take ids [0, nodes), rank r takes nodes + r.
class Topology {
 public:
  Topology() = default;

  explicit Topology(std::vector<NodeSpec> nodes) : nodes_(std::move(nodes)) {
    std::sort(nodes_.begin(), nodes_.end(), [](auto& a, auto& b) { return a.id < b.id; });
    std::size_t world = 0;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      if (nodes_[i].id != i) throw config_error("node ids must be 0.." + std::to_string(nodes_.size() - 1));
      world += nodes_[i].ranks.size();
    }
    node_of_.assign(world, kUnassigned);
    slot_of_.assign(world, 0);
    for (const auto& n : nodes_) {
      for (std::size_t s = 0; s < n.ranks.size(); ++s) {
        const Rank r = n.ranks[s];
        if (r >= world) {
          throw config_error("rank " + std::to_string(r) + " outside 0.." + std::to_string(world - 1) +
                             " (missing ranks?)");
        }
        if (node_of_[r] != kUnassigned) throw config_error("rank " + std::to_string(r) + " assigned twice");
        node_of_[r] = n.id;
      }
    }
    for (auto& n : nodes_) std::sort(n.ranks.begin(), n.ranks.end());
    for (const auto& n : nodes_) {
      for (std::size_t s = 0; s < n.ranks.size(); ++s) slot_of_[n.ranks[s]] = static_cast<std::uint32_t>(s);
    }
  }

  /// `nodes` nodes with `ranks_per_node` consecutive ranks each.
  static Topology uniform(std::size_t nodes, std::size_t ranks_per_node, const std::string& host = "127.0.0.1") {
    if (nodes == 0) throw config_error("topology needs at least one node");
    std::vector<NodeSpec> specs(nodes);
    for (std::size_t n = 0; n < nodes; ++n) {
      specs[n].id = static_cast<NodeId>(n);
      specs[n].host = host;
      for (std::size_t k = 0; k < ranks_per_node; ++k) {
        specs[n].ranks.push_back(static_cast<Rank>(n * ranks_per_node + k));
      }
    }
    return Topology(std::move(specs));
  }

  // node.<id>.address = host:port
  // node.<id>.ranks   = 0,1,4-7
  static Topology from_config(const KeyValueConfig& cfg) {
    std::vector<NodeSpec> specs;
    for (NodeId id = 0;; ++id) {
      const std::string prefix = "node." + std::to_string(id) + ".";
      if (!cfg.has(prefix + "ranks")) break;
      NodeSpec spec;
      spec.id = id;
      if (cfg.has(prefix + "address")) {
        const auto addr = cfg.get(prefix + "address");
        const auto colon = addr.rfind(':');
        if (colon == std::string::npos) throw config_error("address '" + addr + "' is not host:port");
        spec.host = addr.substr(0, colon);
        spec.port = KeyValueConfig::parse_number<std::uint16_t>(prefix + "address", addr.substr(colon + 1));
      }
      for (const auto& item : detail::split(cfg.get(prefix + "ranks"), ',')) {
        if (auto dash = item.find('-'); dash != std::string::npos) {
          auto lo = KeyValueConfig::parse_number<Rank>(prefix + "ranks", item.substr(0, dash));
          auto hi = KeyValueConfig::parse_number<Rank>(prefix + "ranks", item.substr(dash + 1));
          for (Rank r = lo; r <= hi; ++r) spec.ranks.push_back(r);
        } else {
          spec.ranks.push_back(KeyValueConfig::parse_number<Rank>(prefix + "ranks", item));
        }
      }
      specs.push_back(std::move(spec));
    }
    if (specs.empty()) throw config_error("config has no node.0.ranks entry");
    return Topology(std::move(specs));
  }

  void write_config(KeyValueConfig& cfg) const {
    for (const auto& n : nodes_) {
      const std::string prefix = "node." + std::to_string(n.id) + ".";
      cfg.set(prefix + "address", n.host + ":" + std::to_string(n.port));
      std::string ranks;
      for (Rank r : n.ranks) ranks += (ranks.empty() ? "" : ",") + std::to_string(r);
      cfg.set(prefix + "ranks", ranks);
    }
  }

  std::size_t num_nodes() const { return nodes_.size(); }
  std::size_t world_size() const { return node_of_.size(); }
  const NodeSpec& node(NodeId n) const { return nodes_.at(n); }
  NodeSpec& node(NodeId n) { return nodes_.at(n); }
  const std::vector<Rank>& ranks_on(NodeId n) const { return nodes_.at(n).ranks; }

  NodeId node_of(Rank r) const { return node_of_.at(r); }
  // Position of r within its node's sorted rank list.
  std::uint32_t local_slot(Rank r) const { return slot_of_.at(r); }

  PeerId agent_peer(NodeId n) const { return n; }
  PeerId rank_peer(Rank r) const { return static_cast<PeerId>(nodes_.size() + r); }
  bool is_agent_peer(PeerId p) const { return p < nodes_.size(); }
  Rank rank_of_peer(PeerId p) const { return static_cast<Rank>(p - nodes_.size()); }

  /// Agent n links to every other agent and to its own ranks.
  TransportConfig agent_transport(NodeId n) const {
    TransportConfig t;
    t.self = agent_peer(n);
    t.listen = PeerAddress{t.self, nodes_.at(n).host, nodes_.at(n).port};
    for (const auto& other : nodes_) {
      if (other.id != n) t.peers.push_back({agent_peer(other.id), other.host, other.port});
    }
    for (Rank r : ranks_on(n)) t.peers.push_back({rank_peer(r), {}, 0});
    return t;
  }

  TransportConfig rank_transport(Rank r) const {
    if (r >= world_size()) {
      throw config_error("rank " + std::to_string(r) + " >= world size " + std::to_string(world_size()));
    }
    TransportConfig t;
    t.self = rank_peer(r);
    const auto& n = nodes_.at(node_of(r));
    t.peers.push_back({agent_peer(n.id), n.host, n.port});
    return t;
  }

 private:
  static constexpr NodeId kUnassigned = 0xFFFFFFFFu;
  std::vector<NodeSpec> nodes_;
  std::vector<NodeId> node_of_;
  std::vector<std::uint32_t> slot_of_;
};

}  // namespace buddy
