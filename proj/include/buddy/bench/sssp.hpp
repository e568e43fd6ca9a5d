#pragma once

// Single-source shortest paths from vertex 0 by asynchronous label
// correcting: an improved tentative distance is stored and relaxed along
// every edge. Termination is the runtime's quiescence.

#include <cstdint>
#include <functional>
#include <limits>
#include <queue>
#include <vector>

#include "buddy/bench/graph.hpp"
#include "buddy/bench/workload.hpp"

namespace buddy::bench {

inline constexpr std::uint64_t kUnreachable = std::numeric_limits<std::uint64_t>::max();

/// result: distances of the owned vertices in local index order.
inline WorkReport sssp(const Graph& g, Handle& h, std::uint32_t source = 0) {
  const std::size_t world = h.world_size();
  const Rank me = h.rank();
  Stopwatch sw;
  WorkReport rep;
  constexpr auto kInf = std::numeric_limits<std::uint32_t>::max();
  std::vector<std::uint32_t> dist(owned_count(g.n, me, world), kInf);
  Messenger msg(h);
  std::byte payload[8];

  auto on = [&](std::span<const std::byte> m) {
    const auto v = get<std::uint32_t>(m.data());
    const auto d = get<std::uint32_t>(m.data() + 4);
    auto& slot = dist[local_index(v, world)];
    rep.local_bytes += sizeof(std::uint32_t);
    if (d >= slot) return;
    slot = d;
    rep.local_bytes += sizeof(std::uint32_t);
    for (auto k = g.offsets[v]; k < g.offsets[v + 1]; ++k) {
      rep.local_bytes += 2 * sizeof(std::uint32_t);
      put(payload, g.adj[k]);
      put(payload + 4, d + g.weight[k]);
      msg.post(owner_of(g.adj[k], world), payload);
    }
  };
  if (source < g.n && owner_of(source, world) == me) {
    put(payload, source);
    put(payload + 4, std::uint32_t{0});
    msg.post(me, payload);
  }
  msg.quiesce(on);

  rep.result.reserve(dist.size());
  for (auto d : dist) rep.result.push_back(d == kInf ? kUnreachable : d);
  finish(rep, h, sw);
  return rep;
}

inline Graph sssp_graph(const WorkloadSpec& spec) {
  return random_graph(static_cast<std::uint32_t>(spec.scale), spec.seed, true);
}

inline WorkReport sssp(const WorkloadSpec& spec, Handle& h) { return sssp(sssp_graph(spec), h); }

/// Binary-heap Dijkstra.
inline std::vector<std::uint64_t> dijkstra(const Graph& g, std::uint32_t source = 0) {
  std::vector<std::uint64_t> dist(g.n, kUnreachable);
  if (source >= g.n) return dist;
  using Item = std::pair<std::uint64_t, std::uint32_t>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
  dist[source] = 0;
  pq.push({0, source});
  while (!pq.empty()) {
    const auto [d, v] = pq.top();
    pq.pop();
    if (d != dist[v]) continue;
    for (auto k = g.offsets[v]; k < g.offsets[v + 1]; ++k) {
      const auto nd = d + g.weight[k];
      if (nd < dist[g.adj[k]]) {
        dist[g.adj[k]] = nd;
        pq.push({nd, g.adj[k]});
      }
    }
  }
  return dist;
}

inline std::vector<std::vector<std::uint64_t>> sssp_reference(const Graph& g, std::size_t world) {
  const auto dist = dijkstra(g);
  std::vector<std::vector<std::uint64_t>> out(world);
  for (std::uint32_t v = 0; v < g.n; ++v) out[owner_of(v, world)].push_back(dist[v]);
  return out;
}

}  // namespace buddy::bench
