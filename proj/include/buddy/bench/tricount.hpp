#pragma once

// Triangle counting by wedge queries. For every wedge v - u - w with
// u < v < w, the owner of u asks the owner of v whether edge (v, w) exists;
// the owner of v counts the hits. Each triangle is found exactly once.

#include <cstdint>
#include <unordered_set>
#include <vector>

#include "buddy/bench/graph.hpp"
#include "buddy/bench/workload.hpp"

namespace buddy::bench {

inline std::uint64_t edge_key(std::uint32_t a, std::uint32_t b) { return (std::uint64_t(a) << 32) | b; }

/// result: {triangles counted at this rank}.
inline WorkReport triangle_count(const Graph& g, Handle& h) {
  const std::size_t world = h.world_size();
  const Rank me = h.rank();
  // Lookup structure for the owned vertices, built with the input.
  std::unordered_set<std::uint64_t> edges;
  for (std::uint32_t v = me; v < g.n; v += static_cast<std::uint32_t>(world))
    for (auto k = g.offsets[v]; k < g.offsets[v + 1]; ++k) edges.insert(edge_key(v, g.adj[k]));

  Stopwatch sw;
  WorkReport rep;
  std::uint64_t count = 0;
  auto on = [&](std::span<const std::byte> m) {
    const auto v = get<std::uint32_t>(m.data());
    const auto w = get<std::uint32_t>(m.data() + 4);
    rep.local_bytes += sizeof(std::uint64_t);
    if (edges.count(edge_key(v, w))) {
      ++count;
      rep.local_bytes += 2 * sizeof(std::uint64_t);
    }
  };
  Messenger msg(h);
  std::byte payload[8];
  for (std::uint32_t u = me; u < g.n; u += static_cast<std::uint32_t>(world)) {
    const auto lo = g.offsets[u], hi = g.offsets[u + 1];
    for (auto a = lo; a < hi; ++a) {
      const auto v = g.adj[a];
      rep.local_bytes += sizeof(std::uint32_t);
      if (v <= u) continue;
      for (auto b = a + 1; b < hi; ++b) {
        rep.local_bytes += sizeof(std::uint32_t);
        put(payload, v);
        put(payload + 4, g.adj[b]);
        msg.send(owner_of(v, world), payload, on);
      }
    }
  }
  msg.quiesce(on);
  rep.result = {count};
  finish(rep, h, sw);
  return rep;
}

inline Graph tricount_graph(const WorkloadSpec& spec) {
  return random_graph(static_cast<std::uint32_t>(spec.scale), spec.seed, false);
}

inline WorkReport triangle_count(const WorkloadSpec& spec, Handle& h) { return triangle_count(tricount_graph(spec), h); }

/// Serial count by sorted-list intersection on the upper neighborhoods.
inline std::uint64_t triangle_reference(const Graph& g) {
  std::uint64_t total = 0;
  for (std::uint32_t u = 0; u < g.n; ++u) {
    for (auto a = g.offsets[u]; a < g.offsets[u + 1]; ++a) {
      const auto v = g.adj[a];
      if (v <= u) continue;
      auto x = a + 1, xe = g.offsets[u + 1];
      auto y = g.offsets[v], ye = g.offsets[v + 1];
      while (x < xe && y < ye) {
        if (g.adj[x] < g.adj[y]) {
          ++x;
        } else if (g.adj[y] < g.adj[x]) {
          ++y;
        } else {
          ++total;
          ++x;
          ++y;
        }
      }
    }
  }
  return total;
}

}  // namespace buddy::bench
