#pragma once

// Undirected random graphs in CSR form. Every rank builds the same graph
// from the seed, so the input does not depend on the rank count.

#include <algorithm>
#include <cstdint>
#include <random>
#include <tuple>
#include <vector>

#include "buddy/bench/workload.hpp"

namespace buddy::bench {

struct Graph {
  std::uint32_t n = 0;
  std::vector<std::uint64_t> offsets;  // n + 1
  std::vector<std::uint32_t> adj;      // sorted per vertex
  std::vector<std::uint32_t> weight;   // parallel to adj; empty when unweighted

  std::uint64_t degree(std::uint32_t v) const { return offsets[v + 1] - offsets[v]; }
  std::size_t num_edges() const { return adj.size() / 2; }
  bool weighted() const { return !weight.empty(); }

  struct Edge {
    std::uint32_t u, v, w;
  };

  /// Builds from an undirected edge list; self loops and duplicates are
  /// dropped (the first weight of a duplicate wins).
  static Graph from_edges(std::uint32_t n, std::vector<Edge> edges, bool weighted) {
    for (auto& e : edges)
      if (e.u > e.v) std::swap(e.u, e.v);
    std::stable_sort(edges.begin(), edges.end(),
                     [](const Edge& a, const Edge& b) { return std::tie(a.u, a.v) < std::tie(b.u, b.v); });
    std::vector<Edge> uniq;
    for (const auto& e : edges) {
      if (e.u == e.v || e.u >= n || e.v >= n) continue;
      if (!uniq.empty() && uniq.back().u == e.u && uniq.back().v == e.v) continue;
      uniq.push_back(e);
    }
    Graph g;
    g.n = n;
    g.offsets.assign(n + 1, 0);
    for (const auto& e : uniq) {
      ++g.offsets[e.u + 1];
      ++g.offsets[e.v + 1];
    }
    for (std::uint32_t v = 0; v < n; ++v) g.offsets[v + 1] += g.offsets[v];
    g.adj.resize(g.offsets[n]);
    if (weighted) g.weight.resize(g.offsets[n]);
    std::vector<std::uint64_t> fill(g.offsets.begin(), g.offsets.end() - 1);
    for (const auto& e : uniq) {
      const auto a = fill[e.u]++, b = fill[e.v]++;
      g.adj[a] = e.v;
      g.adj[b] = e.u;
      if (weighted) g.weight[a] = g.weight[b] = e.w;
    }
    for (std::uint32_t v = 0; v < n; ++v) {
      const auto lo = g.offsets[v], hi = g.offsets[v + 1];
      if (!weighted) {
        std::sort(g.adj.begin() + lo, g.adj.begin() + hi);
        continue;
      }
      std::vector<std::pair<std::uint32_t, std::uint32_t>> tmp;
      for (auto i = lo; i < hi; ++i) tmp.emplace_back(g.adj[i], g.weight[i]);
      std::sort(tmp.begin(), tmp.end());
      for (auto i = lo; i < hi; ++i) std::tie(g.adj[i], g.weight[i]) = tmp[i - lo];
    }
    return g;
  }
};

inline constexpr double kMeanDegree = 16.0;

/// Erdos-Renyi style graph: n * mean_degree / 2 uniformly drawn vertex
/// pairs, duplicates and self loops removed. Weights are uniform in 1..10.
inline Graph random_graph(std::uint32_t n, std::uint64_t seed, bool weighted, double mean_degree = kMeanDegree) {
  std::vector<Graph::Edge> edges;
  if (n >= 2) {
    auto rng = rank_rng(seed, kAnyRank);
    std::uniform_int_distribution<std::uint32_t> vertex(0, n - 1);
    std::uniform_int_distribution<std::uint32_t> w(1, 10);
    const auto m = static_cast<std::uint64_t>(static_cast<double>(n) * mean_degree / 2.0);
    edges.reserve(m);
    for (std::uint64_t i = 0; i < m; ++i) {
      const auto a = vertex(rng), b = vertex(rng);
      edges.push_back({a, b, weighted ? w(rng) : 1});
    }
  }
  return Graph::from_edges(n, std::move(edges), weighted);
}

}  // namespace buddy::bench
