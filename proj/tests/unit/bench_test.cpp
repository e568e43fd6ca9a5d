#include <gtest/gtest.h>

#include <algorithm>
#include <functional>
#include <map>
#include <thread>

#include "buddy/bench/registry.hpp"
#include "buddy/cluster.hpp"

using namespace buddy;
using namespace buddy::bench;

namespace {

AgentConfig agent_cfg() {
  AgentConfig a;
  a.routing_threads = 2;
  a.flush_timeout = Micros(200);
  a.idle_timeout = Micros(1000);
  return a;
}

// Runs `body` on every rank of an in-process cluster.
std::vector<WorkReport> run(std::size_t nodes, std::size_t ranks_per_node,
                            const std::function<WorkReport(Handle&)>& body, const AgentConfig& acfg = agent_cfg()) {
  InlineCluster c(Topology::uniform(nodes, ranks_per_node), acfg);
  c.start();
  const std::size_t world = nodes * ranks_per_node;
  std::vector<WorkReport> out(world);
  std::vector<std::thread> ts;
  RuntimeConfig rc;
  rc.flush_timeout = Micros(200);
  rc.recv_buf_size = std::max(rc.buf_size, acfg.local_buf_size);
  for (Rank r = 0; r < world; ++r) {
    ts.emplace_back([&, r] {
      auto h = c.connect(r, rc);
      out[r] = body(h);
    });
  }
  for (auto& t : ts) t.join();
  for (auto e : c.join()) EXPECT_EQ(e, AgentExit::clean);
  return out;
}

std::vector<WorkReport> run(std::size_t nodes, std::size_t rpn, const WorkloadSpec& spec) {
  return run(nodes, rpn, [&](Handle& h) { return run_workload(spec, h); });
}

WorkloadSpec spec_of(WorkloadKind k, std::uint64_t scale, std::uint64_t seed = 7) {
  WorkloadSpec s;
  s.kind = k;
  s.scale = scale;
  s.seed = seed;
  return s;
}

// Brute-force oracles, written against the graph structure only.
std::uint64_t brute_force_triangles(const Graph& g) {
  std::vector<std::vector<bool>> a(g.n, std::vector<bool>(g.n, false));
  for (std::uint32_t u = 0; u < g.n; ++u)
    for (auto k = g.offsets[u]; k < g.offsets[u + 1]; ++k) a[u][g.adj[k]] = true;
  std::uint64_t t = 0;
  for (std::uint32_t i = 0; i < g.n; ++i)
    for (std::uint32_t j = i + 1; j < g.n; ++j)
      if (a[i][j])
        for (std::uint32_t k = j + 1; k < g.n; ++k) t += a[i][k] && a[j][k];
  return t;
}

std::vector<std::uint64_t> bellman_ford(const Graph& g) {
  std::vector<std::uint64_t> d(g.n, kUnreachable);
  if (g.n) d[0] = 0;
  for (bool changed = true; changed;) {
    changed = false;
    for (std::uint32_t u = 0; u < g.n; ++u) {
      if (d[u] == kUnreachable) continue;
      for (auto k = g.offsets[u]; k < g.offsets[u + 1]; ++k) {
        if (d[u] + g.weight[k] < d[g.adj[k]]) {
          d[g.adj[k]] = d[u] + g.weight[k];
          changed = true;
        }
      }
    }
  }
  return d;
}

std::uint64_t total_of(const std::vector<WorkReport>& reps, std::size_t idx = 0) {
  std::uint64_t t = 0;
  for (auto& r : reps) t += r.result.at(idx);
  return t;
}

}  // namespace

TEST(Histogram, SingleRankMatchesTally) {
  auto spec = spec_of(WorkloadKind::histogram, 4);
  spec.updates = 8;
  auto reps = run(1, 1, spec);
  std::vector<std::uint64_t> tally(4, 0);
  auto rng = rank_rng(spec.seed, 0);
  std::uniform_int_distribution<std::uint64_t> d(0, 3);
  for (int i = 0; i < 8; ++i) ++tally[d(rng)];
  EXPECT_EQ(reps[0].result, tally);
}

TEST(Histogram, FourRanksConserveUpdates) {
  auto spec = spec_of(WorkloadKind::histogram, 1u << 12);
  spec.updates = 1u << 18;  // 2^20 updates overall
  auto reps = run(2, 2, spec);
  std::uint64_t sum = 0;
  for (auto& r : reps)
    for (auto c : r.result) sum += c;
  EXPECT_EQ(sum, 1u << 20);
}

TEST(Histogram, FourRanksMatchSerialOracle) {
  auto spec = spec_of(WorkloadKind::histogram, 1000, 11);
  spec.updates = 20000;
  auto reps = run(2, 2, spec);
  std::vector<std::uint64_t> tally(1000, 0);
  for (Rank r = 0; r < 4; ++r) {
    auto rng = rank_rng(spec.seed, r);
    std::uniform_int_distribution<std::uint64_t> d(0, 999);
    for (int i = 0; i < 20000; ++i) ++tally[d(rng)];
  }
  for (std::uint64_t b = 0; b < 1000; ++b) ASSERT_EQ(reps[b % 4].result.at(b / 4), tally[b]) << "bucket " << b;
  EXPECT_TRUE(verify(spec, reps).ok);
}

TEST(Transpose, IdentityPatternIsSymmetric) {
  const std::uint32_t n = 64;
  auto reps = run(2, 2, [&](Handle& h) {
    std::vector<Entry> es;
    for (std::uint32_t i = h.rank(); i < n; i += 4) es.push_back({i, i, 1});
    return sparse_transpose(LocalMatrix::from_entries(n, h.rank(), 4, es), h);
  });
  for (Rank r = 0; r < 4; ++r) {
    std::vector<std::uint64_t> want;
    for (std::uint32_t i = r; i < n; i += 4) want.insert(want.end(), {i, i, 1});
    EXPECT_EQ(reps[r].result, want);
  }
}

TEST(Transpose, MatchesDirectTranspose) {
  for (std::size_t nodes : {1, 2}) {
    const std::size_t rpn = nodes == 1 ? 1 : 2;
    const std::size_t world = nodes * rpn;
    auto spec = spec_of(WorkloadKind::transpose, 5000, 3);
    auto reps = run(nodes, rpn, spec);
    std::vector<std::tuple<std::uint64_t, std::uint64_t, std::uint64_t>> want, got;
    for (Rank r = 0; r < world; ++r)
      for (auto& e : random_matrix(spec, r, world).entries(r, world)) want.emplace_back(e.col, e.row, e.value);
    for (auto& rep : reps)
      for (std::size_t k = 0; k < rep.result.size(); k += 3)
        got.emplace_back(rep.result[k], rep.result[k + 1], rep.result[k + 2]);
    std::sort(want.begin(), want.end());
    std::sort(got.begin(), got.end());
    EXPECT_EQ(got, want) << world << " ranks";
    // Each rank holds only rows it owns, in canonical order.
    for (Rank r = 0; r < world; ++r) {
      const auto& res = reps[r].result;
      for (std::size_t k = 0; k < res.size(); k += 3) ASSERT_EQ(res[k] % world, r);
      std::vector<std::tuple<std::uint64_t, std::uint64_t, std::uint64_t>> mine;
      for (std::size_t k = 0; k < res.size(); k += 3) mine.emplace_back(res[k], res[k + 1], res[k + 2]);
      EXPECT_TRUE(std::is_sorted(mine.begin(), mine.end()));
    }
  }
}

TEST(Tricount, SmallCases) {
  Graph k3 = Graph::from_edges(3, {{0, 1, 1}, {1, 2, 1}, {0, 2, 1}}, false);
  auto reps = run(1, 1, [&](Handle& h) { return triangle_count(k3, h); });
  EXPECT_EQ(total_of(reps), 1u);
  Graph empty = Graph::from_edges(10, {}, false);
  reps = run(1, 2, [&](Handle& h) { return triangle_count(empty, h); });
  EXPECT_EQ(total_of(reps), 0u);
}

TEST(Tricount, MatchesBruteForce) {
  for (std::uint64_t seed : {1, 2, 3}) {
    auto spec = spec_of(WorkloadKind::tricount, 200, seed);
    const auto g = tricount_graph(spec);
    const auto want = brute_force_triangles(g);
    EXPECT_GT(want, 0u);
    auto reps = run(2, 2, spec);
    EXPECT_EQ(total_of(reps), want) << "seed " << seed;
  }
}

TEST(Sssp, SmallCases) {
  Graph one = Graph::from_edges(1, {}, true);
  auto reps = run(1, 1, [&](Handle& h) { return sssp(one, h); });
  EXPECT_EQ(reps[0].result, std::vector<std::uint64_t>{0});
  Graph path = Graph::from_edges(3, {{0, 1, 1}, {1, 2, 1}}, true);
  reps = run(1, 1, [&](Handle& h) { return sssp(path, h); });
  EXPECT_EQ(reps[0].result, (std::vector<std::uint64_t>{0, 1, 2}));
  Graph split = Graph::from_edges(4, {{0, 1, 3}}, true);
  reps = run(1, 2, [&](Handle& h) { return sssp(split, h); });
  EXPECT_EQ(reps[0].result, (std::vector<std::uint64_t>{0, kUnreachable}));
  EXPECT_EQ(reps[1].result, (std::vector<std::uint64_t>{3, kUnreachable}));
}

TEST(Sssp, MatchesShortestPathOracle) {
  auto spec = spec_of(WorkloadKind::sssp, 10000, 5);
  const auto g = sssp_graph(spec);
  const auto want = bellman_ford(g);
  auto reps = run(2, 2, spec);
  for (std::uint32_t v = 0; v < g.n; ++v) ASSERT_EQ(reps[v % 4].result.at(v / 4), want[v]) << "vertex " << v;
}

TEST(Synthetic, RatioTracksTarget) {
  for (double target : {0.5, 2.3, 72.0}) {
    auto spec = spec_of(WorkloadKind::synthetic, 20000);
    spec.mc_target = target;
    spec.stream_bytes = 8u << 20;
    auto reps = run(2, 2, spec);
    const double r = mc_ratio(reps);
    EXPECT_NEAR(r, target, 0.2 * target) << "target " << target;
    EXPECT_EQ(total_of(reps, 0), 4u * 20000);
  }
}

TEST(Synthetic, PureCommunication) {
  auto spec = spec_of(WorkloadKind::synthetic, 10000);
  auto reps = run(1, 2, spec);
  EXPECT_LT(mc_ratio(reps), 0.1);
  EXPECT_TRUE(verify(spec, reps).ok);
}

TEST(Bench, RatiosFollowWorkloadCategories) {
  std::map<WorkloadKind, double> r;
  WorkloadSpec h = spec_of(WorkloadKind::histogram, 1u << 14);
  WorkloadSpec t = spec_of(WorkloadKind::transpose, 20000);
  WorkloadSpec tc = spec_of(WorkloadKind::tricount, 2000);
  WorkloadSpec s = spec_of(WorkloadKind::sssp, 4000);
  WorkloadSpec y = spec_of(WorkloadKind::synthetic, 10000);
  y.mc_target = 72;
  y.stream_bytes = 8u << 20;
  for (const auto& sp : {h, t, tc, s, y}) r[sp.kind] = mc_ratio(run(2, 2, sp));
  EXPECT_GT(r[WorkloadKind::synthetic], r[WorkloadKind::transpose]);
  EXPECT_GT(r[WorkloadKind::transpose], r[WorkloadKind::histogram]);
  EXPECT_GT(r[WorkloadKind::histogram], r[WorkloadKind::sssp]);
  EXPECT_GT(r[WorkloadKind::histogram], r[WorkloadKind::tricount]);
  EXPECT_GT(r[WorkloadKind::transpose], 2.0);
  EXPECT_GT(r[WorkloadKind::histogram], 1.0);
  EXPECT_LT(r[WorkloadKind::histogram], 2.0);
  EXPECT_LT(r[WorkloadKind::sssp], 1.0);
  EXPECT_LT(r[WorkloadKind::tricount], 1.0);
  for (auto [k, v] : r) std::printf("%-10s mc=%.3f\n", to_string(k), v);
}

TEST(Bench, DigestIndependentOfAgentTuning) {
  for (auto kind : {WorkloadKind::histogram, WorkloadKind::transpose, WorkloadKind::tricount, WorkloadKind::sssp,
                    WorkloadKind::synthetic}) {
    auto spec = spec_of(kind, kind == WorkloadKind::transpose || kind == WorkloadKind::synthetic ? 3000 : 800);
    auto a = run(2, 2, spec);
    AgentConfig other;
    other.routing_threads = 1;
    other.remote_buf_size = 16384;
    other.local_buf_size = 16384;
    other.bufs_per_dest = 1;
    auto b = run(2, 2, [&](Handle& hd) { return run_workload(spec, hd); }, other);
    EXPECT_EQ(combined_digest(a), combined_digest(b)) << to_string(kind);
    EXPECT_TRUE(verify(spec, a).ok) << to_string(kind) << ": " << verify(spec, a).detail;
  }
}
