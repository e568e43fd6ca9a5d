// Experiment driver.
//
//   buddy run    --config scenario.cfg [--output dir]
//   buddy sweep  --config scenario.cfg --axis remote_buf_size --values 4096,8192 [--output dir]
//   buddy scale  --config scenario.cfg --nodes 1,2,4 [--output dir]
//   buddy worker --config cluster.cfg --node N
//
// Exit status: 0 when every run matched its oracle, 1 when any did not,
// 2 on usage or configuration errors.

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "buddy/harness/driver.hpp"

using namespace buddy;
using namespace buddy::harness;

namespace {

void print_cells(const std::vector<Cell>& cells) {
  std::printf("%-16s %10s %8s %12s %10s %14s %14s %8s\n", "axis", "value", "status", "wall_s", "speedup",
              "remote_xfer_B", "local_xfer_B", "mc");
  for (const auto& c : cells) {
    std::printf("%-16s %10llu %8s %12.6f %10.3f %14.1f %14.1f %8.3f\n", c.axis.c_str(),
                static_cast<unsigned long long>(c.value), c.metrics.status().c_str(), c.metrics.mean("wall_time"),
                c.speedup, c.metrics.mean("mean_remote_transfer"), c.metrics.mean("mean_local_transfer"),
                c.metrics.mean("mc_ratio"));
    if (!c.metrics.ok()) std::printf("  %s\n", c.metrics.detail().c_str());
  }
}

// Runs the ranks of one node against an already running agent; reports go
// to stdout as JSON.
int run_worker(const KeyValueConfig& kv, NodeId node) {
  const auto topo = Topology::from_config(kv);
  const auto runtime = RuntimeConfig::from_config(kv);
  const auto spec = bench::WorkloadSpec::from_config(kv);
  if (node >= topo.num_nodes()) throw usage_error("node " + std::to_string(node) + " not in the topology");
  const auto& ranks = topo.ranks_on(node);
  std::vector<bench::WorkReport> reports(topo.world_size());
  run_rank_threads(ranks, [&](Rank r) {
    Handle h = init(runtime, topo, r);
    reports[r] = bench::run_workload(spec, h);
  });
  json out = json::array();
  for (Rank r : ranks) out.push_back({{"rank", r}, {"report", to_json(reports[r])}});
  std::cout << out.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Buddy experiment driver"};
  app.require_subcommand(1);
  std::string config, output = "results", axis;
  std::vector<std::uint64_t> values;
  std::vector<std::size_t> nodes;
  NodeId node = 0;

  auto* run = app.add_subcommand("run", "run one scenario");
  auto* sw = app.add_subcommand("sweep", "sweep one parameter");
  auto* scale = app.add_subcommand("scale", "weak scaling over node counts");
  auto* worker = app.add_subcommand("worker", "run one node's ranks against a running agent");
  for (auto* sub : {run, sw, scale, worker}) sub->add_option("--config", config, "key-value config file")->required();
  for (auto* sub : {run, sw, scale}) sub->add_option("--output", output, "report directory");
  sw->add_option("--axis", axis, "remote_buf_size, runtime_bufs or routing_threads")->required();
  sw->add_option("--values", values, "comma-separated values")->required()->delimiter(',');
  scale->add_option("--nodes", nodes, "comma-separated node counts")->required()->delimiter(',');
  worker->add_option("--node", node, "node id")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    const auto kv = KeyValueConfig::load(config);
    if (worker->parsed()) return run_worker(kv, node);
    const auto base = ScenarioConfig::from_config(kv);
    if (run->parsed()) {
      const auto m = run_cell(base);
      emit_report(output, m);
      print_cells({Cell{"", 0, m, 1.0}});
      return m.ok() ? 0 : 1;
    }
    const auto cells = sw->parsed() ? sweep(base, axis, values) : weak_scale(base, nodes);
    emit_report(output, cells);
    print_cells(cells);
    return all_ok(cells) ? 0 : 1;
  } catch (const config_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const usage_error& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
