// Routing agent as a standalone process.
//
//   buddy_agent <config> --node N [--metrics file]
//
// The config carries the topology (node.<id>.address, node.<id>.ranks) and
// the agent.* fields. Runs until global termination and writes the agent's
// counters as JSON to --metrics, or stdout.

#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "buddy/agent.hpp"
#include "buddy/harness/metrics.hpp"
#include "buddy/socket_transport.hpp"
#include "buddy/topology.hpp"

using namespace buddy;

int main(int argc, char** argv) {
  CLI::App app{"Buddy routing agent"};
  std::string config, metrics;
  NodeId node = 0;
  long connect_ms = 30000;
  app.add_option("config", config, "key-value config file")->required();
  app.add_option("--node", node, "node id this agent serves")->required();
  app.add_option("--metrics", metrics, "write counters here instead of stdout");
  app.add_option("--connect-timeout-ms", connect_ms, "time allowed to build the mesh");
  CLI11_PARSE(app, argc, argv);

  try {
    const auto kv = KeyValueConfig::load(config);
    const auto topo = Topology::from_config(kv);
    const auto cfg = AgentConfig::from_config(kv);
    if (node >= topo.num_nodes()) throw config_error("node " + std::to_string(node) + " not in the topology");
    auto tcfg = topo.agent_transport(node);
    tcfg.connect_timeout = std::chrono::milliseconds(connect_ms);
    tcfg.max_frame = std::max({tcfg.max_frame, cfg.remote_buf_size, cfg.local_buf_size});
    auto ep = connect_all(tcfg);
    Agent agent(cfg, topo, node, *ep);
    const auto exit = agent.run();
    auto j = harness::to_json(agent.stats());
    j["node"] = node;
    j["exit"] = static_cast<int>(exit);
    if (metrics.empty()) {
      std::cout << j.dump(2) << "\n";
    } else {
      std::ofstream out(metrics);
      out << j.dump(2) << "\n";
    }
    return exit == AgentExit::clean ? 0 : 1;
  } catch (const config_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
