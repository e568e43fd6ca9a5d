#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <string>
#include <vector>

#include "buddy/bench/workload.hpp"
#include "buddy/config.hpp"
#include "buddy/error.hpp"
#include "buddy/settings.hpp"

namespace buddy::harness {

/// inline: agents are threads of the application process.
/// sidecar: one agent process per node, ranks in a separate worker process
/// per node, linked by loopback sockets.
enum class Placement { inline_agent, sidecar };

inline const char* to_string(Placement p) { return p == Placement::inline_agent ? "inline" : "sidecar"; }

inline Placement parse_placement(const std::string& s) {
  if (s == "inline") return Placement::inline_agent;
  if (s == "sidecar") return Placement::sidecar;
  throw config_error("placement must be inline or sidecar, got '" + s + "'");
}

struct ScenarioConfig {
  Placement placement = Placement::inline_agent;
  std::size_t nodes = 1;
  std::size_t ranks_per_node = 1;
  AgentConfig agent;
  RuntimeConfig runtime;
  bench::WorkloadSpec workload;
  double link_speed = 10e9;  // bits per second
  std::size_t repetitions = 5;
  std::chrono::milliseconds run_timeout{120000};

  std::size_t world_size() const { return nodes * ranks_per_node; }

  std::string name() const {
    return std::string(to_string(placement)) + "/" + std::to_string(nodes) + "x" + std::to_string(ranks_per_node);
  }

  void validate() const {
    if (nodes < 1) throw config_error("nodes must be >= 1");
    if (ranks_per_node < 1) throw config_error("ranks_per_node must be >= 1");
    if (repetitions < 1) throw config_error("repetitions must be >= 1");
    if (!(link_speed > 0)) throw config_error("link_speed must be > 0");
    agent.validate();
    runtime.validate();
    workload.validate();
    // Rank bundles must fit the agent's buffers whole, and agent bundles
    // must fit the ranks' receive buffers.
    if (runtime.buf_size > std::min(agent.local_buf_size, agent.remote_buf_size)) {
      throw config_error("runtime.buf_size must not exceed agent.local_buf_size or agent.remote_buf_size");
    }
    if (runtime.receive_capacity() < agent.local_buf_size) {
      throw config_error("runtime.recv_buf_size must be >= agent.local_buf_size");
    }
  }

  static ScenarioConfig from_config(const KeyValueConfig& cfg) {
    ScenarioConfig s;
    s.placement = parse_placement(cfg.get("placement", to_string(s.placement)));
    s.nodes = cfg.get_number("nodes", s.nodes);
    s.ranks_per_node = cfg.get_number("ranks_per_node", s.ranks_per_node);
    s.agent = AgentConfig::from_config(cfg);
    s.runtime = RuntimeConfig::from_config(cfg);
    if (!cfg.has("runtime.recv_buf_size")) s.runtime.recv_buf_size = std::max(s.runtime.buf_size, s.agent.local_buf_size);
    s.workload = bench::WorkloadSpec::from_config(cfg);
    s.link_speed = cfg.get_number("link_speed", s.link_speed);
    s.repetitions = cfg.get_number("repetitions", s.repetitions);
    s.run_timeout = std::chrono::milliseconds(cfg.get_number<std::int64_t>("run_timeout_ms", s.run_timeout.count()));
    s.validate();
    return s;
  }

  void write(KeyValueConfig& cfg) const {
    cfg.set("placement", to_string(placement));
    cfg.set("nodes", std::to_string(nodes));
    cfg.set("ranks_per_node", std::to_string(ranks_per_node));
    agent.write(cfg);
    runtime.write(cfg);
    workload.write(cfg);
    cfg.set("link_speed", std::to_string(link_speed));
    cfg.set("repetitions", std::to_string(repetitions));
    cfg.set("run_timeout_ms", std::to_string(run_timeout.count()));
  }
};

inline const std::vector<std::string>& sweep_axes() {
  static const std::vector<std::string> axes = {"remote_buf_size", "runtime_bufs", "routing_threads"};
  return axes;
}

/// Sets a sweepable parameter. The rank receive size is raised with the
/// agent's buffers so every cell stays a valid configuration.
inline void set_axis(ScenarioConfig& cfg, const std::string& axis, std::uint64_t value) {
  if (axis == "remote_buf_size") {
    cfg.agent.remote_buf_size = value;
  } else if (axis == "runtime_bufs") {
    cfg.runtime.runtime_bufs = value;
  } else if (axis == "routing_threads") {
    cfg.agent.routing_threads = value;
  } else {
    throw usage_error("unknown sweep axis '" + axis + "' (remote_buf_size, runtime_bufs, routing_threads)");
  }
  cfg.runtime.recv_buf_size = std::max<std::size_t>(cfg.runtime.receive_capacity(), cfg.agent.local_buf_size);
}

}  // namespace buddy::harness
