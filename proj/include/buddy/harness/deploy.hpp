#pragma once

// Launches one repetition of a scenario and collects its RunRecord.
//
// inline:  agents run as threads of this process over the loopback fabric;
//          every rank is a thread.
// sidecar: per node, one forked agent process and one forked worker process
//          holding that node's ranks as threads, all linked by loopback TCP.
//          Children report through JSON files in a scratch directory.

#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <csignal>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "buddy/agent.hpp"
#include "buddy/bench/registry.hpp"
#include "buddy/cluster.hpp"
#include "buddy/harness/metrics.hpp"
#include "buddy/harness/scenario.hpp"
#include "buddy/runtime.hpp"
#include "buddy/socket_transport.hpp"
#include "buddy/topology.hpp"

namespace buddy::harness {

inline const char* to_string(AgentExit e) {
  switch (e) {
    case AgentExit::clean: return "clean";
    case AgentExit::link_fault: return "link fault";
    case AgentExit::stopped: return "stopped";
  }
  return "?";
}

/// Runs `body(rank)` on one thread per rank and rethrows the first failure
/// after all threads have joined. `on_error` runs once, at the first failure.
inline void run_rank_threads(const std::vector<Rank>& ranks, const std::function<void(Rank)>& body,
                             const std::function<void()>& on_error = {}) {
  std::mutex mu;
  std::exception_ptr first;
  std::vector<std::thread> threads;
  threads.reserve(ranks.size());
  for (Rank r : ranks) {
    threads.emplace_back([&, r] {
      try {
        body(r);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!first) {
          first = std::current_exception();
          if (on_error) on_error();
        }
      }
    });
  }
  for (auto& t : threads) t.join();
  if (first) std::rethrow_exception(first);
}

inline RunRecord run_inline(const ScenarioConfig& cfg) {
  cfg.validate();
  const auto topo = Topology::uniform(cfg.nodes, cfg.ranks_per_node);
  const std::size_t world = topo.world_size();
  RunRecord rec;
  rec.reports.resize(world);
  rec.ranks.resize(world);

  InlineCluster cluster(topo, cfg.agent);
  cluster.start();
  std::vector<Rank> ranks(world);
  for (Rank r = 0; r < world; ++r) ranks[r] = r;
  try {
    run_rank_threads(
        ranks,
        [&](Rank r) {
          Handle h = cluster.connect(r, cfg.runtime);
          rec.reports[r] = bench::run_workload(cfg.workload, h);
          rec.ranks[r] = h.stats();
        },
        [&] { cluster.stop(); });
  } catch (...) {
    cluster.stop();
    cluster.join();
    throw;
  }
  const auto exits = cluster.join();
  for (std::size_t n = 0; n < exits.size(); ++n) {
    if (exits[n] != AgentExit::clean) {
      throw error("agent " + std::to_string(n) + " exited: " + to_string(exits[n]));
    }
  }
  for (NodeId n = 0; n < cluster.num_agents(); ++n) rec.agents.push_back(cluster.agent(n).stats());
  return rec;
}

namespace detail {

inline void write_json(const std::filesystem::path& p, const json& j) {
  const auto tmp = p.string() + ".part";
  {
    std::ofstream out(tmp);
    out << j.dump();
    if (!out) throw error("cannot write " + tmp);
  }
  std::filesystem::rename(tmp, p);
}

inline json read_json(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw error("child left no report at " + p.string());
  return json::parse(in);
}

/// Runs `body` in a forked child. The child never returns: it writes
/// {"ok":true,...} or {"ok":false,"error":...} to `report` and exits.
inline pid_t spawn(const std::filesystem::path& report, const std::function<json()>& body) {
  const pid_t pid = ::fork();
  if (pid < 0) throw startup_error("fork failed");
  if (pid > 0) return pid;
  int code = 0;
  try {
    json j = body();
    j["ok"] = true;
    write_json(report, j);
  } catch (const std::exception& e) {
    code = 2;
    try {
      write_json(report, {{"ok", false}, {"error", e.what()}});
    } catch (...) {
    }
  } catch (...) {
    code = 3;
  }
  ::_exit(code);
}

class ScratchDir {
 public:
  ScratchDir() {
    std::string tmpl = (std::filesystem::temp_directory_path() / "buddy-XXXXXX").string();
    if (!::mkdtemp(tmpl.data())) throw startup_error("cannot create a scratch directory");
    path_ = tmpl;
  }
  ~ScratchDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

/// Waits for every child; on a failed child or the deadline, kills the
/// rest. Returns the index of the first failed child, or -1.
inline int reap(std::vector<pid_t>& pids, std::chrono::steady_clock::time_point deadline, bool& timed_out) {
  using namespace std::chrono_literals;
  int failed = -1;
  std::size_t live = pids.size();
  timed_out = false;
  auto kill_all = [&] {
    for (pid_t p : pids)
      if (p > 0) ::kill(p, SIGKILL);
  };
  while (live > 0) {
    bool progressed = false;
    for (std::size_t i = 0; i < pids.size(); ++i) {
      if (pids[i] <= 0) continue;
      int status = 0;
      const pid_t got = ::waitpid(pids[i], &status, WNOHANG);
      if (got == 0) continue;
      progressed = true;
      pids[i] = -1;
      --live;
      const bool ok = got > 0 && WIFEXITED(status) && WEXITSTATUS(status) == 0;
      if (!ok && failed < 0) {
        failed = static_cast<int>(i);
        kill_all();
      }
    }
    if (live > 0 && std::chrono::steady_clock::now() >= deadline && !timed_out) {
      timed_out = true;
      kill_all();
    }
    if (!progressed) std::this_thread::sleep_for(2ms);
  }
  return failed;
}

}  // namespace detail

inline RunRecord run_sidecar(const ScenarioConfig& cfg) {
  cfg.validate();
  auto topo = Topology::uniform(cfg.nodes, cfg.ranks_per_node);
  for (NodeId n = 0; n < topo.num_nodes(); ++n) topo.node(n).port = reserve_free_port();
  const std::size_t world = topo.world_size();
  const auto connect_timeout = std::min(cfg.run_timeout, std::chrono::milliseconds(30000));

  detail::ScratchDir scratch;
  std::vector<pid_t> pids;
  std::vector<std::string> roles;
  std::vector<std::filesystem::path> files;
  auto launch = [&](const std::string& role, const std::function<json()>& body) {
    files.push_back(scratch.path() / (role + ".json"));
    roles.push_back(role);
    try {
      pids.push_back(detail::spawn(files.back(), body));
    } catch (...) {
      for (pid_t p : pids) ::kill(p, SIGKILL);
      for (pid_t p : pids) ::waitpid(p, nullptr, 0);
      throw;
    }
  };

  for (NodeId n = 0; n < topo.num_nodes(); ++n) {
    launch("agent" + std::to_string(n), [&, n]() -> json {
      auto tcfg = topo.agent_transport(n);
      tcfg.connect_timeout = connect_timeout;
      tcfg.max_frame = std::max({tcfg.max_frame, cfg.agent.remote_buf_size, cfg.agent.local_buf_size,
                                 cfg.runtime.buf_size});
      auto ep = connect_all(tcfg);
      Agent agent(cfg.agent, topo, n, *ep);
      const auto exit = agent.run();
      if (exit != AgentExit::clean) throw error(std::string("agent exited: ") + to_string(exit));
      return {{"stats", to_json(agent.stats())}};
    });
  }
  for (NodeId n = 0; n < topo.num_nodes(); ++n) {
    launch("worker" + std::to_string(n), [&, n]() -> json {
      const auto& ranks = topo.ranks_on(n);
      std::vector<bench::WorkReport> reports(world);
      std::vector<RuntimeStats> stats(world);
      run_rank_threads(ranks, [&](Rank r) {
        Handle h = init(cfg.runtime, topo, r, monotonic_clock(), connect_timeout);
        reports[r] = bench::run_workload(cfg.workload, h);
        stats[r] = h.stats();
      });
      json out = json::array();
      for (Rank r : ranks) out.push_back({{"rank", r}, {"report", to_json(reports[r])}, {"stats", to_json(stats[r])}});
      return {{"ranks", out}};
    });
  }

  bool timed_out = false;
  const int failed = detail::reap(pids, std::chrono::steady_clock::now() + cfg.run_timeout, timed_out);
  if (timed_out) throw timeout_error("sidecar run exceeded " + std::to_string(cfg.run_timeout.count()) + " ms");
  if (failed >= 0) {
    std::string why = "exited abnormally";
    try {
      const auto j = detail::read_json(files[failed]);
      if (j.contains("error")) why = j["error"].get<std::string>();
    } catch (...) {
    }
    throw startup_error(roles[failed] + ": " + why);
  }

  RunRecord rec;
  rec.reports.resize(world);
  rec.ranks.resize(world);
  for (std::size_t i = 0; i < files.size(); ++i) {
    const auto j = detail::read_json(files[i]);
    if (j.contains("stats")) {
      rec.agents.push_back(agent_stats_from_json(j["stats"]));
      continue;
    }
    for (const auto& r : j.at("ranks")) {
      const auto rank = r.at("rank").get<Rank>();
      rec.reports.at(rank) = work_report_from_json(r.at("report"));
      rec.ranks.at(rank) = runtime_stats_from_json(r.at("stats"));
    }
  }
  return rec;
}

inline RunRecord deploy(const ScenarioConfig& cfg) {
  return cfg.placement == Placement::sidecar ? run_sidecar(cfg) : run_inline(cfg);
}

}  // namespace buddy::harness
