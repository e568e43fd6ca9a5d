#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "buddy/agent.hpp"
#include "buddy/bench/registry.hpp"
#include "buddy/harness/scenario.hpp"
#include "buddy/runtime.hpp"

namespace buddy::harness {

using json = nlohmann::ordered_json;

/// Everything one repetition produced, gathered at join.
struct RunRecord {
  std::vector<bench::WorkReport> reports;  // indexed by rank
  std::vector<RuntimeStats> ranks;         // indexed by rank
  std::vector<AgentStats> agents;          // indexed by node
};

struct RunSample {
  std::string status = "ok";  // ok | failed
  std::string detail;
  double wall_time = 0;  // seconds, slowest rank
  std::uint64_t routed_bytes = 0;
  std::uint64_t routed_msgs = 0;
  double mean_remote_transfer = 0;
  double mean_local_transfer = 0;
  double network_utilization = 0;
  double mc_ratio = 0;
  std::uint64_t digest = 0;
  std::uint64_t app_bytes = 0;      // Σ runtime sent_bytes
  std::uint64_t control_bytes = 0;  // Σ control record bytes sent by ranks
  std::vector<AgentStats> agents;

  bool ok() const { return status == "ok"; }
  bool conserved() const { return routed_bytes == app_bytes + control_bytes; }
};

inline RunSample summarize(const RunRecord& rec, double link_speed) {
  RunSample s;
  for (const auto& r : rec.reports) s.wall_time = std::max(s.wall_time, r.wall_time);
  for (const auto& r : rec.ranks) {
    s.app_bytes += r.sent_bytes;
    s.control_bytes += r.control_bytes_sent;
  }
  std::uint64_t remote_bytes = 0, remote_bundles = 0, local_bytes = 0, local_bundles = 0;
  for (const auto& a : rec.agents) {
    const auto t = a.total();
    s.routed_bytes += t.ingress_bytes + t.ingress_control_bytes;
    s.routed_msgs += t.ingress_msgs;
    remote_bytes += t.remote_bytes;
    remote_bundles += t.remote_bundles;
    local_bytes += t.local_bytes;
    local_bundles += t.local_bundles;
  }
  auto mean = [](std::uint64_t bytes, std::uint64_t n) { return n ? double(bytes) / double(n) : 0.0; };
  s.mean_remote_transfer = mean(remote_bytes, remote_bundles);
  s.mean_local_transfer = mean(local_bytes, local_bundles);
  if (s.wall_time > 0) s.network_utilization = double(remote_bytes) * 8.0 / (s.wall_time * link_speed);
  s.mc_ratio = bench::mc_ratio(rec.reports);
  s.digest = bench::combined_digest(rec.reports);
  s.agents = rec.agents;
  return s;
}

struct Stat {
  double mean = 0, min = 0, max = 0;
};

/// Samples of one scenario plus mean/min/max of each numeric field over the
/// successful ones (over all of them when none succeeded).
struct RunMetrics {
  std::string scenario;
  std::string workload;
  std::vector<RunSample> samples;

  bool ok() const {
    return !samples.empty() && std::all_of(samples.begin(), samples.end(), [](auto& s) { return s.ok(); });
  }
  std::string status() const { return ok() ? "ok" : "failed"; }

  std::string detail() const {
    for (const auto& s : samples)
      if (!s.ok()) return s.detail;
    return {};
  }

  static const std::vector<std::string>& fields() {
    static const std::vector<std::string> f = {"wall_time",           "routed_bytes", "routed_msgs",
                                               "mean_remote_transfer", "mean_local_transfer",
                                               "network_utilization",  "mc_ratio"};
    return f;
  }

  static double field(const RunSample& s, const std::string& name) {
    if (name == "wall_time") return s.wall_time;
    if (name == "routed_bytes") return double(s.routed_bytes);
    if (name == "routed_msgs") return double(s.routed_msgs);
    if (name == "mean_remote_transfer") return s.mean_remote_transfer;
    if (name == "mean_local_transfer") return s.mean_local_transfer;
    if (name == "network_utilization") return s.network_utilization;
    if (name == "mc_ratio") return s.mc_ratio;
    throw usage_error("unknown metric '" + name + "'");
  }

  Stat aggregate(const std::string& name) const {
    std::vector<const RunSample*> use;
    for (const auto& s : samples)
      if (s.ok()) use.push_back(&s);
    if (use.empty())
      for (const auto& s : samples) use.push_back(&s);
    Stat st;
    if (use.empty()) return st;
    st.min = st.max = field(*use[0], name);
    double sum = 0;
    for (const auto* s : use) {
      const double v = field(*s, name);
      sum += v;
      st.min = std::min(st.min, v);
      st.max = std::max(st.max, v);
    }
    st.mean = sum / double(use.size());
    return st;
  }

  double mean(const std::string& name) const { return aggregate(name).mean; }
};

// JSON encodings, used both in reports and to carry results out of child
// processes.

inline json to_json(const bench::WorkReport& r) {
  return {{"result_digest", r.result_digest}, {"local_bytes", r.local_bytes}, {"sent_bytes", r.sent_bytes},
          {"wall_time", r.wall_time},         {"result", r.result}};
}

inline bench::WorkReport work_report_from_json(const json& j) {
  bench::WorkReport r;
  r.result_digest = j.at("result_digest").get<std::uint64_t>();
  r.local_bytes = j.at("local_bytes").get<std::uint64_t>();
  r.sent_bytes = j.at("sent_bytes").get<std::uint64_t>();
  r.wall_time = j.at("wall_time").get<double>();
  r.result = j.at("result").get<std::vector<std::uint64_t>>();
  return r;
}

inline json to_json(const RuntimeStats& s) {
  return {{"sent_msgs", s.sent_msgs},
          {"sent_bytes", s.sent_bytes},
          {"received_msgs", s.received_msgs},
          {"received_bytes", s.received_bytes},
          {"bundles_sent", s.bundles_sent},
          {"bundle_bytes_sent", s.bundle_bytes_sent},
          {"bundles_received", s.bundles_received},
          {"bundle_bytes_received", s.bundle_bytes_received},
          {"control_bytes_sent", s.control_bytes_sent},
          {"corrupt_bundles", s.corrupt_bundles}};
}

inline RuntimeStats runtime_stats_from_json(const json& j) {
  RuntimeStats s;
  s.sent_msgs = j.at("sent_msgs");
  s.sent_bytes = j.at("sent_bytes");
  s.received_msgs = j.at("received_msgs");
  s.received_bytes = j.at("received_bytes");
  s.bundles_sent = j.at("bundles_sent");
  s.bundle_bytes_sent = j.at("bundle_bytes_sent");
  s.bundles_received = j.at("bundles_received");
  s.bundle_bytes_received = j.at("bundle_bytes_received");
  s.control_bytes_sent = j.at("control_bytes_sent");
  s.corrupt_bundles = j.at("corrupt_bundles");
  return s;
}

inline json to_json(const AgentThreadStats& t) {
  return {{"routed_msgs", t.send.routed_msgs},
          {"routed_bytes", t.send.routed_bytes},
          {"blocked_msgs", t.send.blocked_msgs},
          {"corrupt_bundles", t.send.corrupt_bundles},
          {"protocol_faults", t.send.protocol_faults},
          {"posted_bundles", t.send.posted_bundles},
          {"posted_bytes", t.send.posted_bytes},
          {"ingress_bundles", t.ingress_bundles},
          {"ingress_msgs", t.ingress_msgs},
          {"ingress_bytes", t.ingress_bytes},
          {"ingress_control_bytes", t.ingress_control_bytes},
          {"transit_bundles", t.transit_bundles},
          {"transit_bytes", t.transit_bytes},
          {"local_bundles", t.local_bundles},
          {"local_bytes", t.local_bytes},
          {"remote_bundles", t.remote_bundles},
          {"remote_bytes", t.remote_bytes},
          {"link_faults", t.link_faults},
          {"control_faults", t.control_faults}};
}

inline AgentThreadStats agent_thread_stats_from_json(const json& j) {
  AgentThreadStats t;
  t.send.routed_msgs = j.at("routed_msgs");
  t.send.routed_bytes = j.at("routed_bytes");
  t.send.blocked_msgs = j.at("blocked_msgs");
  t.send.corrupt_bundles = j.at("corrupt_bundles");
  t.send.protocol_faults = j.at("protocol_faults");
  t.send.posted_bundles = j.at("posted_bundles");
  t.send.posted_bytes = j.at("posted_bytes");
  t.ingress_bundles = j.at("ingress_bundles");
  t.ingress_msgs = j.at("ingress_msgs");
  t.ingress_bytes = j.at("ingress_bytes");
  t.ingress_control_bytes = j.at("ingress_control_bytes");
  t.transit_bundles = j.at("transit_bundles");
  t.transit_bytes = j.at("transit_bytes");
  t.local_bundles = j.at("local_bundles");
  t.local_bytes = j.at("local_bytes");
  t.remote_bundles = j.at("remote_bundles");
  t.remote_bytes = j.at("remote_bytes");
  t.link_faults = j.at("link_faults");
  t.control_faults = j.at("control_faults");
  return t;
}

inline json to_json(const AgentStats& s) {
  json threads = json::array();
  for (const auto& t : s.threads) threads.push_back(to_json(t));
  return {{"threads", threads},
          {"control_bundles", s.control_bundles},
          {"control_bytes", s.control_bytes},
          {"rounds", s.rounds}};
}

inline AgentStats agent_stats_from_json(const json& j) {
  AgentStats s;
  for (const auto& t : j.at("threads")) s.threads.push_back(agent_thread_stats_from_json(t));
  s.control_bundles = j.at("control_bundles");
  s.control_bytes = j.at("control_bytes");
  s.rounds = j.at("rounds");
  return s;
}

inline json to_json(const RunSample& s, bool with_agents = true) {
  json j = {{"wall_time", s.wall_time},
            {"routed_bytes", s.routed_bytes},
            {"routed_msgs", s.routed_msgs},
            {"mean_remote_transfer", s.mean_remote_transfer},
            {"mean_local_transfer", s.mean_local_transfer},
            {"network_utilization", s.network_utilization},
            {"mc_ratio", s.mc_ratio},
            {"status", s.status},
            {"digest", s.digest},
            {"app_bytes", s.app_bytes},
            {"control_bytes", s.control_bytes}};
  if (!s.detail.empty()) j["detail"] = s.detail;
  if (with_agents) {
    json agents = json::array();
    for (const auto& a : s.agents) agents.push_back(to_json(a));
    j["agents"] = agents;
  }
  return j;
}

inline json to_json(const RunMetrics& m) {
  json samples = json::array();
  for (const auto& s : m.samples) samples.push_back(to_json(s));
  json agg = json::object();
  for (const auto& f : RunMetrics::fields()) {
    const auto st = m.aggregate(f);
    agg[f] = {{"mean", st.mean}, {"min", st.min}, {"max", st.max}};
  }
  return {{"scenario", m.scenario}, {"workload", m.workload}, {"status", m.status()},
          {"samples", samples},      {"aggregate", agg}};
}

}  // namespace buddy::harness
