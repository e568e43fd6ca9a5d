#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "buddy/bench/registry.hpp"
#include "buddy/harness/deploy.hpp"
#include "buddy/harness/metrics.hpp"
#include "buddy/harness/scenario.hpp"

namespace buddy::harness {

/// Called on each repetition's record before it is checked; tests use it to
/// inject faults.
using RecordHook = std::function<void(RunRecord&)>;

/// Runs cfg.repetitions repetitions and checks each against the workload
/// oracle. A mismatch marks the sample failed; deployment errors propagate.
inline RunMetrics run_scenario(const ScenarioConfig& cfg, const RecordHook& hook = {}) {
  cfg.validate();
  RunMetrics m;
  m.scenario = cfg.name();
  m.workload = bench::to_string(cfg.workload.kind);
  for (std::size_t rep = 0; rep < cfg.repetitions; ++rep) {
    auto rec = deploy(cfg);
    if (hook) hook(rec);
    auto sample = summarize(rec, cfg.link_speed);
    const auto verdict = bench::verify(cfg.workload, rec.reports);
    if (!verdict.ok) {
      sample.status = "failed";
      sample.detail = verdict.detail;
    } else if (!sample.conserved()) {
      sample.status = "failed";
      sample.detail = "agents routed " + std::to_string(sample.routed_bytes) + " bytes, ranks sent " +
                      std::to_string(sample.app_bytes + sample.control_bytes);
    }
    m.samples.push_back(std::move(sample));
  }
  return m;
}

/// One row of a sweep or scaling table.
struct Cell {
  std::string axis;
  std::uint64_t value = 0;
  RunMetrics metrics;
  double speedup = 0;  // first cell's mean wall time over this cell's
};

inline RunMetrics failed_metrics(const ScenarioConfig& cfg, const std::string& why) {
  RunMetrics m;
  m.scenario = cfg.name();
  m.workload = bench::to_string(cfg.workload.kind);
  RunSample s;
  s.status = "failed";
  s.detail = why;
  m.samples.push_back(s);
  return m;
}

inline RunMetrics run_cell(const ScenarioConfig& cfg) {
  try {
    return run_scenario(cfg);
  } catch (const std::exception& e) {
    return failed_metrics(cfg, e.what());
  }
}

inline void fill_speedups(std::vector<Cell>& cells) {
  if (cells.empty() || !cells[0].metrics.ok()) return;
  const double base = cells[0].metrics.mean("wall_time");
  for (auto& c : cells) {
    const double w = c.metrics.mean("wall_time");
    c.speedup = c.metrics.ok() && w > 0 ? base / w : 0.0;
  }
}

/// One scenario per value of `axis`; failed cells stay in the table.
inline std::vector<Cell> sweep(const ScenarioConfig& base, const std::string& axis,
                               const std::vector<std::uint64_t>& values) {
  if (values.empty()) throw usage_error("sweep needs at least one value");
  std::vector<Cell> cells;
  for (auto v : values) {
    Cell c;
    c.axis = axis;
    c.value = v;
    ScenarioConfig cfg = base;
    try {
      set_axis(cfg, axis, v);
      c.metrics = run_cell(cfg);
    } catch (const usage_error&) {
      throw;
    } catch (const std::exception& e) {
      c.metrics = failed_metrics(cfg, e.what());
    }
    cells.push_back(std::move(c));
  }
  fill_speedups(cells);
  return cells;
}

/// Problem size for `nodes` nodes when `base` describes one node: the
/// histogram table and the graphs grow with the node count, the per-rank
/// update stream stays fixed. Transpose and synthetic are already sized
/// per rank.
inline bench::WorkloadSpec scaled_workload(const ScenarioConfig& base, std::size_t nodes) {
  auto w = base.workload;
  switch (w.kind) {
    case bench::WorkloadKind::histogram:
      w.updates = base.workload.updates_per_rank();
      w.scale = base.workload.scale * nodes;
      break;
    case bench::WorkloadKind::tricount:
    case bench::WorkloadKind::sssp:
      w.scale = base.workload.scale * nodes;
      break;
    case bench::WorkloadKind::transpose:
    case bench::WorkloadKind::synthetic:
      break;
  }
  return w;
}

inline std::vector<Cell> weak_scale(const ScenarioConfig& base, const std::vector<std::size_t>& node_counts) {
  if (node_counts.empty()) throw usage_error("scale needs at least one node count");
  std::vector<Cell> cells;
  for (auto n : node_counts) {
    Cell c;
    c.axis = "nodes";
    c.value = n;
    ScenarioConfig cfg = base;
    cfg.nodes = n;
    cfg.workload = scaled_workload(base, n);
    c.metrics = run_cell(cfg);
    cells.push_back(std::move(c));
  }
  fill_speedups(cells);
  return cells;
}

inline json to_json(const Cell& c) {
  json j = to_json(c.metrics);
  j["axis"] = c.axis;
  j["value"] = c.value;
  j["speedup"] = c.speedup;
  return j;
}

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch == '\n' ? ' ' : ch;
  }
  return out + "\"";
}

inline std::string summary_csv(const std::vector<Cell>& cells) {
  std::ostringstream out;
  out << std::setprecision(12);
  out << "axis,value,scenario,workload,status,samples,speedup";
  for (const auto& f : RunMetrics::fields()) out << ',' << f << "_mean," << f << "_min," << f << "_max";
  out << ",detail\n";
  for (const auto& c : cells) {
    out << csv_escape(c.axis) << ',' << c.value << ',' << csv_escape(c.metrics.scenario) << ','
        << c.metrics.workload << ',' << c.metrics.status() << ',' << c.metrics.samples.size() << ','
        << c.speedup;
    for (const auto& f : RunMetrics::fields()) {
      const auto st = c.metrics.aggregate(f);
      out << ',' << st.mean << ',' << st.min << ',' << st.max;
    }
    out << ',' << csv_escape(c.metrics.detail()) << '\n';
  }
  return out.str();
}

namespace detail {

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
  out.close();
  if (!out) throw error("cannot write " + p.string());
}

inline void prepare_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (!std::filesystem::is_directory(dir)) throw error("cannot create output directory " + dir.string());
}

}  // namespace detail

/// Writes metrics.json (one object) and summary.csv (one row).
inline void emit_report(const std::filesystem::path& dir, const RunMetrics& m) {
  detail::prepare_dir(dir);
  detail::write_text(dir / "metrics.json", to_json(m).dump(2) + "\n");
  detail::write_text(dir / "summary.csv", summary_csv({Cell{"", 0, m, 1.0}}));
}

/// Writes metrics.json (array of cells) and summary.csv (row per cell).
inline void emit_report(const std::filesystem::path& dir, const std::vector<Cell>& cells) {
  detail::prepare_dir(dir);
  json arr = json::array();
  for (const auto& c : cells) arr.push_back(to_json(c));
  detail::write_text(dir / "metrics.json", arr.dump(2) + "\n");
  detail::write_text(dir / "summary.csv", summary_csv(cells));
}

inline bool all_ok(const std::vector<Cell>& cells) {
  for (const auto& c : cells)
    if (!c.metrics.ok()) return false;
  return true;
}

}  // namespace buddy::harness
