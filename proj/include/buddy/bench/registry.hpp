#pragma once

#include <string>
#include <vector>

#include "buddy/bench/histogram.hpp"
#include "buddy/bench/sssp.hpp"
#include "buddy/bench/synthetic.hpp"
#include "buddy/bench/transpose.hpp"
#include "buddy/bench/tricount.hpp"
#include "buddy/bench/workload.hpp"

namespace buddy::bench {

inline WorkReport run_workload(const WorkloadSpec& spec, Handle& h) {
  switch (spec.kind) {
    case WorkloadKind::histogram: return histogram(spec, h);
    case WorkloadKind::transpose: return sparse_transpose(spec, h);
    case WorkloadKind::tricount: return triangle_count(spec, h);
    case WorkloadKind::sssp: return sssp(spec, h);
    case WorkloadKind::synthetic: return synthetic(spec, h);
  }
  throw config_error("unknown workload");
}

struct Verdict {
  bool ok = true;
  std::string detail;
};

inline Verdict compare_ranks(const std::vector<WorkReport>& got, const std::vector<std::vector<std::uint64_t>>& want) {
  if (got.size() != want.size()) return {false, "rank count mismatch"};
  for (std::size_t r = 0; r < got.size(); ++r) {
    if (got[r].result != want[r]) return {false, "rank " + std::to_string(r) + " differs from the serial reference"};
  }
  return {};
}

/// Checks a run against the serial reference for the same seed and rank
/// count.
inline Verdict verify(const WorkloadSpec& spec, const std::vector<WorkReport>& reports) {
  const std::size_t world = reports.size();
  switch (spec.kind) {
    case WorkloadKind::histogram: return compare_ranks(reports, histogram_reference(spec, world));
    case WorkloadKind::transpose: return compare_ranks(reports, transpose_reference(spec, world));
    case WorkloadKind::sssp: return compare_ranks(reports, sssp_reference(sssp_graph(spec), world));
    case WorkloadKind::synthetic: return compare_ranks(reports, synthetic_reference(spec, world));
    case WorkloadKind::tricount: {
      std::uint64_t total = 0;
      for (const auto& r : reports) {
        if (r.result.size() != 1) return {false, "malformed triangle result"};
        total += r.result[0];
      }
      const auto want = triangle_reference(tricount_graph(spec));
      if (total != want) return {false, "counted " + std::to_string(total) + " triangles, expected " + std::to_string(want)};
      return {};
    }
  }
  return {false, "unknown workload"};
}

inline double mc_ratio(const std::vector<WorkReport>& reports) {
  double local = 0, sent = 0;
  for (const auto& r : reports) {
    local += static_cast<double>(r.local_bytes);
    sent += static_cast<double>(r.sent_bytes);
  }
  return sent > 0 ? local / sent : 0.0;
}

}  // namespace buddy::bench
