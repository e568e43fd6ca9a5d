#pragma once

// Shared pieces of the benchmark workloads: the spec, the per-rank report,
// seeding, digests and the send/poll loop helpers.
//
// local_bytes counts reads and writes of application state (tables,
// adjacency, matrices, distance arrays, streaming buffers). Message buffers
// and input construction are not counted. sent_bytes counts header plus
// payload of every accepted send.

#include <chrono>
#include <cstdint>
#include <cstring>
#include <deque>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "buddy/config.hpp"
#include "buddy/error.hpp"
#include "buddy/runtime.hpp"

namespace buddy::bench {

enum class WorkloadKind { histogram, transpose, tricount, sssp, synthetic };

inline const char* to_string(WorkloadKind k) {
  switch (k) {
    case WorkloadKind::histogram: return "histogram";
    case WorkloadKind::transpose: return "transpose";
    case WorkloadKind::tricount: return "tricount";
    case WorkloadKind::sssp: return "sssp";
    case WorkloadKind::synthetic: return "synthetic";
  }
  return "?";
}

inline WorkloadKind parse_kind(const std::string& s) {
  for (auto k : {WorkloadKind::histogram, WorkloadKind::transpose, WorkloadKind::tricount, WorkloadKind::sssp,
                 WorkloadKind::synthetic}) {
    if (s == to_string(k)) return k;
  }
  throw config_error("unknown workload '" + s + "'");
}

struct WorkloadSpec {
  WorkloadKind kind = WorkloadKind::histogram;
  std::uint64_t scale = 1u << 16;    // buckets, nonzeros per rank, vertices or messages per rank
  std::uint64_t seed = 1;
  double mc_target = 0.0;            // synthetic only
  std::uint64_t updates = 0;         // histogram updates per rank; 0 means scale
  std::uint64_t stream_bytes = 64u << 20;  // synthetic streaming buffer per rank

  std::uint64_t updates_per_rank() const { return updates ? updates : scale; }

  void validate() const {
    if (scale == 0) throw config_error("workload.scale must be > 0");
    if (kind == WorkloadKind::synthetic && mc_target < 0) throw config_error("workload.mc_target must be >= 0");
    if (kind == WorkloadKind::synthetic && mc_target > 0 && stream_bytes < 64)
      throw config_error("workload.stream_bytes must be >= 64");
  }

  static WorkloadSpec from_config(const KeyValueConfig& cfg, const std::string& prefix = "workload.") {
    WorkloadSpec w;
    w.kind = parse_kind(cfg.get(prefix + "kind", to_string(w.kind)));
    w.scale = cfg.get_number(prefix + "scale", w.scale);
    w.seed = cfg.get_number(prefix + "seed", w.seed);
    w.mc_target = cfg.get_number(prefix + "mc_target", w.mc_target);
    w.updates = cfg.get_number(prefix + "updates", w.updates);
    w.stream_bytes = cfg.get_number(prefix + "stream_bytes", w.stream_bytes);
    w.validate();
    return w;
  }

  void write(KeyValueConfig& cfg, const std::string& prefix = "workload.") const {
    cfg.set(prefix + "kind", to_string(kind));
    cfg.set(prefix + "scale", std::to_string(scale));
    cfg.set(prefix + "seed", std::to_string(seed));
    cfg.set(prefix + "mc_target", std::to_string(mc_target));
    cfg.set(prefix + "updates", std::to_string(updates));
    cfg.set(prefix + "stream_bytes", std::to_string(stream_bytes));
  }
};

/// One rank's outcome. `result` is the rank's share of the output in a
/// canonical form; result_digest hashes it.
struct WorkReport {
  std::uint64_t result_digest = 0;
  std::uint64_t local_bytes = 0;
  std::uint64_t sent_bytes = 0;
  double wall_time = 0.0;
  std::vector<std::uint64_t> result;
};

inline constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ull;

inline std::uint64_t fnv1a(std::uint64_t h, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) {
    h ^= (v >> (8 * i)) & 0xFF;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t fnv1a(std::span<const std::uint64_t> vs) {
  std::uint64_t h = kFnvOffset;
  for (auto v : vs) h = fnv1a(h, v);
  return h;
}

/// Digest of a whole run: the rank results in rank order.
inline std::uint64_t combined_digest(const std::vector<WorkReport>& reports) {
  std::uint64_t h = kFnvOffset;
  for (const auto& r : reports) {
    h = fnv1a(h, r.result.size());
    for (auto v : r.result) h = fnv1a(h, v);
  }
  return h;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

/// Per-rank stream; rank = kAnyRank gives the stream shared by all ranks.
inline constexpr std::uint64_t kAnyRank = ~0ull;
inline std::mt19937_64 rank_rng(std::uint64_t seed, std::uint64_t rank) {
  return std::mt19937_64(splitmix64(seed) ^ splitmix64(rank + 0x1234567ull));
}

/// Cyclic ownership used by every workload.
inline Rank owner_of(std::uint64_t index, std::size_t world) { return static_cast<Rank>(index % world); }
inline std::uint64_t local_index(std::uint64_t index, std::size_t world) { return index / world; }
inline std::uint64_t owned_count(std::uint64_t n, Rank r, std::size_t world) {
  return n / world + (r < n % world ? 1 : 0);
}

template <class T>
void put(std::byte* p, T v) {
  std::memcpy(p, &v, sizeof v);
}
template <class T>
T get(const std::byte* p) {
  T v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

/// Send/receive loop glue. Sends that do not fit are queued and retried.
/// Message handlers must use post(), never send().
class Messenger {
 public:
  explicit Messenger(Handle& h) : h_(h) {}

  /// Never waits.
  void post(Rank dst, std::span<const std::byte> payload) {
    if (outbox_.empty() && h_.send(dst, payload)) return;
    outbox_.push_back({dst, std::vector<std::byte>(payload.begin(), payload.end())});
  }

  /// Makes progress while too much is queued.
  template <class OnMsg>
  void send(Rank dst, std::span<const std::byte> payload, OnMsg&& on) {
    post(dst, payload);
    while (outbox_.size() > kMaxQueued) {
      if (!progress(on)) h_.wait(Micros(100));
    }
  }

  /// Drains the outbox as far as possible and handles received messages.
  /// True when anything moved.
  template <class OnMsg>
  bool progress(OnMsg&& on) {
    bool moved = push_outbox();
    h_.poll();
    while (auto m = h_.recv_next()) {
      on(*m);
      moved = true;
    }
    return push_outbox() || moved;
  }

  /// Runs until global termination, handling late messages. Raises
  /// timeout_error when the handle's finalize_timeout passes first.
  template <class OnMsg>
  void quiesce(OnMsg&& on) {
    const auto deadline = std::chrono::steady_clock::now() + h_.config().finalize_timeout;
    for (;;) {
      const bool moved = progress(on);
      if (outbox_.empty() && h_.unconsumed() == 0 && h_.try_terminate()) return;
      if (moved) continue;
      if (std::chrono::steady_clock::now() >= deadline) {
        throw timeout_error("rank " + std::to_string(h_.rank()) + ": no global quiescence within " +
                            std::to_string(h_.config().finalize_timeout.count()) + " ms");
      }
      h_.wait(Micros(200));
    }
  }

  Handle& handle() { return h_; }

 private:
  static constexpr std::size_t kMaxQueued = 1u << 14;

  struct Pending {
    Rank dst;
    std::vector<std::byte> payload;
  };

  bool push_outbox() {
    bool moved = false;
    while (!outbox_.empty() && h_.send(outbox_.front().dst, outbox_.front().payload)) {
      outbox_.pop_front();
      moved = true;
    }
    return moved;
  }

  Handle& h_;
  std::deque<Pending> outbox_;
};

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

inline void finish(WorkReport& r, const Handle& h, const Stopwatch& sw) {
  r.sent_bytes = h.stats().sent_bytes;
  r.wall_time = sw.seconds();
  r.result_digest = fnv1a(r.result);
}

}  // namespace buddy::bench
