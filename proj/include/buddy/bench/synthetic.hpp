#pragma once

// Tunable compute-to-communication workload. Each rank sends spec.scale
// 8-byte messages to random ranks and, between sends, streams through a
// large read-only buffer so that local bytes track mc_target times the sent
// bytes.

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <random>
#include <vector>

#include "buddy/bench/workload.hpp"

namespace buddy::bench {

/// Shared per process: ranks only read it.
inline std::shared_ptr<const std::vector<std::uint64_t>> stream_buffer(std::uint64_t bytes) {
  static std::mutex mu;
  static std::map<std::uint64_t, std::weak_ptr<const std::vector<std::uint64_t>>> cache;
  std::lock_guard lock(mu);
  if (auto p = cache[bytes].lock()) return p;
  auto v = std::make_shared<std::vector<std::uint64_t>>(bytes / 8);
  std::iota(v->begin(), v->end(), std::uint64_t{1});
  cache[bytes] = v;
  return v;
}

inline std::uint64_t synthetic_value(std::uint64_t seed, Rank src, std::uint64_t i) {
  return splitmix64(splitmix64(seed ^ (std::uint64_t(src) << 40)) + i);
}

/// result: {messages received, order-independent hash of their payloads}.
inline WorkReport synthetic(const WorkloadSpec& spec, Handle& h) {
  const std::size_t world = h.world_size();
  const Rank me = h.rank();
  std::shared_ptr<const std::vector<std::uint64_t>> buf;
  if (spec.mc_target > 0) buf = stream_buffer(spec.stream_bytes);

  Stopwatch sw;
  WorkReport rep;
  std::uint64_t received = 0, hash = 0;
  auto on = [&](std::span<const std::byte> m) {
    ++received;
    hash += splitmix64(get<std::uint64_t>(m.data()));
  };

  // Streaming work owed, in bytes; paid in chunks of whole words.
  constexpr std::uint64_t kChunk = 4096;
  double debt = 0;
  std::size_t cursor = 0;
  std::uint64_t sink = 0;
  auto stream = [&](std::uint64_t bytes) {
    const auto& v = *buf;
    for (std::uint64_t words = bytes / 8; words > 0; --words) {
      sink += v[cursor];
      if (++cursor == v.size()) cursor = 0;
    }
    rep.local_bytes += bytes / 8 * 8;
  };

  Messenger msg(h);
  auto rng = rank_rng(spec.seed, me);
  std::byte payload[8];
  const double per_send = spec.mc_target * static_cast<double>(kHeaderSize + sizeof payload);
  for (std::uint64_t i = 0; i < spec.scale; ++i) {
    put(payload, synthetic_value(spec.seed, me, i));
    msg.send(static_cast<Rank>(rng() % world), payload, on);
    if (!buf) continue;
    debt += per_send;
    if (debt >= kChunk) {
      const auto pay = static_cast<std::uint64_t>(debt) / kChunk * kChunk;
      stream(pay);
      debt -= static_cast<double>(pay);
    }
  }
  if (buf) stream(static_cast<std::uint64_t>(debt + 4) / 8 * 8);
  msg.quiesce(on);

  volatile std::uint64_t keep = sink;  // the streaming reads must not be elided
  (void)keep;
  rep.result = {received, hash};
  finish(rep, h, sw);
  return rep;
}

inline std::vector<std::vector<std::uint64_t>> synthetic_reference(const WorkloadSpec& spec, std::size_t world) {
  std::vector<std::vector<std::uint64_t>> out(world, std::vector<std::uint64_t>(2, 0));
  for (Rank r = 0; r < world; ++r) {
    auto rng = rank_rng(spec.seed, r);
    for (std::uint64_t i = 0; i < spec.scale; ++i) {
      auto& o = out[rng() % world];
      ++o[0];
      o[1] += splitmix64(synthetic_value(spec.seed, r, i));
    }
  }
  return out;
}

}  // namespace buddy::bench
