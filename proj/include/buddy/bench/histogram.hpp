#pragma once

// Distributed histogram. Buckets are owned cyclically; each rank draws its
// update stream up front, then sends one 8-byte index per update to the
// bucket's owner.

#include <cstdint>
#include <random>
#include <vector>

#include "buddy/bench/workload.hpp"

namespace buddy::bench {

/// Rank `rank`'s update stream.
inline std::vector<std::uint64_t> histogram_updates(const WorkloadSpec& spec, Rank rank) {
  auto rng = rank_rng(spec.seed, rank);
  std::uniform_int_distribution<std::uint64_t> bucket(0, spec.scale - 1);
  std::vector<std::uint64_t> out(spec.updates_per_rank());
  for (auto& b : out) b = bucket(rng);
  return out;
}

/// result: counts of the owned buckets in local index order.
inline WorkReport histogram(const WorkloadSpec& spec, Handle& h) {
  const std::size_t world = h.world_size();
  const Rank me = h.rank();
  Stopwatch sw;
  WorkReport rep;
  std::vector<std::uint32_t> counts(owned_count(spec.scale, me, world), 0);

  const auto updates = histogram_updates(spec, me);
  rep.local_bytes += updates.size() * sizeof(std::uint64_t);

  auto on = [&](std::span<const std::byte> m) {
    const auto b = get<std::uint64_t>(m.data());
    ++counts[local_index(b, world)];
    rep.local_bytes += 2 * sizeof(std::uint32_t);
  };
  Messenger msg(h);
  std::byte payload[8];
  for (const auto b : updates) {
    rep.local_bytes += sizeof(std::uint64_t);
    put(payload, b);
    msg.send(owner_of(b, world), payload, on);
  }
  msg.quiesce(on);

  rep.result.assign(counts.begin(), counts.end());
  finish(rep, h, sw);
  return rep;
}

/// Serial replay of every rank's stream, split by owner.
inline std::vector<std::vector<std::uint64_t>> histogram_reference(const WorkloadSpec& spec, std::size_t world) {
  std::vector<std::uint64_t> counts(spec.scale, 0);
  for (Rank r = 0; r < world; ++r)
    for (auto b : histogram_updates(spec, r)) ++counts[b];
  std::vector<std::vector<std::uint64_t>> out(world);
  for (std::uint64_t b = 0; b < spec.scale; ++b) out[owner_of(b, world)].push_back(counts[b]);
  return out;
}

}  // namespace buddy::bench
