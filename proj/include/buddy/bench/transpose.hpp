#pragma once

// Sparse matrix transpose. Rows are owned cyclically. Every nonzero
// (i, j, v) travels to the owner of row j of the transpose, which
// assembles its rows by counting sort.

#include <algorithm>
#include <cstdint>
#include <random>
#include <tuple>
#include <vector>

#include "buddy/bench/workload.hpp"

namespace buddy::bench {

struct Entry {
  std::uint32_t row, col;
  std::uint64_t value;
  friend bool operator==(const Entry&, const Entry&) = default;
  friend bool operator<(const Entry& a, const Entry& b) {
    return std::tie(a.row, a.col, a.value) < std::tie(b.row, b.col, b.value);
  }
};

/// The owned rows of an n x n matrix, CSR style, rows in local index order.
struct LocalMatrix {
  std::uint32_t n = 0;
  std::vector<std::uint64_t> offsets;
  std::vector<std::uint32_t> cols;
  std::vector<std::uint64_t> values;

  static LocalMatrix from_entries(std::uint32_t n, Rank me, std::size_t world, std::vector<Entry> entries) {
    std::sort(entries.begin(), entries.end());
    LocalMatrix m;
    m.n = n;
    const auto rows = owned_count(n, me, world);
    m.offsets.assign(rows + 1, 0);
    for (const auto& e : entries) ++m.offsets[local_index(e.row, world) + 1];
    for (std::uint64_t r = 0; r < rows; ++r) m.offsets[r + 1] += m.offsets[r];
    for (const auto& e : entries) {
      m.cols.push_back(e.col);
      m.values.push_back(e.value);
    }
    return m;
  }

  std::vector<Entry> entries(Rank me, std::size_t world) const {
    std::vector<Entry> out;
    for (std::uint64_t r = 0; r + 1 < offsets.size(); ++r)
      for (auto k = offsets[r]; k < offsets[r + 1]; ++k)
        out.push_back({static_cast<std::uint32_t>(r * world + me), cols[k], values[k]});
    return out;
  }
};

inline std::uint32_t transpose_dim(const WorkloadSpec& spec, std::size_t world) {
  return static_cast<std::uint32_t>(world * std::max<std::uint64_t>(1, (spec.scale + 7) / 8));
}

/// spec.scale nonzeros in rank `me`'s rows, about 8 per row, duplicates
/// allowed.
inline LocalMatrix random_matrix(const WorkloadSpec& spec, Rank me, std::size_t world) {
  const auto n = transpose_dim(spec, world);
  auto rng = rank_rng(spec.seed, me);
  std::uniform_int_distribution<std::uint32_t> row(0, static_cast<std::uint32_t>(owned_count(n, me, world) - 1));
  std::uniform_int_distribution<std::uint32_t> col(0, n - 1);
  std::vector<Entry> es(spec.scale);
  for (auto& e : es) {
    e.row = static_cast<std::uint32_t>(row(rng) * world + me);
    e.col = col(rng);
    e.value = rng();
  }
  return LocalMatrix::from_entries(n, me, world, std::move(es));
}

/// result: the owned rows of the transpose as sorted (row, col, value)
/// triples, flattened.
inline WorkReport sparse_transpose(const LocalMatrix& a, Handle& h) {
  const std::size_t world = h.world_size();
  const Rank me = h.rank();
  Stopwatch sw;
  WorkReport rep;
  std::vector<Entry> staged;  // row = local row of the transpose

  auto on = [&](std::span<const std::byte> m) {
    const auto i = get<std::uint32_t>(m.data());
    const auto j = get<std::uint32_t>(m.data() + 4);
    staged.push_back({static_cast<std::uint32_t>(local_index(j, world)), i, get<std::uint64_t>(m.data() + 8)});
    rep.local_bytes += sizeof(Entry);
  };
  Messenger msg(h);
  std::byte payload[16];
  for (std::uint64_t r = 0; r + 1 < a.offsets.size(); ++r) {
    const auto i = static_cast<std::uint32_t>(r * world + me);
    for (auto k = a.offsets[r]; k < a.offsets[r + 1]; ++k) {
      rep.local_bytes += sizeof(std::uint32_t) + sizeof(std::uint64_t);
      put(payload, i);
      put(payload + 4, a.cols[k]);
      put(payload + 8, a.values[k]);
      msg.send(owner_of(a.cols[k], world), payload, on);
    }
  }
  msg.quiesce(on);

  // Counting sort into rows, then order each row.
  const auto rows = owned_count(a.n, me, world);
  std::vector<std::uint64_t> offsets(rows + 1, 0);
  for (const auto& e : staged) ++offsets[e.row + 1];
  rep.local_bytes += staged.size() * sizeof(std::uint32_t);
  for (std::uint64_t r = 0; r < rows; ++r) offsets[r + 1] += offsets[r];
  std::vector<std::uint32_t> cols(staged.size());
  std::vector<std::uint64_t> vals(staged.size());
  std::vector<std::uint64_t> fill(offsets.begin(), offsets.end() - 1);
  for (const auto& e : staged) {
    const auto k = fill[e.row]++;
    cols[k] = e.col;
    vals[k] = e.value;
  }
  rep.local_bytes += staged.size() * (sizeof(Entry) + sizeof(std::uint32_t) + sizeof(std::uint64_t));
  rep.result.reserve(3 * staged.size());
  std::vector<std::pair<std::uint32_t, std::uint64_t>> row;
  for (std::uint64_t r = 0; r < rows; ++r) {
    row.clear();
    for (auto k = offsets[r]; k < offsets[r + 1]; ++k) row.emplace_back(cols[k], vals[k]);
    std::sort(row.begin(), row.end());
    rep.local_bytes += 2 * row.size() * (sizeof(std::uint32_t) + sizeof(std::uint64_t));
    for (const auto& [c, v] : row) {
      rep.result.push_back(r * world + me);
      rep.result.push_back(c);
      rep.result.push_back(v);
    }
  }
  finish(rep, h, sw);
  return rep;
}

inline WorkReport sparse_transpose(const WorkloadSpec& spec, Handle& h) {
  return sparse_transpose(random_matrix(spec, h.rank(), h.world_size()), h);
}

/// Direct transpose of the gathered matrix, split by owner.
inline std::vector<std::vector<std::uint64_t>> transpose_reference(const WorkloadSpec& spec, std::size_t world) {
  std::vector<Entry> t;
  for (Rank r = 0; r < world; ++r)
    for (const auto& e : random_matrix(spec, r, world).entries(r, static_cast<std::size_t>(world)))
      t.push_back({e.col, e.row, e.value});
  std::sort(t.begin(), t.end());
  std::vector<std::vector<std::uint64_t>> out(world);
  for (const auto& e : t) {
    auto& o = out[owner_of(e.row, world)];
    o.push_back(e.row);
    o.push_back(e.col);
    o.push_back(e.value);
  }
  return out;
}

}  // namespace buddy::bench
