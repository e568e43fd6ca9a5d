#pragma once

// Per-routing-thread send buffers and the bundle routing kernel.

#include <cstddef>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "buddy/clock.hpp"
#include "buddy/error.hpp"
#include "buddy/routing.hpp"
#include "buddy/settings.hpp"
#include "buddy/wire.hpp"

namespace buddy {

enum class SlotState : std::uint8_t { idle, open, sealed, in_flight };

/// FIFO of encoded records (header and payload) waiting for buffer space.
class RecordQueue {
 public:
  bool empty() const { return head_ == data_.size(); }
  std::size_t size() const { return count_; }
  std::size_t bytes() const { return data_.size() - head_; }

  void push(std::span<const std::byte> record) {
    data_.insert(data_.end(), record.begin(), record.end());
    ++count_;
  }

  std::span<const std::byte> front() const {
    const std::uint32_t size = detail::load_le32(data_.data() + head_);
    return {data_.data() + head_, kHeaderSize + size};
  }

  void pop() {
    head_ += front().size();
    --count_;
    if (head_ == data_.size()) {
      data_.clear();
      head_ = 0;
    } else if (head_ > 4096 && head_ * 2 > data_.size()) {
      data_.erase(data_.begin(), data_.begin() + static_cast<std::ptrdiff_t>(head_));
      head_ = 0;
    }
  }

 private:
  std::vector<std::byte> data_;
  std::size_t head_ = 0;
  std::size_t count_ = 0;
};

struct SendStats {
  std::uint64_t routed_msgs = 0;   // records placed in a send buffer
  std::uint64_t routed_bytes = 0;
  std::uint64_t blocked_msgs = 0;  // records that went through a blocklist
  std::uint64_t corrupt_bundles = 0;
  std::uint64_t protocol_faults = 0;  // unknown destination or oversize record
  std::uint64_t posted_bundles = 0;
  std::uint64_t posted_bytes = 0;
};

/// Send buffers owned by one routing thread: `bufs_per_dest` bundles per
/// next hop plus that hop's blocklist. Not thread-safe; one thread owns it.
class ThreadSendState {
 public:
  struct Pool {
    NextHop hop;
    std::size_t capacity = 0;
    std::vector<Bundle> bufs;
    std::vector<SlotState> state;
    std::vector<TimePoint> opened_at;
    int open = -1;
    std::size_t sealed = 0;
    std::size_t in_flight = 0;
    RecordQueue blocklist;
  };

  ThreadSendState(const RoutingTable& table, const AgentConfig& cfg) : table_(&table) {
    pools_.resize(table.num_hops());
    for (std::uint32_t h = 0; h < pools_.size(); ++h) {
      auto& p = pools_[h];
      p.hop = table.hop(h);
      p.capacity = p.hop.is_local() ? cfg.local_buf_size : cfg.remote_buf_size;
      for (std::size_t s = 0; s < cfg.bufs_per_dest; ++s) p.bufs.emplace_back(p.capacity);
      p.state.assign(cfg.bufs_per_dest, SlotState::idle);
      p.opened_at.assign(cfg.bufs_per_dest, TimePoint{});
    }
  }

  const RoutingTable& table() const { return *table_; }
  std::size_t num_hops() const { return pools_.size(); }
  const Pool& pool(std::uint32_t hop) const { return pools_.at(hop); }
  std::size_t capacity(std::uint32_t hop) const { return pools_[hop].capacity; }
  SendStats& stats() { return stats_; }
  const SendStats& stats() const { return stats_; }

  /// A buffer for `hop` with room for `size` more bytes: the open buffer if
  /// it fits, else the open buffer is sealed and an idle one opened. Null
  /// when every buffer for the hop is sealed or in flight.
  Bundle* get_buf(std::uint32_t hop, std::size_t size, TimePoint now) {
    auto& p = pools_[hop];
    if (size > p.capacity) {
      throw oversize_message("record of " + std::to_string(size) + " bytes exceeds buffer size " +
                             std::to_string(p.capacity));
    }
    if (p.open >= 0) {
      auto& b = p.bufs[static_cast<std::size_t>(p.open)];
      if (b.free_space() >= size) return &b;
      seal(p);
    }
    for (std::size_t s = 0; s < p.state.size(); ++s) {
      if (p.state[s] == SlotState::idle) {
        p.state[s] = SlotState::open;
        p.opened_at[s] = now;
        p.open = static_cast<int>(s);
        return &p.bufs[s];
      }
    }
    return nullptr;
  }

  void block(std::uint32_t hop, std::span<const std::byte> record) {
    pools_[hop].blocklist.push(record);
    ++stats_.blocked_msgs;
    ++blocked_total_;
  }

  bool blocklists_empty() const { return blocked_total_ == 0; }
  std::size_t blocked_records() const { return blocked_total_; }

  /// Moves blocklisted records for `hop` into send buffers in FIFO order,
  /// stopping at the first that does not fit. True iff no blocklist of this
  /// thread holds records afterwards.
  bool replay_blocklist(std::uint32_t hop, TimePoint now) {
    auto& q = pools_[hop].blocklist;
    while (!q.empty()) {
      const auto rec = q.front();
      Bundle* b = get_buf(hop, rec.size(), now);
      if (!b) break;
      b->append_raw(rec);
      ++stats_.routed_msgs;
      stats_.routed_bytes += rec.size();
      q.pop();
      --blocked_total_;
    }
    return blocked_total_ == 0;
  }

  bool replay_all(TimePoint now) {
    if (blocked_total_ == 0) return true;
    for (std::uint32_t h = 0; h < pools_.size(); ++h) {
      if (!pools_[h].blocklist.empty()) replay_blocklist(h, now);
    }
    return blocked_total_ == 0;
  }

  /// Posts sealed buffers and open buffers older than `flush_timeout`.
  /// `post(hop, slot, Bundle&&)` takes ownership until complete() is called.
  template <class Post>
  std::size_t flush_ready(TimePoint now, Micros flush_timeout, Post&& post) {
    std::size_t posted = 0;
    for (std::uint32_t h = 0; h < pools_.size(); ++h) {
      auto& p = pools_[h];
      if (p.open >= 0) {
        const auto s = static_cast<std::size_t>(p.open);
        if (!p.bufs[s].empty() && now - p.opened_at[s] >= flush_timeout) seal(p);
      }
      if (p.sealed) posted += post_sealed(h, post);
    }
    return posted;
  }

  /// Posts every non-empty buffer once nothing has been routed for
  /// `idle_timeout`.
  template <class Post>
  std::size_t idle_flush(TimePoint now, Micros idle_timeout, Post&& post) {
    if (now - last_activity_ < idle_timeout) return 0;
    return flush_all(post);
  }

  template <class Post>
  std::size_t flush_all(Post&& post) {
    std::size_t posted = 0;
    for (std::uint32_t h = 0; h < pools_.size(); ++h) {
      auto& p = pools_[h];
      if (p.open >= 0 && !p.bufs[static_cast<std::size_t>(p.open)].empty()) seal(p);
      if (p.sealed) posted += post_sealed(h, post);
    }
    return posted;
  }

  /// Returns a posted buffer after its send completion.
  void complete(std::uint32_t hop, std::uint32_t slot, Bundle&& bundle) {
    auto& p = pools_.at(hop);
    if (slot >= p.state.size() || p.state[slot] != SlotState::in_flight) {
      throw usage_error("send completion for a slot that is not in flight");
    }
    bundle.clear();
    p.bufs[slot] = std::move(bundle);
    p.state[slot] = SlotState::idle;
    --p.in_flight;
    --in_flight_total_;
  }

  void touch(TimePoint now) { last_activity_ = now; }
  TimePoint last_activity() const { return last_activity_; }

  std::size_t in_flight() const { return in_flight_total_; }

  /// Bytes sitting in open or sealed buffers, not yet posted.
  std::size_t resident_bytes() const {
    std::size_t total = 0;
    for (const auto& p : pools_) {
      for (std::size_t s = 0; s < p.state.size(); ++s) {
        if (p.state[s] == SlotState::open || p.state[s] == SlotState::sealed) total += p.bufs[s].tail();
      }
    }
    return total;
  }

  std::size_t blocked_bytes() const {
    std::size_t total = 0;
    for (const auto& p : pools_) total += p.blocklist.bytes();
    return total;
  }

  /// Nothing buffered, blocked or in flight.
  bool drained() const { return blocked_total_ == 0 && in_flight_total_ == 0 && resident_bytes() == 0; }

 private:
  void seal(Pool& p) {
    const auto s = static_cast<std::size_t>(p.open);
    p.open = -1;
    if (p.bufs[s].empty()) {
      p.state[s] = SlotState::idle;
      return;
    }
    p.state[s] = SlotState::sealed;
    ++p.sealed;
  }

  template <class Post>
  std::size_t post_sealed(std::uint32_t h, Post& post) {
    auto& p = pools_[h];
    std::size_t posted = 0;
    for (std::uint32_t s = 0; s < p.state.size() && p.sealed; ++s) {
      if (p.state[s] != SlotState::sealed) continue;
      p.state[s] = SlotState::in_flight;
      --p.sealed;
      ++p.in_flight;
      ++in_flight_total_;
      ++stats_.posted_bundles;
      stats_.posted_bytes += p.bufs[s].tail();
      ++posted;
      post(h, s, std::move(p.bufs[s]));
    }
    return posted;
  }

  const RoutingTable* table_;
  std::vector<Pool> pools_;
  SendStats stats_;
  std::size_t blocked_total_ = 0;
  std::size_t in_flight_total_ = 0;
  TimePoint last_activity_{};
};

/// Routes every record of a received bundle into `st`'s send buffers, one
/// memcpy per record. Once a record finds no buffer, it and every later
/// record go to their hops' blocklists. Control
/// records are handed to `on_control(Record)` and never buffered. A corrupt
/// bundle is dropped whole. Returns true iff nothing was blocklisted.
template <class OnControl>
bool route(std::span<const std::byte> bundle, ThreadSendState& st, TimePoint now, OnControl&& on_control) {
  if (!validate_records(bundle)) {
    ++st.stats().corrupt_bundles;
    return true;
  }
  const RoutingTable& table = st.table();
  const std::size_t world = table.world_size();
  bool blocked = false;
  for (const Record& rec : RecordRange(bundle)) {
    if (rec.is_control()) {
      on_control(rec);
      continue;
    }
    if (rec.dst >= world) {
      ++st.stats().protocol_faults;
      continue;
    }
    const std::uint32_t hop = table.hop_index(rec.dst);
    const auto raw = rec.raw();
    if (raw.size() > st.capacity(hop)) {
      ++st.stats().protocol_faults;
      continue;
    }
    // A hop with a backlog counts as exhausted so its records stay in order.
    if (!blocked && st.pool(hop).blocklist.empty()) {
      if (Bundle* b = st.get_buf(hop, raw.size(), now)) {
        b->append_raw(raw);
        ++st.stats().routed_msgs;
        st.stats().routed_bytes += raw.size();
        continue;
      }
      blocked = true;
    }
    st.block(hop, raw);
  }
  st.touch(now);
  return !blocked;
}

}  // namespace buddy
