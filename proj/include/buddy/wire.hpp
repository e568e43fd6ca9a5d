#pragma once

// Message and bundle encoding shared by the runtime, the agent and every
// transport.
//
// Record layout, densely packed inside a bundle:
//   [u32 LE payload_size][u32 LE dst_rank][payload bytes]

#include <array>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <iterator>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <utility>

#include "buddy/error.hpp"

namespace buddy {

using Rank = std::uint32_t;

inline constexpr std::size_t kHeaderSize = 8;

// Records addressed to this rank carry agent/runtime control opcodes.
inline constexpr Rank kControlRank = 0xFFFFFFFFu;

using HeaderBytes = std::array<std::byte, kHeaderSize>;

namespace detail {

inline void store_le16(std::byte* p, std::uint16_t v) {
  p[0] = std::byte(v & 0xFF);
  p[1] = std::byte((v >> 8) & 0xFF);
}

inline void store_le32(std::byte* p, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) p[i] = std::byte((v >> (8 * i)) & 0xFF);
}

inline void store_le64(std::byte* p, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) p[i] = std::byte((v >> (8 * i)) & 0xFF);
}

inline std::uint16_t load_le16(const std::byte* p) {
  return static_cast<std::uint16_t>(std::to_integer<unsigned>(p[0]) |
                                    (std::to_integer<unsigned>(p[1]) << 8));
}

inline std::uint32_t load_le32(const std::byte* p) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | std::to_integer<std::uint32_t>(p[i]);
  return v;
}

inline std::uint64_t load_le64(const std::byte* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | std::to_integer<std::uint64_t>(p[i]);
  return v;
}

}  // namespace detail

struct MessageHeader {
  std::uint32_t payload_size = 0;
  Rank dst_rank = 0;

  friend bool operator==(const MessageHeader&, const MessageHeader&) = default;
};

inline HeaderBytes encode_header(std::uint32_t payload_size, Rank dst_rank) noexcept {
  HeaderBytes out{};
  detail::store_le32(out.data(), payload_size);
  detail::store_le32(out.data() + 4, dst_rank);
  return out;
}

inline MessageHeader decode_header(std::span<const std::byte> bytes) {
  if (bytes.size() != kHeaderSize) {
    throw framing_error("message header must be 8 bytes, got " + std::to_string(bytes.size()));
  }
  return {detail::load_le32(bytes.data()), detail::load_le32(bytes.data() + 4)};
}

/// One (header, payload) record viewed in place.
struct Record {
  Rank dst = 0;
  std::span<const std::byte> payload;

  std::size_t wire_size() const { return kHeaderSize + payload.size(); }
  // Header and payload as one contiguous span.
  std::span<const std::byte> raw() const {
    return {payload.data() - kHeaderSize, wire_size()};
  }
  bool is_control() const { return dst == kControlRank; }
};

/// Lazily walks the records in [0, tail) of a byte range. A header whose
/// declared size overruns the range raises corrupt_bundle.
class RecordRange {
 public:
  class iterator {
   public:
    using iterator_category = std::forward_iterator_tag;
    using value_type = Record;
    using difference_type = std::ptrdiff_t;
    using pointer = const Record*;
    using reference = const Record&;

    iterator() = default;
    iterator(std::span<const std::byte> bytes, std::size_t offset) : bytes_(bytes), offset_(offset) {
      load();
    }

    const Record& operator*() const { return current_; }
    const Record* operator->() const { return &current_; }
    iterator& operator++() {
      offset_ += current_.wire_size();
      load();
      return *this;
    }
    iterator operator++(int) {
      auto copy = *this;
      ++*this;
      return copy;
    }
    std::size_t offset() const { return offset_; }
    friend bool operator==(const iterator& a, const iterator& b) { return a.offset_ == b.offset_; }

   private:
    void load() {
      if (offset_ >= bytes_.size()) {
        offset_ = bytes_.size();
        return;
      }
      const std::size_t remaining = bytes_.size() - offset_;
      if (remaining < kHeaderSize) {
        throw corrupt_bundle("truncated header at offset " + std::to_string(offset_));
      }
      const auto* p = bytes_.data() + offset_;
      const std::uint32_t size = detail::load_le32(p);
      if (size > remaining - kHeaderSize) {
        throw corrupt_bundle("record at offset " + std::to_string(offset_) + " declares " +
                             std::to_string(size) + " bytes, only " +
                             std::to_string(remaining - kHeaderSize) + " remain");
      }
      current_.dst = detail::load_le32(p + 4);
      current_.payload = {p + kHeaderSize, size};
    }

    std::span<const std::byte> bytes_;
    std::size_t offset_ = 0;
    Record current_;
  };

  explicit RecordRange(std::span<const std::byte> bytes) : bytes_(bytes) {}

  iterator begin() const { return {bytes_, 0}; }
  iterator end() const { return {bytes_, bytes_.size()}; }
  iterator at(std::size_t offset) const { return {bytes_, offset}; }

 private:
  std::span<const std::byte> bytes_;
};

struct RecordCounts {
  std::size_t app = 0;
  std::size_t control = 0;
  std::size_t app_bytes = 0;
  std::size_t control_bytes = 0;
};

/// Walks every header once. Returns false instead of throwing on corruption.
inline bool validate_records(std::span<const std::byte> bytes, RecordCounts* counts = nullptr) {
  RecordCounts c;
  std::size_t off = 0;
  while (off < bytes.size()) {
    if (bytes.size() - off < kHeaderSize) return false;
    const std::uint32_t size = detail::load_le32(bytes.data() + off);
    if (size > bytes.size() - off - kHeaderSize) return false;
    const Rank dst = detail::load_le32(bytes.data() + off + 4);
    if (dst == kControlRank) {
      ++c.control;
      c.control_bytes += kHeaderSize + size;
    } else {
      ++c.app;
      c.app_bytes += kHeaderSize + size;
    }
    off += kHeaderSize + size;
  }
  if (counts) *counts = c;
  return true;
}

/// A fixed-capacity byte buffer of concatenated records; the unit of
/// transport. Move-only; ownership passes between threads and the
/// transport.
class Bundle {
 public:
  Bundle() = default;
  explicit Bundle(std::size_t capacity)
      : storage_(std::make_unique_for_overwrite<std::byte[]>(capacity)), capacity_(capacity) {}

  Bundle(Bundle&& other) noexcept
      : storage_(std::move(other.storage_)),
        capacity_(std::exchange(other.capacity_, 0)),
        tail_(std::exchange(other.tail_, 0)) {}
  Bundle& operator=(Bundle&& other) noexcept {
    storage_ = std::move(other.storage_);
    capacity_ = std::exchange(other.capacity_, 0);
    tail_ = std::exchange(other.tail_, 0);
    return *this;
  }
  Bundle(const Bundle&) = delete;
  Bundle& operator=(const Bundle&) = delete;

  Bundle clone() const {
    Bundle copy(capacity_);
    if (tail_) std::memcpy(copy.storage_.get(), storage_.get(), tail_);
    copy.tail_ = tail_;
    return copy;
  }

  std::size_t capacity() const noexcept { return capacity_; }
  std::size_t tail() const noexcept { return tail_; }
  std::size_t free_space() const noexcept { return capacity_ - tail_; }
  bool empty() const noexcept { return tail_ == 0; }
  bool valid() const noexcept { return storage_ != nullptr; }

  std::byte* data() noexcept { return storage_.get(); }
  const std::byte* data() const noexcept { return storage_.get(); }
  std::span<const std::byte> bytes() const noexcept { return {storage_.get(), tail_}; }

  void clear() noexcept { tail_ = 0; }

  // Used by transports after writing received bytes directly into data().
  void set_tail(std::size_t tail) {
    if (tail > capacity_) throw usage_error("bundle tail beyond capacity");
    tail_ = tail;
  }

  /// Appends one record. Returns false and leaves the bundle untouched when
  /// 8 + payload.size() exceeds the free space.
  bool append(Rank dst, std::span<const std::byte> payload) noexcept {
    const std::size_t total = kHeaderSize + payload.size();
    if (payload.size() > 0xFFFFFFFFu || total > free_space()) return false;
    std::byte* p = storage_.get() + tail_;
    detail::store_le32(p, static_cast<std::uint32_t>(payload.size()));
    detail::store_le32(p + 4, dst);
    if (!payload.empty()) std::memcpy(p + kHeaderSize, payload.data(), payload.size());
    tail_ += total;
    return true;
  }

  // Copies an already-encoded record (header and payload) verbatim.
  bool append_raw(std::span<const std::byte> record) noexcept {
    if (record.size() > free_space()) return false;
    std::memcpy(storage_.get() + tail_, record.data(), record.size());
    tail_ += record.size();
    return true;
  }

  RecordRange records() const { return RecordRange(bytes()); }

 private:
  std::unique_ptr<std::byte[]> storage_;
  std::size_t capacity_ = 0;
  std::size_t tail_ = 0;
};

inline std::span<const std::byte> as_bytes(std::string_view s) {
  return std::as_bytes(std::span(s.data(), s.size()));
}

}  // namespace buddy
