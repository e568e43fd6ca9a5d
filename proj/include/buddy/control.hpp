#pragma once

// Control records travel with dst_rank = kControlRank. The first payload
// byte is the opcode:
//   0x01 LOCAL_DONE  [op]
//   0x02 PROBE       [op][u32 round]
//   0x03 ACK         [op][u32 round][u64 sent][u64 received][u8 voted]
//   0x04 TERMINATE   [op]

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "buddy/wire.hpp"

namespace buddy {

enum class ControlOp : std::uint8_t { local_done = 0x01, probe = 0x02, ack = 0x03, terminate = 0x04 };

struct ControlMessage {
  ControlOp op = ControlOp::local_done;
  std::uint32_t round = 0;
  std::uint64_t sent = 0;
  std::uint64_t received = 0;
  bool voted = false;

  static ControlMessage local_done() { return {ControlOp::local_done}; }
  static ControlMessage probe(std::uint32_t round) { return {ControlOp::probe, round}; }
  static ControlMessage ack(std::uint32_t round, std::uint64_t sent, std::uint64_t received, bool voted) {
    return {ControlOp::ack, round, sent, received, voted};
  }
  static ControlMessage terminate() { return {ControlOp::terminate}; }

  friend bool operator==(const ControlMessage&, const ControlMessage&) = default;
};

inline constexpr std::size_t kAckPayloadSize = 1 + 4 + 8 + 8 + 1;
inline constexpr std::size_t kMaxControlPayload = kAckPayloadSize;

inline std::vector<std::byte> encode_control(const ControlMessage& m) {
  std::vector<std::byte> out;
  switch (m.op) {
    case ControlOp::local_done:
    case ControlOp::terminate:
      out.resize(1);
      break;
    case ControlOp::probe:
      out.resize(5);
      detail::store_le32(out.data() + 1, m.round);
      break;
    case ControlOp::ack:
      out.resize(kAckPayloadSize);
      detail::store_le32(out.data() + 1, m.round);
      detail::store_le64(out.data() + 5, m.sent);
      detail::store_le64(out.data() + 13, m.received);
      out[21] = std::byte(m.voted ? 1 : 0);
      break;
  }
  out[0] = std::byte(static_cast<std::uint8_t>(m.op));
  return out;
}

/// Null for an unknown opcode or a payload of the wrong length.
inline std::optional<ControlMessage> decode_control(std::span<const std::byte> p) {
  if (p.empty()) return std::nullopt;
  ControlMessage m;
  switch (std::to_integer<std::uint8_t>(p[0])) {
    case 0x01:
      if (p.size() != 1) return std::nullopt;
      m.op = ControlOp::local_done;
      return m;
    case 0x04:
      if (p.size() != 1) return std::nullopt;
      m.op = ControlOp::terminate;
      return m;
    case 0x02:
      if (p.size() != 5) return std::nullopt;
      m.op = ControlOp::probe;
      m.round = detail::load_le32(p.data() + 1);
      return m;
    case 0x03: {
      if (p.size() != kAckPayloadSize) return std::nullopt;
      const auto voted = std::to_integer<std::uint8_t>(p[21]);
      if (voted > 1) return std::nullopt;
      m.op = ControlOp::ack;
      m.round = detail::load_le32(p.data() + 1);
      m.sent = detail::load_le64(p.data() + 5);
      m.received = detail::load_le64(p.data() + 13);
      m.voted = voted == 1;
      return m;
    }
    default:
      return std::nullopt;
  }
}

}  // namespace buddy
