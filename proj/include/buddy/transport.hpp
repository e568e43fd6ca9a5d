#pragma once

// SEND/RECV-style bundle transport with completion polling. Every
// implementation preserves message boundaries: one post_send arrives as
// exactly one receive completion carrying identical bytes.

#include <atomic>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "buddy/clock.hpp"
#include "buddy/wire.hpp"

namespace buddy {

using PeerId = std::uint32_t;
using WorkId = std::uint64_t;

enum class CompletionKind : std::uint8_t { send, recv };
enum class CompletionStatus : std::uint8_t { ok, link_error };

/// A completed work request. The buffer handed to post_send/post_recv is
/// returned here; for receives its tail equals `length`.
struct Completion {
  CompletionKind kind = CompletionKind::send;
  PeerId peer = 0;
  WorkId id = 0;
  std::uint32_t length = 0;
  CompletionStatus status = CompletionStatus::ok;
  Bundle buffer;

  bool ok() const { return status == CompletionStatus::ok; }
};

struct PeerAddress {
  PeerId id = 0;
  std::string host;         // empty when this peer connects to us
  std::uint16_t port = 0;
};

struct TransportConfig {
  PeerId self = 0;
  std::optional<PeerAddress> listen;  // required when any peer id > self
  std::vector<PeerAddress> peers;
  std::size_t credits = 16;           // outstanding bundles per link
  std::chrono::milliseconds connect_timeout{10000};
  std::size_t max_frame = 1u << 20;
};

class Endpoint {
 public:
  virtual ~Endpoint() = default;

  virtual PeerId local_id() const = 0;
  virtual std::vector<PeerId> peers() const = 0;

  /// Non-blocking. The bundle belongs to the transport until its send
  /// completion is polled. Pre: bundle.tail() > 0.
  virtual WorkId post_send(PeerId peer, Bundle bundle, WorkId id) = 0;
  WorkId post_send(PeerId peer, Bundle bundle) { return post_send(peer, std::move(bundle), next_id()); }

  /// Adds a buffer to the shared receive pool; the next bundle from any peer
  /// fills it.
  virtual WorkId post_recv(Bundle buffer, WorkId id) = 0;
  WorkId post_recv(Bundle buffer) { return post_recv(std::move(buffer), next_id()); }

  /// Non-blocking; appends at most `max` completions to `out`.
  virtual std::size_t poll(std::vector<Completion>& out, std::size_t max) = 0;
  std::vector<Completion> poll(std::size_t max = 64) {
    std::vector<Completion> out;
    poll(out, max);
    return out;
  }

  /// Blocks until a completion is pending or the timeout elapses.
  virtual bool wait(Micros timeout) = 0;

  virtual std::size_t posted_recvs() const = 0;
  virtual std::size_t pending_sends(PeerId peer) const = 0;

 protected:
  WorkId next_id() { return auto_id_.fetch_add(1, std::memory_order_relaxed); }

 private:
  std::atomic<WorkId> auto_id_{1ull << 62};
};

}  // namespace buddy
