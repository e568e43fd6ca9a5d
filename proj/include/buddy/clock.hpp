#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>

namespace buddy {

using SteadyClock = std::chrono::steady_clock;
using TimePoint = SteadyClock::time_point;
using Micros = std::chrono::microseconds;

class Clock {
 public:
  virtual ~Clock() = default;
  virtual TimePoint now() const = 0;
};

class MonotonicClock final : public Clock {
 public:
  TimePoint now() const override { return SteadyClock::now(); }
};

inline const Clock& monotonic_clock() {
  static const MonotonicClock clock;
  return clock;
}

/// Time only moves when the owner calls advance(). Lets flush and idle
/// timeouts be exercised step by step.
class ManualClock final : public Clock {
 public:
  TimePoint now() const override {
    return TimePoint(Micros(micros_.load(std::memory_order_acquire)));
  }
  void advance(Micros d) { micros_.fetch_add(d.count(), std::memory_order_acq_rel); }
  void set(Micros t) { micros_.store(t.count(), std::memory_order_release); }
  Micros elapsed() const { return Micros(micros_.load(std::memory_order_acquire)); }

 private:
  std::atomic<std::int64_t> micros_{0};
};

}  // namespace buddy
