#pragma once

#include <chrono>
#include <cstddef>
#include <string>

#include "buddy/clock.hpp"
#include "buddy/config.hpp"
#include "buddy/error.hpp"

namespace buddy {

struct AgentConfig {
  std::size_t remote_buf_size = 4096;  // agent-to-agent bundle size (link MTU baseline)
  std::size_t local_buf_size = 4096;   // agent-to-process bundle size
  std::size_t bufs_per_dest = 4;
  std::size_t routing_threads = 8;
  Micros flush_timeout{500};
  Micros idle_timeout{5000};
  std::size_t poll_batch = 64;
  std::size_t recv_bufs_per_link = 0;  // 0 selects 2 x routing_threads

  std::size_t recv_buffers_per_link() const {
    return recv_bufs_per_link ? recv_bufs_per_link : 2 * routing_threads;
  }

  void validate() const {
    if (remote_buf_size < 16) throw config_error("agent.remote_buf_size must be >= 16");
    if (local_buf_size < 16) throw config_error("agent.local_buf_size must be >= 16");
    if (bufs_per_dest < 1) throw config_error("agent.bufs_per_dest must be >= 1");
    if (routing_threads < 1) throw config_error("agent.routing_threads must be >= 1");
    if (idle_timeout < flush_timeout) throw config_error("agent.idle_timeout must be >= agent.flush_timeout");
    if (poll_batch < 1) throw config_error("agent.poll_batch must be >= 1");
  }

  static AgentConfig from_config(const KeyValueConfig& cfg, const std::string& prefix = "agent.") {
    AgentConfig a;
    a.remote_buf_size = cfg.get_number(prefix + "remote_buf_size", a.remote_buf_size);
    a.local_buf_size = cfg.get_number(prefix + "local_buf_size", a.local_buf_size);
    a.bufs_per_dest = cfg.get_number(prefix + "bufs_per_dest", a.bufs_per_dest);
    a.routing_threads = cfg.get_number(prefix + "routing_threads", a.routing_threads);
    a.flush_timeout = Micros(cfg.get_number<std::int64_t>(prefix + "flush_timeout_us", a.flush_timeout.count()));
    a.idle_timeout = Micros(cfg.get_number<std::int64_t>(prefix + "idle_timeout_us", a.idle_timeout.count()));
    a.poll_batch = cfg.get_number(prefix + "poll_batch", a.poll_batch);
    a.recv_bufs_per_link = cfg.get_number(prefix + "recv_bufs_per_link", a.recv_bufs_per_link);
    a.validate();
    return a;
  }

  void write(KeyValueConfig& cfg, const std::string& prefix = "agent.") const {
    cfg.set(prefix + "remote_buf_size", std::to_string(remote_buf_size));
    cfg.set(prefix + "local_buf_size", std::to_string(local_buf_size));
    cfg.set(prefix + "bufs_per_dest", std::to_string(bufs_per_dest));
    cfg.set(prefix + "routing_threads", std::to_string(routing_threads));
    cfg.set(prefix + "flush_timeout_us", std::to_string(flush_timeout.count()));
    cfg.set(prefix + "idle_timeout_us", std::to_string(idle_timeout.count()));
    cfg.set(prefix + "poll_batch", std::to_string(poll_batch));
    cfg.set(prefix + "recv_bufs_per_link", std::to_string(recv_bufs_per_link));
  }
};

struct RuntimeConfig {
  std::size_t runtime_bufs = 8;
  std::size_t buf_size = 4096;
  std::size_t recv_buf_size = 0;  // 0 selects buf_size; must cover agent.local_buf_size
  Micros flush_timeout{500};
  std::chrono::milliseconds finalize_timeout{30000};

  std::size_t receive_capacity() const { return recv_buf_size ? recv_buf_size : buf_size; }
  std::size_t max_payload() const { return buf_size - 8; }

  void validate() const {
    if (runtime_bufs < 2) throw config_error("runtime.runtime_bufs must be >= 2");
    if (buf_size < 16) throw config_error("runtime.buf_size must be >= 16");
  }

  static RuntimeConfig from_config(const KeyValueConfig& cfg, const std::string& prefix = "runtime.") {
    RuntimeConfig r;
    r.runtime_bufs = cfg.get_number(prefix + "runtime_bufs", r.runtime_bufs);
    r.buf_size = cfg.get_number(prefix + "buf_size", r.buf_size);
    r.recv_buf_size = cfg.get_number(prefix + "recv_buf_size", r.recv_buf_size);
    r.flush_timeout = Micros(cfg.get_number<std::int64_t>(prefix + "flush_timeout_us", r.flush_timeout.count()));
    r.finalize_timeout = std::chrono::milliseconds(
        cfg.get_number<std::int64_t>(prefix + "finalize_timeout_ms", r.finalize_timeout.count()));
    r.validate();
    return r;
  }

  void write(KeyValueConfig& cfg, const std::string& prefix = "runtime.") const {
    cfg.set(prefix + "runtime_bufs", std::to_string(runtime_bufs));
    cfg.set(prefix + "buf_size", std::to_string(buf_size));
    cfg.set(prefix + "recv_buf_size", std::to_string(recv_buf_size));
    cfg.set(prefix + "flush_timeout_us", std::to_string(flush_timeout.count()));
    cfg.set(prefix + "finalize_timeout_ms", std::to_string(finalize_timeout.count()));
  }
};

}  // namespace buddy
