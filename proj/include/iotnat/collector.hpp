#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <mutex>
#include <optional>
#include <stop_token>
#include <string>
#include <thread>

#include "iotnat/flowdata.hpp"

namespace iotnat::ingest {

// FIFO hand-off with backpressure: push blocks while full.
template <typename T>
class BoundedQueue {
 public:
  explicit BoundedQueue(std::size_t capacity) : capacity_(capacity == 0 ? 1 : capacity) {}

  // Returns false if the queue was closed.
  bool push(T value) {
    std::unique_lock lock(mu_);
    not_full_.wait(lock, [&] { return closed_ || items_.size() < capacity_; });
    if (closed_) return false;
    items_.push_back(std::move(value));
    not_empty_.notify_one();
    return true;
  }

  // Blocks until an item is available; nullopt once closed and drained.
  std::optional<T> pop() {
    std::unique_lock lock(mu_);
    not_empty_.wait(lock, [&] { return closed_ || !items_.empty(); });
    if (items_.empty()) return std::nullopt;
    T value = std::move(items_.front());
    items_.pop_front();
    not_full_.notify_one();
    return value;
  }

  void close() {
    std::lock_guard lock(mu_);
    closed_ = true;
    not_empty_.notify_all();
    not_full_.notify_all();
  }

 private:
  std::size_t capacity_;
  std::mutex mu_;
  std::condition_variable not_empty_;
  std::condition_variable not_full_;
  std::deque<T> items_;
  bool closed_ = false;
};

using FlowSink = std::function<void(const FlowRecord&)>;

struct CollectorConfig {
  std::string bind_address = "0.0.0.0";
  std::uint16_t port = 2055;  // 0 picks an ephemeral port
  std::size_t queue_capacity = 1024;
  std::size_t pending_limit = 10000;
};

struct CollectorStats {
  std::uint64_t datagrams = 0;
  std::uint64_t records = 0;
  std::uint64_t malformed = 0;
};

// Receives NetFlow v9 datagrams on a UDP socket and hands decoded records to
// a sink on a separate thread, preserving arrival order.
class UdpCollector {
 public:
  UdpCollector(CollectorConfig config, FlowSink sink);
  ~UdpCollector();
  UdpCollector(const UdpCollector&) = delete;
  UdpCollector& operator=(const UdpCollector&) = delete;

  // Binds and spawns the threads. Throws Error(io, "bind-failed").
  void start();
  // Idempotent. Returns after the listener exits (<= ~100 ms) and every
  // queued record has reached the sink.
  void stop();

  std::uint16_t port() const noexcept { return bound_port_; }
  CollectorStats stats() const;

 private:
  void listen(std::stop_token stop);
  void drain();

  CollectorConfig config_;
  FlowSink sink_;
  int fd_ = -1;
  std::uint16_t bound_port_ = 0;
  BoundedQueue<std::vector<FlowRecord>> queue_;
  std::atomic<std::uint64_t> datagrams_{0};
  std::atomic<std::uint64_t> records_{0};
  std::atomic<std::uint64_t> malformed_{0};
  std::jthread listener_;
  std::jthread dispatcher_;
  bool stopped_ = false;
};

// Blocking convenience wrapper: runs a collector until `stop` is requested.
CollectorStats collect_udp(const std::string& bind_address, std::uint16_t port,
                           const FlowSink& sink, std::stop_token stop);

}  // namespace iotnat::ingest
