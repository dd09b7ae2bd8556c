#include "iotnat/collector.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <array>
#include <cerrno>
#include <cstring>

#include "iotnat/error.hpp"
#include "iotnat/netflow_v9.hpp"

namespace iotnat::ingest {

namespace {
constexpr int kPollTimeoutMs = 100;
constexpr std::size_t kMaxDatagram = 65535;
}  // namespace

UdpCollector::UdpCollector(CollectorConfig config, FlowSink sink)
    : config_(std::move(config)), sink_(std::move(sink)), queue_(config_.queue_capacity) {}

UdpCollector::~UdpCollector() { stop(); }

void UdpCollector::start() {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(config_.port);
  if (::inet_pton(AF_INET, config_.bind_address.c_str(), &addr.sin_addr) != 1)
    throw_usage_error("invalid-bind-address", config_.bind_address);

  fd_ = ::socket(AF_INET, SOCK_DGRAM, 0);
  if (fd_ < 0) throw_io_error("bind-failed", std::strerror(errno));
  if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
    const std::string reason = std::strerror(errno);
    ::close(fd_);
    fd_ = -1;
    throw_io_error("bind-failed", config_.bind_address + ":" + std::to_string(config_.port) + " " + reason);
  }
  socklen_t len = sizeof addr;
  ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  bound_port_ = ntohs(addr.sin_port);

  dispatcher_ = std::jthread([this] { drain(); });
  listener_ = std::jthread([this](std::stop_token st) { listen(st); });
}

void UdpCollector::stop() {
  if (stopped_ || fd_ < 0) return;
  stopped_ = true;
  listener_.request_stop();
  if (listener_.joinable()) listener_.join();
  queue_.close();
  if (dispatcher_.joinable()) dispatcher_.join();
  ::close(fd_);
  fd_ = -1;
}

CollectorStats UdpCollector::stats() const {
  return {datagrams_.load(), records_.load(), malformed_.load()};
}

void UdpCollector::listen(std::stop_token stop) {
  netflow::TemplateCache cache(config_.pending_limit);
  std::vector<std::uint8_t> buffer(kMaxDatagram);
  pollfd pfd{fd_, POLLIN, 0};
  while (!stop.stop_requested()) {
    const int ready = ::poll(&pfd, 1, kPollTimeoutMs);
    if (ready <= 0) continue;
    const ssize_t n = ::recv(fd_, buffer.data(), buffer.size(), 0);
    if (n < 0) continue;
    ++datagrams_;
    try {
      auto decoded = netflow::decode_netflow_v9(
          std::span<const std::uint8_t>(buffer.data(), static_cast<std::size_t>(n)), cache);
      if (decoded.records.empty()) continue;
      records_ += decoded.records.size();
      queue_.push(std::move(decoded.records));
    } catch (const Error&) {
      ++malformed_;
    }
  }
}

void UdpCollector::drain() {
  while (auto batch = queue_.pop())
    for (const auto& record : *batch) sink_(record);
}

CollectorStats collect_udp(const std::string& bind_address, std::uint16_t port, const FlowSink& sink,
                           std::stop_token stop) {
  UdpCollector collector({bind_address, port}, sink);
  collector.start();
  std::mutex mu;
  std::condition_variable_any cv;
  std::unique_lock lock(mu);
  cv.wait(lock, stop, [] { return false; });
  collector.stop();
  return collector.stats();
}

}  // namespace iotnat::ingest
