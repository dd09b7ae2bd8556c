#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "iotnat/flowdata.hpp"

namespace testsupport {

inline iotnat::FlowRecord flow(std::int64_t start, std::int64_t end, std::uint16_t dst_port = 443,
                               std::uint64_t in_bytes = 100, std::uint64_t out_bytes = 200) {
  iotnat::FlowRecord f;
  f.key.src_ip = iotnat::Ipv4::parse("192.168.1.5");
  f.key.dst_ip = iotnat::Ipv4::parse("8.8.8.8");
  f.key.ip_protocol = 6;
  f.key.src_port = 40000;
  f.key.dst_port = dst_port;
  f.in_bytes = in_bytes;
  f.out_bytes = out_bytes;
  f.l7_proto_name = "SSL";
  f.flow_start_ms = start;
  f.flow_end_ms = end;
  return f;
}

inline iotnat::LabeledFlow labeled(iotnat::FlowRecord f, const std::string& label, std::uint64_t mac) {
  return {std::move(f), iotnat::Label::parse(label), iotnat::MacAddress{mac}};
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("iotnat-" + tag + "-" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace testsupport
