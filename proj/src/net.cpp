#include "iotnat/net.hpp"

#include <charconv>
#include <cstdio>

#include "iotnat/error.hpp"

namespace iotnat {

std::optional<Ipv4> Ipv4::try_parse(std::string_view text) {
  std::uint32_t value = 0;
  const char* p = text.data();
  const char* end = text.data() + text.size();
  for (int octet = 0; octet < 4; ++octet) {
    if (octet > 0) {
      if (p == end || *p != '.') return std::nullopt;
      ++p;
    }
    unsigned part = 0;
    auto [next, ec] = std::from_chars(p, end, part);
    if (ec != std::errc{} || next == p || next - p > 3 || part > 255) return std::nullopt;
    value = (value << 8) | part;
    p = next;
  }
  if (p != end) return std::nullopt;
  return Ipv4{value};
}

Ipv4 Ipv4::parse(std::string_view text) {
  if (auto ip = try_parse(text)) return *ip;
  throw_data_error("invalid-ipv4", std::string(text));
}

std::string Ipv4::str() const {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%u.%u.%u.%u", (value >> 24) & 0xff, (value >> 16) & 0xff,
                (value >> 8) & 0xff, value & 0xff);
  return buf;
}

std::optional<MacAddress> MacAddress::try_parse(std::string_view text) {
  if (text.size() != 17) return std::nullopt;
  std::uint64_t value = 0;
  for (int i = 0; i < 6; ++i) {
    const auto chunk = text.substr(i * 3, 2);
    if (i < 5 && text[i * 3 + 2] != ':' && text[i * 3 + 2] != '-') return std::nullopt;
    unsigned byte = 0;
    auto [next, ec] = std::from_chars(chunk.data(), chunk.data() + 2, byte, 16);
    if (ec != std::errc{} || next != chunk.data() + 2) return std::nullopt;
    value = (value << 8) | byte;
  }
  return MacAddress{value};
}

MacAddress MacAddress::parse(std::string_view text) {
  if (auto mac = try_parse(text)) return *mac;
  throw_data_error("invalid-mac", std::string(text));
}

std::string MacAddress::str() const {
  char buf[18];
  std::snprintf(buf, sizeof buf, "%02x:%02x:%02x:%02x:%02x:%02x",
                static_cast<unsigned>((value >> 40) & 0xff), static_cast<unsigned>((value >> 32) & 0xff),
                static_cast<unsigned>((value >> 24) & 0xff), static_cast<unsigned>((value >> 16) & 0xff),
                static_cast<unsigned>((value >> 8) & 0xff), static_cast<unsigned>(value & 0xff));
  return buf;
}

}  // namespace iotnat
