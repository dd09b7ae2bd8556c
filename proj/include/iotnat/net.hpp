#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace iotnat {

// IPv4 address in host byte order.
struct Ipv4 {
  std::uint32_t value = 0;

  static std::optional<Ipv4> try_parse(std::string_view text);
  // Throws Error(data, "invalid-ipv4").
  static Ipv4 parse(std::string_view text);
  std::string str() const;

  auto operator<=>(const Ipv4&) const = default;
};

// 48-bit hardware address stored in the low bits.
struct MacAddress {
  std::uint64_t value = 0;

  static std::optional<MacAddress> try_parse(std::string_view text);
  static MacAddress parse(std::string_view text);
  // Lower-case, colon separated.
  std::string str() const;

  auto operator<=>(const MacAddress&) const = default;
};

}  // namespace iotnat
