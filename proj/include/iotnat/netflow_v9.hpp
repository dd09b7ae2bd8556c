#pragma once

// NetFlow v9 (RFC 3954) datagram decoding.
//
// Datagram layout, all integers big-endian:
//   header   : version u16 (=9), count u16, sys_uptime_ms u32,
//              unix_secs u32, sequence u32, source_id u32
//   flowsets : flowset_id u16, length u16 (including these 4 bytes), body
//     id 0     template flowset: { template_id u16, field_count u16,
//              field_count x { type u16, length u16 } }*
//     id 1     options template (skipped)
//     id >=256 data flowset: records laid out per template, then padding

#include <cstdint>
#include <deque>
#include <map>
#include <span>
#include <utility>
#include <vector>

#include "iotnat/flowdata.hpp"

namespace iotnat::ingest::netflow {

inline constexpr std::uint16_t kVersion = 9;
inline constexpr std::size_t kHeaderSize = 20;
inline constexpr std::uint16_t kTemplateFlowsetId = 0;
inline constexpr std::uint16_t kOptionsTemplateFlowsetId = 1;
inline constexpr std::uint16_t kMinDataFlowsetId = 256;

// Field types understood by the decoder. Other types are skipped.
enum class Field : std::uint16_t {
  in_bytes = 1,
  protocol = 4,
  src_tos = 5,
  l4_src_port = 7,
  ipv4_src_addr = 8,
  input_snmp = 10,
  l4_dst_port = 11,
  ipv4_dst_addr = 12,
  last_switched = 21,   // sysuptime ms of the last packet
  first_switched = 22,  // sysuptime ms of the first packet
  out_bytes = 23,
  dst_tos = 55,
  flow_start_milliseconds = 152,
  flow_end_milliseconds = 153,
};

struct TemplateField {
  std::uint16_t type = 0;
  std::uint16_t length = 0;

  bool operator==(const TemplateField&) const = default;
};

struct Template {
  std::uint16_t template_id = 0;
  std::vector<TemplateField> fields;

  std::size_t record_length() const noexcept;
  bool operator==(const Template&) const = default;
};

struct PacketHeader {
  std::uint16_t version = kVersion;
  std::uint16_t count = 0;
  std::uint32_t sys_uptime_ms = 0;
  std::uint32_t unix_secs = 0;
  std::uint32_t sequence = 0;
  std::uint32_t source_id = 0;
};

// Templates per (source_id, template_id) plus data flowsets still waiting
// for their template. Confined to a single listener.
class TemplateCache {
 public:
  static constexpr std::size_t kDefaultPendingLimit = 10000;

  explicit TemplateCache(std::size_t pending_limit = kDefaultPendingLimit)
      : pending_limit_(pending_limit) {}

  const Template* find(std::uint32_t source_id, std::uint16_t template_id) const;
  std::size_t template_count() const noexcept { return templates_.size(); }
  std::size_t pending_flowsets() const noexcept { return pending_.size(); }
  std::size_t dropped_flowsets() const noexcept { return dropped_; }

 private:
  friend struct Decoder;

  struct Pending {
    PacketHeader header;
    std::uint16_t template_id;
    std::vector<std::uint8_t> body;
  };

  std::size_t pending_limit_;
  std::size_t dropped_ = 0;
  std::map<std::pair<std::uint32_t, std::uint16_t>, Template> templates_;
  std::deque<Pending> pending_;
};

struct DecodeResult {
  PacketHeader header;
  std::vector<FlowRecord> records;
  std::size_t templates_changed = 0;
  std::size_t flowsets_buffered = 0;
  std::size_t invalid_records = 0;  // end before start; dropped
};

// Throws Error(data, "unsupported-version" | "truncated-datagram" |
// "truncated-flowset" | "invalid-template"); on error the cache is unchanged.
DecodeResult decode_netflow_v9(std::span<const std::uint8_t> datagram, TemplateCache& cache);

PacketHeader parse_header(std::span<const std::uint8_t> datagram);

// Decodes one record laid out per `tmpl`. `bytes` must hold record_length().
// L7_PROTO_NAME is not carried on the wire and is set to "unknown".
FlowRecord decode_record(std::span<const std::uint8_t> bytes, const Template& tmpl,
                         const PacketHeader& header);

}  // namespace iotnat::ingest::netflow
