#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "iotnat/flowdata.hpp"

namespace iotnat::ingest {

// Flow CSV columns. The feature columns are mandatory; the rest default to
// zero / unlabeled when absent.
inline constexpr const char* kMandatoryColumns[] = {
    "IN_BYTES",    "OUT_BYTES",     "SRC_TOS",
    "DST_TOS",     "PROTOCOL",      "L4_DST_PORT",
    "L7_PROTO_NAME", "FLOW_START_MILLISECONDS", "FLOW_END_MILLISECONDS",
};
inline constexpr const char* kOptionalColumns[] = {
    "SRC_IP", "DST_IP", "L4_SRC_PORT", "INPUT_INTERFACE", "LABEL", "SRC_MAC",
};

struct RejectedRow {
  std::size_t line = 0;  // 1-based, header is line 1
  std::string reason;    // e.g. "negative-duration", "parse-error:L4_DST_PORT"
};

struct FlowCsvResult {
  FlowDataset dataset;
  std::vector<RejectedRow> rejected;
  std::size_t rows = 0;  // data rows seen; rows == dataset.size() + rejected.size()
};

// Label precedence per row: non-empty LABEL cell, then inventory lookup by
// SRC_IP, then unlabeled. Same for SRC_MAC.
FlowCsvResult parse_flow_csv(std::istream& in, const DeviceInventory* inventory = nullptr);
FlowCsvResult parse_flow_csv(const std::filesystem::path& path,
                             const DeviceInventory* inventory = nullptr);

// Writes every column, mandatory and optional, in a fixed order.
void write_flow_csv(std::ostream& out, const FlowDataset& dataset);
void write_flow_csv(const std::filesystem::path& path, const FlowDataset& dataset);
// Unlabeled raw records (collector output).
void write_flow_csv(std::ostream& out, const std::vector<FlowRecord>& flows);

// Inventory CSV with header MAC,IP,MODEL (MODEL may be "non-IoT").
DeviceInventory parse_inventory_csv(const std::filesystem::path& path);
void write_inventory_csv(const std::filesystem::path& path, const DeviceInventory& inventory);

// One DNS request seen on the wire.
struct DnsEvent {
  std::int64_t timestamp_ms = 0;
  Ipv4 observed_src_ip;
  std::uint16_t ip_id = 0;
  Ipv4 resolver_ip;
  std::string qname;  // lower-case, no trailing dot
  Label label;

  bool operator==(const DnsEvent&) const = default;
};

// Lower-cases and strips one trailing dot.
std::string normalize_qname(std::string_view qname);

struct DnsJsonlResult {
  std::vector<DnsEvent> events;
  std::vector<RejectedRow> rejected;
};

// Keys: ts_ms, src_ip, ip_id, resolver_ip, qname, optional label.
// Blank lines are skipped.
DnsJsonlResult parse_dns_jsonl(std::istream& in);
DnsJsonlResult parse_dns_jsonl(const std::filesystem::path& path);
void write_dns_jsonl(std::ostream& out, const std::vector<DnsEvent>& events);
void write_dns_jsonl(const std::filesystem::path& path, const std::vector<DnsEvent>& events);

}  // namespace iotnat::ingest
