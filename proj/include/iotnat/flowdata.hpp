#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "iotnat/net.hpp"

namespace iotnat {

// A device model: type, make and version, canonically "type.make.version".
// Segments may not contain '.'; vendors with dots in their names use '_'.
struct DeviceModelId {
  std::string type;
  std::string make;
  std::string version;

  static std::optional<DeviceModelId> try_parse(std::string_view canonical);
  static DeviceModelId parse(std::string_view canonical);
  std::string str() const;

  auto operator<=>(const DeviceModelId&) const = default;
};

// Ground-truth class of a flow. "non-IoT" is a reserved value, never a model.
class Label {
 public:
  enum class Kind { unlabeled, non_iot, model };

  static constexpr std::string_view kNonIot = "non-IoT";

  Label() = default;
  static Label unlabeled() { return Label{}; }
  static Label non_iot();
  static Label of(DeviceModelId model);
  // "" -> unlabeled, "non-IoT" -> non_iot, otherwise a canonical model id.
  static Label parse(std::string_view text);

  Kind kind() const noexcept { return kind_; }
  bool is_model() const noexcept { return kind_ == Kind::model; }
  bool is(const DeviceModelId& m) const noexcept { return kind_ == Kind::model && model_ == m; }
  // Only meaningful when is_model().
  const DeviceModelId& model() const noexcept { return model_; }
  std::string str() const;

  bool operator==(const Label&) const = default;

 private:
  Kind kind_ = Kind::unlabeled;
  DeviceModelId model_;
};

struct InventoryEntry {
  MacAddress mac;
  Ipv4 internal_ip;
  Label label;  // model or non-IoT

  bool operator==(const InventoryEntry&) const = default;
};

// IP/MAC/model table of a lab network with static internal addressing.
class DeviceInventory {
 public:
  DeviceInventory() = default;
  // Throws Error(data, "duplicate-mac" | "duplicate-ip").
  explicit DeviceInventory(std::vector<InventoryEntry> entries);

  const InventoryEntry* find_by_ip(Ipv4 ip) const;
  const InventoryEntry* find_by_mac(MacAddress mac) const;
  const std::vector<InventoryEntry>& entries() const noexcept { return entries_; }

 private:
  std::vector<InventoryEntry> entries_;
  std::unordered_map<std::uint32_t, std::size_t> by_ip_;
  std::unordered_map<std::uint64_t, std::size_t> by_mac_;
};

struct FlowKey {
  std::uint32_t ingress_interface = 0;
  Ipv4 src_ip;
  Ipv4 dst_ip;
  std::uint8_t ip_protocol = 0;
  std::uint16_t src_port = 0;
  std::uint16_t dst_port = 0;
  std::uint8_t tos = 0;

  bool operator==(const FlowKey&) const = default;
};

// One NetFlow aggregation with the eight model features and its key.
struct FlowRecord {
  FlowKey key;
  std::uint64_t in_bytes = 0;
  std::uint64_t out_bytes = 0;
  std::uint8_t src_tos = 0;
  std::uint8_t dst_tos = 0;
  std::string l7_proto_name;
  std::int64_t flow_start_ms = 0;
  std::int64_t flow_end_ms = 0;

  bool operator==(const FlowRecord&) const = default;
};

// FLOW_END_MILLISECONDS - FLOW_START_MILLISECONDS.
// Throws Error(data, "negative-duration") when end precedes start.
std::int64_t flow_duration(const FlowRecord& flow);

struct LabeledFlow {
  FlowRecord flow;
  Label label;
  MacAddress source_mac;

  bool operator==(const LabeledFlow&) const = default;
};

struct FlowDataset {
  std::vector<LabeledFlow> flows;

  std::size_t size() const noexcept { return flows.size(); }
  bool empty() const noexcept { return flows.empty(); }
  bool operator==(const FlowDataset&) const = default;
};

struct SplitRatios {
  double training = 0.70;
  double validation = 0.10;
  double test = 0.20;

  // Throws Error(usage, "invalid-ratios") unless all are >= 0 and they sum
  // to 1 within 1e-9.
  void validate() const;
  // "0.7,0.1,0.2"
  static SplitRatios parse(std::string_view text);
};

struct DatasetSplit {
  FlowDataset training;
  FlowDataset validation;
  FlowDataset test;
  SplitRatios ratios;
};

struct RejectedFlow {
  std::size_t index = 0;  // position in the external input
  std::string reason;     // "no-match", "ambiguous", "unknown-device", "not-router-source"
};

struct LabelingResult {
  FlowDataset labeled;
  std::vector<RejectedFlow> rejected;
};

// Labels NATed flows (src = router) by joining each one to its pre-NAT twin
// on (dst_ip, protocol, src_port, dst_port) with overlapping time intervals
// and looking the twin's source address up in the inventory.
LabelingResult label_flows(std::span<const FlowRecord> external,
                           std::span<const FlowRecord> internal,
                           const DeviceInventory& inventory, Ipv4 router_ip);

// Per source MAC: sort by (start, end, input order) and cut at
// floor(r1*n) and floor((r1+r2)*n). Partitions list MACs in order of first
// appearance.
DatasetSplit chronological_split(const FlowDataset& dataset, const SplitRatios& ratios = {});

// Flows labeled exactly `model`, in input order.
FlowDataset filter_model(const FlowDataset& dataset, const DeviceModelId& model);

// Distinct model labels in order of first appearance.
std::vector<DeviceModelId> models_in(const FlowDataset& dataset);

}  // namespace iotnat
