#include "iotnat/flowdata.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <numeric>
#include <tuple>

#include "iotnat/error.hpp"

namespace iotnat {

std::optional<DeviceModelId> DeviceModelId::try_parse(std::string_view canonical) {
  const auto first = canonical.find('.');
  if (first == std::string_view::npos) return std::nullopt;
  const auto second = canonical.find('.', first + 1);
  if (second == std::string_view::npos) return std::nullopt;
  if (canonical.find('.', second + 1) != std::string_view::npos) return std::nullopt;
  DeviceModelId id{std::string(canonical.substr(0, first)),
                   std::string(canonical.substr(first + 1, second - first - 1)),
                   std::string(canonical.substr(second + 1))};
  if (id.type.empty() || id.make.empty() || id.version.empty()) return std::nullopt;
  return id;
}

DeviceModelId DeviceModelId::parse(std::string_view canonical) {
  if (auto id = try_parse(canonical)) return *id;
  throw_data_error("invalid-model-id", std::string(canonical));
}

std::string DeviceModelId::str() const { return type + "." + make + "." + version; }

Label Label::non_iot() {
  Label l;
  l.kind_ = Kind::non_iot;
  return l;
}

Label Label::of(DeviceModelId model) {
  Label l;
  l.kind_ = Kind::model;
  l.model_ = std::move(model);
  return l;
}

Label Label::parse(std::string_view text) {
  if (text.empty()) return unlabeled();
  if (text == kNonIot) return non_iot();
  return of(DeviceModelId::parse(text));
}

std::string Label::str() const {
  switch (kind_) {
    case Kind::unlabeled:
      return {};
    case Kind::non_iot:
      return std::string(kNonIot);
    case Kind::model:
      return model_.str();
  }
  return {};
}

DeviceInventory::DeviceInventory(std::vector<InventoryEntry> entries) : entries_(std::move(entries)) {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (!by_mac_.emplace(entries_[i].mac.value, i).second)
      throw_data_error("duplicate-mac", entries_[i].mac.str());
    if (!by_ip_.emplace(entries_[i].internal_ip.value, i).second)
      throw_data_error("duplicate-ip", entries_[i].internal_ip.str());
  }
}

const InventoryEntry* DeviceInventory::find_by_ip(Ipv4 ip) const {
  auto it = by_ip_.find(ip.value);
  return it == by_ip_.end() ? nullptr : &entries_[it->second];
}

const InventoryEntry* DeviceInventory::find_by_mac(MacAddress mac) const {
  auto it = by_mac_.find(mac.value);
  return it == by_mac_.end() ? nullptr : &entries_[it->second];
}

std::int64_t flow_duration(const FlowRecord& flow) {
  if (flow.flow_end_ms < flow.flow_start_ms)
    throw_data_error("negative-duration", std::to_string(flow.flow_start_ms) + ".." +
                                              std::to_string(flow.flow_end_ms));
  return flow.flow_end_ms - flow.flow_start_ms;
}

void SplitRatios::validate() const {
  if (training < 0 || validation < 0 || test < 0 || !std::isfinite(training + validation + test))
    throw_usage_error("invalid-ratios", "ratios must be non-negative");
  if (std::abs(training + validation + test - 1.0) > 1e-9)
    throw_usage_error("invalid-ratios", "ratios must sum to 1");
}

SplitRatios SplitRatios::parse(std::string_view text) {
  double parts[3];
  std::size_t pos = 0;
  for (int i = 0; i < 3; ++i) {
    const auto comma = text.find(',', pos);
    if ((i < 2) == (comma == std::string_view::npos))
      throw_usage_error("invalid-ratios", "expected three comma separated values");
    const auto item = text.substr(pos, comma == std::string_view::npos ? text.npos : comma - pos);
    auto [next, ec] = std::from_chars(item.data(), item.data() + item.size(), parts[i]);
    if (ec != std::errc{} || next != item.data() + item.size())
      throw_usage_error("invalid-ratios", std::string(item));
    pos = comma + 1;
  }
  SplitRatios r{parts[0], parts[1], parts[2]};
  r.validate();
  return r;
}

namespace {

struct FourTuple {
  std::uint32_t dst_ip;
  std::uint8_t protocol;
  std::uint16_t src_port;
  std::uint16_t dst_port;
  auto operator<=>(const FourTuple&) const = default;
};

FourTuple tuple_of(const FlowRecord& f) {
  return {f.key.dst_ip.value, f.key.ip_protocol, f.key.src_port, f.key.dst_port};
}

bool overlaps(const FlowRecord& a, const FlowRecord& b) {
  return a.flow_start_ms <= b.flow_end_ms && b.flow_start_ms <= a.flow_end_ms;
}

// floor(x) robust to representation error, e.g. (0.7 + 0.1) * 10.
std::size_t floor_count(double x) { return static_cast<std::size_t>(std::floor(x + 1e-9)); }

}  // namespace

LabelingResult label_flows(std::span<const FlowRecord> external, std::span<const FlowRecord> internal,
                           const DeviceInventory& inventory, Ipv4 router_ip) {
  std::multimap<FourTuple, std::size_t> index;
  for (std::size_t i = 0; i < internal.size(); ++i) index.emplace(tuple_of(internal[i]), i);

  LabelingResult result;
  for (std::size_t i = 0; i < external.size(); ++i) {
    const FlowRecord& ext = external[i];
    if (ext.key.src_ip != router_ip) {
      result.rejected.push_back({i, "not-router-source"});
      continue;
    }
    const FlowRecord* twin = nullptr;
    std::size_t candidates = 0;
    auto [lo, hi] = index.equal_range(tuple_of(ext));
    for (auto it = lo; it != hi; ++it) {
      if (overlaps(ext, internal[it->second])) {
        ++candidates;
        twin = &internal[it->second];
      }
    }
    if (candidates == 0) {
      result.rejected.push_back({i, "no-match"});
      continue;
    }
    if (candidates > 1) {
      result.rejected.push_back({i, "ambiguous"});
      continue;
    }
    const InventoryEntry* entry = inventory.find_by_ip(twin->key.src_ip);
    if (entry == nullptr) {
      result.rejected.push_back({i, "unknown-device"});
      continue;
    }
    result.labeled.flows.push_back({ext, entry->label, entry->mac});
  }
  return result;
}

DatasetSplit chronological_split(const FlowDataset& dataset, const SplitRatios& ratios) {
  ratios.validate();
  DatasetSplit split;
  split.ratios = ratios;

  std::vector<std::uint64_t> mac_order;
  std::map<std::uint64_t, std::vector<std::size_t>> per_mac;
  for (std::size_t i = 0; i < dataset.flows.size(); ++i) {
    const auto mac = dataset.flows[i].source_mac.value;
    auto [it, inserted] = per_mac.try_emplace(mac);
    if (inserted) mac_order.push_back(mac);
    it->second.push_back(i);
  }

  for (const auto mac : mac_order) {
    auto& idx = per_mac[mac];
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      const auto& fa = dataset.flows[a].flow;
      const auto& fb = dataset.flows[b].flow;
      return std::tie(fa.flow_start_ms, fa.flow_end_ms) < std::tie(fb.flow_start_ms, fb.flow_end_ms);
    });
    const auto n = idx.size();
    const auto cut1 = std::min(n, floor_count(ratios.training * static_cast<double>(n)));
    const auto cut2 =
        std::clamp(floor_count((ratios.training + ratios.validation) * static_cast<double>(n)), cut1, n);
    for (std::size_t k = 0; k < n; ++k) {
      auto& target = k < cut1 ? split.training : (k < cut2 ? split.validation : split.test);
      target.flows.push_back(dataset.flows[idx[k]]);
    }
  }
  return split;
}

FlowDataset filter_model(const FlowDataset& dataset, const DeviceModelId& model) {
  FlowDataset out;
  for (const auto& f : dataset.flows)
    if (f.label.is(model)) out.flows.push_back(f);
  return out;
}

std::vector<DeviceModelId> models_in(const FlowDataset& dataset) {
  std::vector<DeviceModelId> models;
  for (const auto& f : dataset.flows) {
    if (!f.label.is_model()) continue;
    if (std::find(models.begin(), models.end(), f.label.model()) == models.end())
      models.push_back(f.label.model());
  }
  return models;
}

}  // namespace iotnat
