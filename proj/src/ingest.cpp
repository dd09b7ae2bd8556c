#include "iotnat/ingest.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <limits>
#include <map>
#include <optional>

#include <json.hpp>

#include "csv.hpp"
#include "iotnat/error.hpp"

namespace iotnat::ingest {

namespace {

using nlohmann::json;

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw_io_error("unreadable-file", path.string());
  return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw_io_error("unwritable-file", path.string());
  return out;
}

template <typename T>
std::optional<T> parse_unsigned(std::string_view text, std::uint64_t max) {
  std::uint64_t value = 0;
  auto [next, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || next != text.data() + text.size() || text.empty() || value > max)
    return std::nullopt;
  return static_cast<T>(value);
}

std::optional<std::int64_t> parse_signed(std::string_view text) {
  std::int64_t value = 0;
  auto [next, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || next != text.data() + text.size() || text.empty()) return std::nullopt;
  return value;
}

class RowReader {
 public:
  RowReader(const std::vector<std::string>& fields, const std::map<std::string, std::size_t>& columns)
      : fields_(fields), columns_(columns) {}

  bool has(const char* column) const { return columns_.count(column) != 0; }
  std::string_view cell(const char* column) const { return fields_[columns_.at(column)]; }

  // Sets `failed` to the column name on the first failure.
  template <typename T>
  T unsigned_field(const char* column, std::uint64_t max, T fallback = T{}) {
    if (!has(column)) return fallback;
    auto v = parse_unsigned<T>(cell(column), max);
    if (!v) fail(column);
    return v.value_or(fallback);
  }

  std::int64_t signed_field(const char* column) {
    auto v = parse_signed(cell(column));
    if (!v) fail(column);
    return v.value_or(0);
  }

  Ipv4 ip_field(const char* column) {
    if (!has(column)) return {};
    auto ip = Ipv4::try_parse(cell(column));
    if (!ip) fail(column);
    return ip.value_or(Ipv4{});
  }

  void fail(const char* column) {
    if (failed.empty()) failed = column;
  }

  std::string failed;

 private:
  const std::vector<std::string>& fields_;
  const std::map<std::string, std::size_t>& columns_;
};

constexpr const char* kWriteOrder[] = {
    "INPUT_INTERFACE", "SRC_IP",    "DST_IP",        "PROTOCOL",
    "L4_SRC_PORT",     "L4_DST_PORT", "SRC_TOS",     "DST_TOS",
    "IN_BYTES",        "OUT_BYTES", "L7_PROTO_NAME", "FLOW_START_MILLISECONDS",
    "FLOW_END_MILLISECONDS", "SRC_MAC", "LABEL",
};

void write_header(std::ostream& out) {
  for (std::size_t i = 0; i < std::size(kWriteOrder); ++i) out << (i ? "," : "") << kWriteOrder[i];
  out << '\n';
}

void write_row(std::ostream& out, const FlowRecord& f, const std::string& mac, const std::string& label) {
  out << f.key.ingress_interface << ',' << f.key.src_ip.str() << ',' << f.key.dst_ip.str() << ','
      << unsigned(f.key.ip_protocol) << ',' << f.key.src_port << ',' << f.key.dst_port << ','
      << unsigned(f.src_tos) << ',' << unsigned(f.dst_tos) << ',' << f.in_bytes << ',' << f.out_bytes
      << ',' << detail::csv_escape(f.l7_proto_name) << ',' << f.flow_start_ms << ',' << f.flow_end_ms
      << ',' << mac << ',' << detail::csv_escape(label) << '\n';
}

}  // namespace

FlowCsvResult parse_flow_csv(std::istream& in, const DeviceInventory* inventory) {
  FlowCsvResult result;
  std::string line;
  std::vector<std::string> fields;
  std::size_t line_no = 0;

  // Header.
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line != "\r") break;
  }
  if (line.empty() || line == "\r") return result;

  if (!detail::split_csv_line(line, fields)) throw_data_error("malformed-header");
  std::map<std::string, std::size_t> columns;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    std::string name = fields[i];
    // Tolerate a UTF-8 byte order mark on the first column.
    if (i == 0 && name.rfind("\xEF\xBB\xBF", 0) == 0) name.erase(0, 3);
    columns.emplace(name, i);
  }
  for (const char* col : kMandatoryColumns)
    if (!columns.count(col)) throw_data_error("missing-column:" + std::string(col));

  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    ++result.rows;
    if (!detail::split_csv_line(line, fields) || fields.size() != columns.size()) {
      result.rejected.push_back({line_no, "field-count"});
      continue;
    }
    RowReader row(fields, columns);
    LabeledFlow lf;
    FlowRecord& f = lf.flow;
    f.key.ingress_interface = row.unsigned_field<std::uint32_t>("INPUT_INTERFACE", 0xffffffffULL);
    f.key.src_ip = row.ip_field("SRC_IP");
    f.key.dst_ip = row.ip_field("DST_IP");
    f.key.ip_protocol = row.unsigned_field<std::uint8_t>("PROTOCOL", 255);
    f.key.src_port = row.unsigned_field<std::uint16_t>("L4_SRC_PORT", 65535);
    f.key.dst_port = row.unsigned_field<std::uint16_t>("L4_DST_PORT", 65535);
    f.src_tos = row.unsigned_field<std::uint8_t>("SRC_TOS", 255);
    f.dst_tos = row.unsigned_field<std::uint8_t>("DST_TOS", 255);
    f.key.tos = f.src_tos;
    f.in_bytes = row.unsigned_field<std::uint64_t>("IN_BYTES", std::numeric_limits<std::uint64_t>::max());
    f.out_bytes = row.unsigned_field<std::uint64_t>("OUT_BYTES", std::numeric_limits<std::uint64_t>::max());
    f.l7_proto_name = std::string(row.cell("L7_PROTO_NAME"));
    f.flow_start_ms = row.signed_field("FLOW_START_MILLISECONDS");
    f.flow_end_ms = row.signed_field("FLOW_END_MILLISECONDS");

    const InventoryEntry* entry = inventory ? inventory->find_by_ip(f.key.src_ip) : nullptr;
    if (row.has("LABEL") && !row.cell("LABEL").empty()) {
      const auto text = row.cell("LABEL");
      if (text == Label::kNonIot) {
        lf.label = Label::non_iot();
      } else if (auto id = DeviceModelId::try_parse(text)) {
        lf.label = Label::of(*id);
      } else {
        row.fail("LABEL");
      }
    } else if (entry) {
      lf.label = entry->label;
    }
    if (row.has("SRC_MAC") && !row.cell("SRC_MAC").empty()) {
      if (auto mac = MacAddress::try_parse(row.cell("SRC_MAC")))
        lf.source_mac = *mac;
      else
        row.fail("SRC_MAC");
    } else if (entry) {
      lf.source_mac = entry->mac;
    }

    if (!row.failed.empty()) {
      result.rejected.push_back({line_no, "parse-error:" + row.failed});
      continue;
    }
    if (f.flow_end_ms < f.flow_start_ms) {
      result.rejected.push_back({line_no, "negative-duration"});
      continue;
    }
    result.dataset.flows.push_back(std::move(lf));
  }
  return result;
}

FlowCsvResult parse_flow_csv(const std::filesystem::path& path, const DeviceInventory* inventory) {
  auto in = open_input(path);
  return parse_flow_csv(in, inventory);
}

void write_flow_csv(std::ostream& out, const FlowDataset& dataset) {
  write_header(out);
  for (const auto& lf : dataset.flows) {
    write_row(out, lf.flow, lf.source_mac.value ? lf.source_mac.str() : std::string(), lf.label.str());
  }
}

void write_flow_csv(const std::filesystem::path& path, const FlowDataset& dataset) {
  auto out = open_output(path);
  write_flow_csv(out, dataset);
  if (!out) throw_io_error("write-failed", path.string());
}

void write_flow_csv(std::ostream& out, const std::vector<FlowRecord>& flows) {
  write_header(out);
  for (const auto& f : flows) write_row(out, f, {}, {});
}

DeviceInventory parse_inventory_csv(const std::filesystem::path& path) {
  auto in = open_input(path);
  std::string line;
  std::vector<std::string> fields;
  std::size_t line_no = 0;
  std::map<std::string, std::size_t> columns;
  std::vector<InventoryEntry> entries;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    if (!detail::split_csv_line(line, fields)) throw_data_error("malformed-inventory", "line " + std::to_string(line_no));
    if (columns.empty()) {
      for (std::size_t i = 0; i < fields.size(); ++i) columns.emplace(fields[i], i);
      for (const char* col : {"MAC", "IP", "MODEL"})
        if (!columns.count(col)) throw_data_error("missing-column:" + std::string(col));
      continue;
    }
    if (fields.size() != columns.size())
      throw_data_error("malformed-inventory", "line " + std::to_string(line_no));
    auto mac = MacAddress::try_parse(fields[columns["MAC"]]);
    auto ip = Ipv4::try_parse(fields[columns["IP"]]);
    const auto& model = fields[columns["MODEL"]];
    if (!mac || !ip || model.empty())
      throw_data_error("malformed-inventory", "line " + std::to_string(line_no));
    entries.push_back({*mac, *ip, Label::parse(model)});
  }
  return DeviceInventory(std::move(entries));
}

void write_inventory_csv(const std::filesystem::path& path, const DeviceInventory& inventory) {
  auto out = open_output(path);
  out << "MAC,IP,MODEL\n";
  for (const auto& e : inventory.entries())
    out << e.mac.str() << ',' << e.internal_ip.str() << ',' << detail::csv_escape(e.label.str()) << '\n';
}

std::string normalize_qname(std::string_view qname) {
  std::string out(qname);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (!out.empty() && out.back() == '.') out.pop_back();
  return out;
}

DnsJsonlResult parse_dns_jsonl(std::istream& in) {
  DnsJsonlResult result;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto reject = [&](std::string reason) { result.rejected.push_back({line_no, std::move(reason)}); };

    json obj = json::parse(line, nullptr, /*allow_exceptions=*/false);
    if (obj.is_discarded() || !obj.is_object()) {
      reject("malformed-json");
      continue;
    }
    const char* missing = nullptr;
    for (const char* key : {"ts_ms", "src_ip", "ip_id", "resolver_ip", "qname"})
      if (!obj.contains(key)) {
        missing = key;
        break;
      }
    if (missing) {
      reject(std::string("missing-key:") + missing);
      continue;
    }
    if (!obj["ts_ms"].is_number_integer() || !obj["ip_id"].is_number_integer() ||
        !obj["src_ip"].is_string() || !obj["resolver_ip"].is_string() || !obj["qname"].is_string()) {
      reject("type-error");
      continue;
    }
    const auto ip_id = obj["ip_id"].get<std::int64_t>();
    if (ip_id < 0 || ip_id > 65535) {
      reject("ip-id-range");
      continue;
    }
    auto src = Ipv4::try_parse(obj["src_ip"].get<std::string>());
    auto resolver = Ipv4::try_parse(obj["resolver_ip"].get<std::string>());
    if (!src || !resolver) {
      reject("invalid-ipv4");
      continue;
    }
    DnsEvent ev;
    ev.timestamp_ms = obj["ts_ms"].get<std::int64_t>();
    ev.observed_src_ip = *src;
    ev.ip_id = static_cast<std::uint16_t>(ip_id);
    ev.resolver_ip = *resolver;
    ev.qname = normalize_qname(obj["qname"].get<std::string>());
    if (ev.qname.empty()) {
      reject("empty-qname");
      continue;
    }
    if (obj.contains("label") && !obj["label"].is_null()) {
      if (!obj["label"].is_string()) {
        reject("type-error");
        continue;
      }
      const auto text = obj["label"].get<std::string>();
      if (text == Label::kNonIot) {
        ev.label = Label::non_iot();
      } else if (auto id = DeviceModelId::try_parse(text)) {
        ev.label = Label::of(*id);
      } else if (!text.empty()) {
        reject("invalid-label");
        continue;
      }
    }
    result.events.push_back(std::move(ev));
  }
  return result;
}

DnsJsonlResult parse_dns_jsonl(const std::filesystem::path& path) {
  auto in = open_input(path);
  return parse_dns_jsonl(in);
}

void write_dns_jsonl(std::ostream& out, const std::vector<DnsEvent>& events) {
  for (const auto& ev : events) {
    json obj = {{"ts_ms", ev.timestamp_ms},
                {"src_ip", ev.observed_src_ip.str()},
                {"ip_id", ev.ip_id},
                {"resolver_ip", ev.resolver_ip.str()},
                {"qname", ev.qname}};
    if (ev.label.kind() != Label::Kind::unlabeled) obj["label"] = ev.label.str();
    out << obj.dump() << '\n';
  }
}

void write_dns_jsonl(const std::filesystem::path& path, const std::vector<DnsEvent>& events) {
  auto out = open_output(path);
  write_dns_jsonl(out, events);
  if (!out) throw_io_error("write-failed", path.string());
}

}  // namespace iotnat::ingest
