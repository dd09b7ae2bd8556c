#include "iotnat/netflow_v9.hpp"

#include <numeric>
#include <optional>

#include "iotnat/error.hpp"

namespace iotnat::ingest::netflow {

namespace {

std::uint64_t read_be(std::span<const std::uint8_t> bytes, std::size_t offset, std::size_t length) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < length; ++i) v = (v << 8) | bytes[offset + i];
  return v;
}

std::uint16_t read_u16(std::span<const std::uint8_t> bytes, std::size_t offset) {
  return static_cast<std::uint16_t>(read_be(bytes, offset, 2));
}

std::uint32_t read_u32(std::span<const std::uint8_t> bytes, std::size_t offset) {
  return static_cast<std::uint32_t>(read_be(bytes, offset, 4));
}

struct FlowsetView {
  std::uint16_t id;
  std::span<const std::uint8_t> body;
};

// Parses a template flowset body; returns false if it is malformed.
bool parse_templates(std::span<const std::uint8_t> body, std::vector<Template>& out) {
  std::size_t off = 0;
  // Trailing padding shorter than a template header is allowed.
  while (body.size() - off >= 4) {
    Template t;
    t.template_id = read_u16(body, off);
    const std::uint16_t count = read_u16(body, off + 2);
    off += 4;
    if (t.template_id == 0 && count == 0) break;  // zero padding
    if (t.template_id < kMinDataFlowsetId || count == 0) return false;
    if (body.size() - off < std::size_t{count} * 4) return false;
    for (std::uint16_t i = 0; i < count; ++i) {
      t.fields.push_back({read_u16(body, off), read_u16(body, off + 2)});
      off += 4;
    }
    if (t.record_length() == 0) return false;
    out.push_back(std::move(t));
  }
  return true;
}

}  // namespace

std::size_t Template::record_length() const noexcept {
  return std::accumulate(fields.begin(), fields.end(), std::size_t{0},
                         [](std::size_t acc, const TemplateField& f) { return acc + f.length; });
}

const Template* TemplateCache::find(std::uint32_t source_id, std::uint16_t template_id) const {
  auto it = templates_.find({source_id, template_id});
  return it == templates_.end() ? nullptr : &it->second;
}

PacketHeader parse_header(std::span<const std::uint8_t> datagram) {
  if (datagram.size() < kHeaderSize) throw_data_error("truncated-datagram", "short header");
  PacketHeader h;
  h.version = read_u16(datagram, 0);
  h.count = read_u16(datagram, 2);
  h.sys_uptime_ms = read_u32(datagram, 4);
  h.unix_secs = read_u32(datagram, 8);
  h.sequence = read_u32(datagram, 12);
  h.source_id = read_u32(datagram, 16);
  return h;
}

FlowRecord decode_record(std::span<const std::uint8_t> bytes, const Template& tmpl,
                         const PacketHeader& header) {
  FlowRecord f;
  f.l7_proto_name = "unknown";
  std::optional<std::int64_t> start_ms, end_ms, first_switched, last_switched;
  std::size_t off = 0;
  for (const auto& field : tmpl.fields) {
    if (field.length == 0 || field.length > 8) {
      off += field.length;
      continue;
    }
    const std::uint64_t v = read_be(bytes, off, field.length);
    off += field.length;
    switch (static_cast<Field>(field.type)) {
      case Field::in_bytes: f.in_bytes = v; break;
      case Field::out_bytes: f.out_bytes = v; break;
      case Field::protocol: f.key.ip_protocol = static_cast<std::uint8_t>(v); break;
      case Field::src_tos:
        f.src_tos = static_cast<std::uint8_t>(v);
        f.key.tos = f.src_tos;
        break;
      case Field::dst_tos: f.dst_tos = static_cast<std::uint8_t>(v); break;
      case Field::l4_src_port: f.key.src_port = static_cast<std::uint16_t>(v); break;
      case Field::l4_dst_port: f.key.dst_port = static_cast<std::uint16_t>(v); break;
      case Field::ipv4_src_addr: f.key.src_ip = Ipv4{static_cast<std::uint32_t>(v)}; break;
      case Field::ipv4_dst_addr: f.key.dst_ip = Ipv4{static_cast<std::uint32_t>(v)}; break;
      case Field::input_snmp: f.key.ingress_interface = static_cast<std::uint32_t>(v); break;
      case Field::flow_start_milliseconds: start_ms = static_cast<std::int64_t>(v); break;
      case Field::flow_end_milliseconds: end_ms = static_cast<std::int64_t>(v); break;
      case Field::first_switched: first_switched = static_cast<std::int64_t>(v); break;
      case Field::last_switched: last_switched = static_cast<std::int64_t>(v); break;
    }
  }
  // Sysuptime-relative timestamps are anchored at the export time.
  const std::int64_t export_ms = std::int64_t{header.unix_secs} * 1000;
  auto from_uptime = [&](std::int64_t switched) {
    return export_ms - (std::int64_t{header.sys_uptime_ms} - switched);
  };
  if (!start_ms) start_ms = first_switched ? from_uptime(*first_switched) : export_ms;
  if (!end_ms) end_ms = last_switched ? from_uptime(*last_switched) : *start_ms;
  f.flow_start_ms = *start_ms;
  f.flow_end_ms = *end_ms;
  return f;
}

struct Decoder {
  static DecodeResult run(std::span<const std::uint8_t> datagram, TemplateCache& cache) {
    DecodeResult result;
    result.header = parse_header(datagram);
    if (result.header.version != kVersion)
      throw_data_error("unsupported-version", std::to_string(result.header.version));

    // Pass 1: framing and template validation. Nothing touches the cache
    // until the whole datagram is known to be well formed.
    std::vector<FlowsetView> flowsets;
    std::vector<std::vector<Template>> templates;
    std::size_t off = kHeaderSize;
    while (off < datagram.size()) {
      if (datagram.size() - off < 4) throw_data_error("truncated-flowset", "short flowset header");
      const std::uint16_t id = read_u16(datagram, off);
      const std::uint16_t length = read_u16(datagram, off + 2);
      if (length < 4 || length > datagram.size() - off)
        throw_data_error("truncated-flowset", "flowset " + std::to_string(id));
      FlowsetView view{id, datagram.subspan(off + 4, length - 4u)};
      if (id == kTemplateFlowsetId) {
        std::vector<Template> parsed;
        if (!parse_templates(view.body, parsed)) throw_data_error("invalid-template");
        templates.push_back(std::move(parsed));
      } else if (id != kOptionsTemplateFlowsetId && id < kMinDataFlowsetId) {
        throw_data_error("invalid-flowset-id", std::to_string(id));
      }
      flowsets.push_back(view);
      off += length;
    }

    // Pass 2: apply in order.
    std::size_t template_index = 0;
    const std::uint32_t source = result.header.source_id;
    for (const auto& fs : flowsets) {
      if (fs.id == kOptionsTemplateFlowsetId) continue;
      if (fs.id == kTemplateFlowsetId) {
        for (auto& t : templates[template_index]) {
          const auto key = std::make_pair(source, t.template_id);
          auto it = cache.templates_.find(key);
          if (it != cache.templates_.end() && it->second == t) continue;
          cache.templates_[key] = t;
          ++result.templates_changed;
          release_pending(cache, source, t.template_id, result);
        }
        ++template_index;
        continue;
      }
      const Template* tmpl = cache.find(source, fs.id);
      if (tmpl == nullptr) {
        if (cache.pending_limit_ == 0) {
          ++cache.dropped_;
          continue;
        }
        if (cache.pending_.size() >= cache.pending_limit_) {
          cache.pending_.pop_front();
          ++cache.dropped_;
        }
        cache.pending_.push_back({result.header, fs.id, {fs.body.begin(), fs.body.end()}});
        ++result.flowsets_buffered;
        continue;
      }
      decode_data(fs.body, *tmpl, result.header, result);
    }
    return result;
  }

  static void decode_data(std::span<const std::uint8_t> body, const Template& tmpl,
                          const PacketHeader& header, DecodeResult& result) {
    const std::size_t len = tmpl.record_length();
    for (std::size_t off = 0; off + len <= body.size(); off += len) {
      FlowRecord f = decode_record(body.subspan(off, len), tmpl, header);
      if (f.flow_end_ms < f.flow_start_ms) {
        ++result.invalid_records;
        continue;
      }
      result.records.push_back(std::move(f));
    }
  }

  static void release_pending(TemplateCache& cache, std::uint32_t source, std::uint16_t template_id,
                              DecodeResult& result) {
    const Template& tmpl = cache.templates_.at({source, template_id});
    for (auto it = cache.pending_.begin(); it != cache.pending_.end();) {
      if (it->header.source_id == source && it->template_id == template_id) {
        decode_data(it->body, tmpl, it->header, result);
        it = cache.pending_.erase(it);
      } else {
        ++it;
      }
    }
  }
};

DecodeResult decode_netflow_v9(std::span<const std::uint8_t> datagram, TemplateCache& cache) {
  return Decoder::run(datagram, cache);
}

}  // namespace iotnat::ingest::netflow
