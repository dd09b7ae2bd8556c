#include "iotnat/preprocess.hpp"

#include <algorithm>
#include <limits>

#include "iotnat/error.hpp"

namespace iotnat::preprocess {

namespace {

template <typename T>
void note(std::vector<T>& vocab, const T& value) {
  if (std::find(vocab.begin(), vocab.end(), value) == vocab.end()) vocab.push_back(value);
}

void widen(NumericRange& range, double x) {
  range.min = std::min(range.min, x);
  range.max = std::max(range.max, x);
}

template <typename T>
std::size_t one_hot(const std::vector<T>& vocab, const T& value, std::span<double> out, std::size_t offset) {
  auto it = std::find(vocab.begin(), vocab.end(), value);
  if (it != vocab.end()) out[offset + static_cast<std::size_t>(it - vocab.begin())] = 1.0;
  return offset + vocab.size();
}

}  // namespace

FeatureSchema fit_schema(const FlowDataset& training, const DeviceModelId& model) {
  if (training.empty()) throw_data_error("insufficient-data", "no training flows for " + model.str());
  FeatureSchema schema;
  schema.model = model;
  constexpr double inf = std::numeric_limits<double>::infinity();
  for (NumericRange* r : {&schema.in_bytes, &schema.out_bytes, &schema.flow_duration}) *r = {inf, -inf};

  for (const auto& lf : training.flows) {
    if (!lf.label.is(model))
      throw_data_error("label-mismatch", "expected " + model.str() + ", got '" + lf.label.str() + "'");
    const FlowRecord& f = lf.flow;
    widen(schema.in_bytes, static_cast<double>(f.in_bytes));
    widen(schema.out_bytes, static_cast<double>(f.out_bytes));
    widen(schema.flow_duration, static_cast<double>(flow_duration(f)));
    note(schema.protocols, std::uint32_t{f.key.ip_protocol});
    note(schema.dst_ports, std::uint32_t{f.key.dst_port});
    note(schema.l7_protos, f.l7_proto_name);
    note(schema.src_tos, std::uint32_t{f.src_tos});
    note(schema.dst_tos, std::uint32_t{f.dst_tos});
  }
  return schema;
}

void transform_into(const FeatureSchema& schema, const FlowRecord& flow, std::span<double> out) {
  std::fill(out.begin(), out.end(), 0.0);
  out[0] = schema.in_bytes.scale(static_cast<double>(flow.in_bytes));
  out[1] = schema.out_bytes.scale(static_cast<double>(flow.out_bytes));
  // Negative durations never reach here through ingest; treat them as zero.
  const auto duration = std::max<std::int64_t>(0, flow.flow_end_ms - flow.flow_start_ms);
  out[2] = schema.flow_duration.scale(static_cast<double>(duration));
  std::size_t off = FeatureSchema::kNumericCount;
  off = one_hot(schema.protocols, std::uint32_t{flow.key.ip_protocol}, out, off);
  off = one_hot(schema.dst_ports, std::uint32_t{flow.key.dst_port}, out, off);
  off = one_hot(schema.l7_protos, flow.l7_proto_name, out, off);
  off = one_hot(schema.src_tos, std::uint32_t{flow.src_tos}, out, off);
  one_hot(schema.dst_tos, std::uint32_t{flow.dst_tos}, out, off);
}

FeatureVector transform(const FeatureSchema& schema, const FlowRecord& flow) {
  FeatureVector v(schema.dimension());
  transform_into(schema, flow, v);
  return v;
}

FeatureMatrix transform_all(const FeatureSchema& schema, const FlowDataset& flows) {
  FeatureMatrix m;
  m.rows = flows.size();
  m.cols = schema.dimension();
  m.values.resize(m.rows * m.cols);
  for (std::size_t i = 0; i < m.rows; ++i) transform_into(schema, flows.flows[i].flow, m.row(i));
  return m;
}

}  // namespace iotnat::preprocess
