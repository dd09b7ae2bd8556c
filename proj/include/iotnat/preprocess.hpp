#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "iotnat/flowdata.hpp"

namespace iotnat::preprocess {

using FeatureVector = std::vector<double>;

// Min-max range seen on training data. Values outside the range are not
// clipped; a constant feature (min == max) always maps to 0.
struct NumericRange {
  double min = 0.0;
  double max = 0.0;

  double scale(double x) const noexcept { return max == min ? 0.0 : (x - min) / (max - min); }
  bool operator==(const NumericRange&) const = default;
};

// Per-model scaling and one-hot layout. Vector layout:
//   [in_bytes, out_bytes, flow_duration,
//    protocol one-hot, l4_dst_port one-hot, l7_proto_name one-hot,
//    src_tos one-hot, dst_tos one-hot]
// Vocabularies keep first-appearance order from the training flows.
struct FeatureSchema {
  static constexpr std::size_t kNumericCount = 3;

  DeviceModelId model;
  NumericRange in_bytes;
  NumericRange out_bytes;
  NumericRange flow_duration;
  std::vector<std::uint32_t> protocols;
  std::vector<std::uint32_t> dst_ports;
  std::vector<std::string> l7_protos;
  std::vector<std::uint32_t> src_tos;
  std::vector<std::uint32_t> dst_tos;

  std::size_t dimension() const noexcept {
    return kNumericCount + protocols.size() + dst_ports.size() + l7_protos.size() +
           src_tos.size() + dst_tos.size();
  }
  bool operator==(const FeatureSchema&) const = default;
};

// Throws Error(data, "insufficient-data") on an empty set and
// Error(data, "label-mismatch") if a flow is not labeled `model`.
FeatureSchema fit_schema(const FlowDataset& training, const DeviceModelId& model);

// Total: unseen categories produce an all-zero block.
FeatureVector transform(const FeatureSchema& schema, const FlowRecord& flow);
// `out` must have schema.dimension() elements.
void transform_into(const FeatureSchema& schema, const FlowRecord& flow, std::span<double> out);

// Dense row-major matrix of transformed flows.
struct FeatureMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  std::span<const double> row(std::size_t i) const { return {values.data() + i * cols, cols}; }
  std::span<double> row(std::size_t i) { return {values.data() + i * cols, cols}; }
};

FeatureMatrix transform_all(const FeatureSchema& schema, const FlowDataset& flows);

}  // namespace iotnat::preprocess
