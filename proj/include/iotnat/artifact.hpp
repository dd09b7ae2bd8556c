#pragma once

// Model artifact container. Little-endian binary layout:
//
//   magic            8 bytes  "IOTNATMA"
//   format_version   u32
//   trained_at_ms    i64      (metadata; excluded from the model digest)
//   --- model section ---
//   model            str      (u32 length + UTF-8 bytes, canonical id)
//   training_flows   u64
//   default_thresh   f64
//   n_calibrated     u32, then n x { percentile i32, threshold f64 }
//   schema           3 x {min f64, max f64}
//                    protocols, dst_ports: u32 count + u32 values
//                    l7_protos: u32 count + str values
//                    src_tos, dst_tos: u32 count + u32 values
//   forest           subsample u64, seed u64, dimension u64, n_trees u32,
//                    per tree: height_limit u32, n_nodes u32, nodes preorder:
//                      external: u8 0, size u32
//                      internal: u8 1, dimension u32, split f64, right u32
//   --- trailer ---
//   checksum         u64 FNV-1a over every preceding byte

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <vector>

#include "iotnat/flowdata.hpp"
#include "iotnat/iforest.hpp"
#include "iotnat/preprocess.hpp"

namespace iotnat::iforest {

inline constexpr std::uint32_t kArtifactFormatVersion = 1;

struct ModelArtifact {
  DeviceModelId model;
  preprocess::FeatureSchema schema;
  IsolationForest forest;
  double default_threshold = 0.0;
  std::map<int, double> calibrated_thresholds;  // percentile -> g threshold
  std::int64_t trained_at_ms = 0;
  std::uint64_t training_flow_count = 0;
  std::uint32_t format_version = kArtifactFormatVersion;

  bool operator==(const ModelArtifact&) const = default;
};

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes) noexcept;

std::vector<std::uint8_t> serialize_artifact(const ModelArtifact& artifact);
// Throws Error(data, "corrupt-artifact" | "unsupported-artifact-version" |
// "dimension-mismatch").
ModelArtifact deserialize_artifact(std::span<const std::uint8_t> bytes);

void save_artifact(const ModelArtifact& artifact, const std::filesystem::path& path);
ModelArtifact load_artifact(const std::filesystem::path& path);

// FNV-1a over the model section only, so retraining with the same data and
// seed gives the same digest regardless of trained_at_ms.
std::uint64_t artifact_digest(const ModelArtifact& artifact);

}  // namespace iotnat::iforest
