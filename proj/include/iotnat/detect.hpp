#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "iotnat/artifact.hpp"
#include "iotnat/flowdata.hpp"

namespace iotnat::detect {

using iforest::ModelArtifact;

inline constexpr int kMaxCalibrationPercentile = 30;

struct TrainConfig {
  DeviceModelId model;
  iforest::ForestParams forest;
  std::vector<int> calibration_percentiles{10};
  SplitRatios ratios;
  std::int64_t trained_at_ms = 0;

  // Throws Error(usage, "invalid-percentile") outside [0, 30].
  void validate() const;
};

struct TrainReport {
  std::size_t training_flows = 0;
  std::size_t validation_flows = 0;
  double training_seconds = 0.0;  // schema fit + forest build
  std::vector<std::string> warnings;
};

// Split, filter to the model, fit schema, build the forest and calibrate
// every configured percentile on the model's validation flows.
// Throws Error(data, "insufficient-data") without training flows of the model.
ModelArtifact train_pipeline(const FlowDataset& dataset, const TrainConfig& config,
                             TrainReport* report = nullptr);
// Same, on a split computed by the caller.
ModelArtifact train_on_split(const DatasetSplit& split, const TrainConfig& config,
                             TrainReport* report = nullptr);

// k-th smallest value with k = max(1, ceil(percentile * n / 100)).
// Throws Error(data, "insufficient-data") on empty input.
double nearest_rank_percentile(std::vector<double> values, int percentile);

// Scores validation flows and returns their nearest-rank percentile of g.
double calibrate_threshold(const ModelArtifact& artifact, const FlowDataset& validation,
                           int percentile);

// Which threshold of an artifact a decision uses: the default (0) or a
// calibrated percentile.
class ThresholdSelector {
 public:
  static ThresholdSelector default_threshold() { return ThresholdSelector{}; }
  static ThresholdSelector percentile(int p) { return ThresholdSelector{p}; }
  // "default", "p10", "P10". Throws Error(usage, "invalid-selector").
  static ThresholdSelector parse(std::string_view text);

  bool is_default() const noexcept { return !percentile_; }
  int percentile_value() const noexcept { return percentile_.value_or(-1); }
  std::string str() const;
  // Throws Error(usage, "unknown-selector") if the artifact lacks it.
  double resolve(const ModelArtifact& artifact) const;

 private:
  ThresholdSelector() = default;
  explicit ThresholdSelector(int p) : percentile_(p) {}
  std::optional<int> percentile_;
};

enum class Decision { model, non_model };

enum class Action { none, log, notify_stub, block_stub, cascade_hook };

std::string_view to_string(Decision d) noexcept;
std::string_view to_string(Action a) noexcept;
Action parse_action(std::string_view text);

struct DetectionEvent {
  std::uint64_t flow_index = 0;  // position in the source stream
  FlowKey flow_key;
  std::int64_t flow_start_ms = 0;
  DeviceModelId model;
  double normality_g = 0.0;
  double threshold = 0.0;
  Decision decision = Decision::non_model;
  Action action_taken = Action::none;
  std::int64_t wall_time_ms = 0;
  double processing_us = 0.0;  // transform + score
  std::string source_id;       // home / stream identifier, passed through
};

// Transform, score and compare. decision = model iff g >= threshold.
DetectionEvent classify(const ModelArtifact& artifact, const FlowRecord& flow,
                        const ThresholdSelector& selector);

// Secondary verification for positives; return false to suppress the
// actions after it.
using CascadeVerifier = std::function<bool(const FlowRecord&, const DetectionEvent&)>;

struct ActionPolicy {
  std::vector<Action> on_positive{Action::log};
  CascadeVerifier cascade_verifier;

  // Comma separated, e.g. "log,notify_stub". Adds "log" if missing.
  static ActionPolicy parse(std::string_view text);
  void validate() const;
};

// Output streams; any may be null.
struct DetectorOutputs {
  std::ostream* audit = nullptr;          // one DetectionEvent per line
  std::ostream* notifications = nullptr;  // {timestamp_ms, model, message}
  std::ostream* blocks = nullptr;         // {timestamp_ms, model, flow}
};

struct DetectorCounters {
  std::uint64_t flows = 0;
  std::uint64_t events = 0;
  std::uint64_t positives = 0;
  std::uint64_t notifications = 0;
  std::uint64_t blocks = 0;
  std::uint64_t cascades = 0;
};

// Local detector runtime. Holds immutable artifacts; one flow at a time.
class Detector {
 public:
  // Throws Error(data, "dimension-mismatch") for inconsistent artifacts and
  // Error(usage, "no-artifacts") for an empty list.
  Detector(std::vector<ModelArtifact> artifacts, ActionPolicy policy,
           ThresholdSelector selector, DetectorOutputs outputs = {},
           std::string source_id = "home-0");

  // One event per artifact, in artifact order.
  std::vector<DetectionEvent> process(const FlowRecord& flow);

  const DetectorCounters& counters() const noexcept { return counters_; }
  const std::vector<ModelArtifact>& artifacts() const noexcept { return artifacts_; }

 private:
  void act(const FlowRecord& flow, DetectionEvent& event);

  std::vector<ModelArtifact> artifacts_;
  std::vector<double> thresholds_;
  ActionPolicy policy_;
  ThresholdSelector selector_;
  DetectorOutputs outputs_;
  std::string source_id_;
  std::uint64_t next_index_ = 0;
  DetectorCounters counters_;
};

// Batch form of the runtime: processes `flows` in order.
std::vector<DetectionEvent> run_detector(std::span<const FlowRecord> flows,
                                         std::vector<ModelArtifact> artifacts,
                                         ActionPolicy policy, ThresholdSelector selector,
                                         DetectorOutputs outputs = {});

std::string event_to_json(const DetectionEvent& event);

}  // namespace iotnat::detect
