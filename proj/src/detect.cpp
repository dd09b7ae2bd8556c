#include "iotnat/detect.hpp"

#include <algorithm>
#include <chrono>
#include <ostream>

#include <json.hpp>

#include "iotnat/error.hpp"
#include "iotnat/preprocess.hpp"

namespace iotnat::detect {

namespace {

using Clock = std::chrono::steady_clock;

std::int64_t now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

}  // namespace

void TrainConfig::validate() const {
  for (int p : calibration_percentiles)
    if (p < 0 || p > kMaxCalibrationPercentile)
      throw_usage_error("invalid-percentile", std::to_string(p) + " outside [0, 30]");
  ratios.validate();
}

ModelArtifact train_pipeline(const FlowDataset& dataset, const TrainConfig& config, TrainReport* report) {
  config.validate();
  return train_on_split(chronological_split(dataset, config.ratios), config, report);
}

ModelArtifact train_on_split(const DatasetSplit& split, const TrainConfig& config, TrainReport* report) {
  config.validate();
  const FlowDataset training = filter_model(split.training, config.model);
  const FlowDataset validation = filter_model(split.validation, config.model);
  if (training.empty()) throw_data_error("insufficient-data", "no training flows for " + config.model.str());

  const auto t0 = Clock::now();
  ModelArtifact artifact;
  artifact.model = config.model;
  artifact.schema = preprocess::fit_schema(training, config.model);
  artifact.forest = iforest::train_forest(preprocess::transform_all(artifact.schema, training), config.forest);
  const double seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  artifact.training_flow_count = training.size();
  artifact.trained_at_ms = config.trained_at_ms;

  std::vector<std::string> warnings;
  if (validation.empty()) {
    if (!config.calibration_percentiles.empty())
      warnings.push_back("no validation flows for " + config.model.str() + "; calibration skipped");
  } else {
    for (int p : config.calibration_percentiles)
      artifact.calibrated_thresholds[p] = calibrate_threshold(artifact, validation, p);
  }
  if (report) {
    report->training_flows = training.size();
    report->validation_flows = validation.size();
    report->training_seconds = seconds;
    report->warnings = std::move(warnings);
  }
  return artifact;
}

double nearest_rank_percentile(std::vector<double> values, int percentile) {
  if (values.empty()) throw_data_error("insufficient-data", "percentile of an empty set");
  if (percentile < 0 || percentile > 100) throw_usage_error("invalid-percentile", std::to_string(percentile));
  const std::size_t n = values.size();
  const std::size_t k = std::max<std::size_t>(1, (static_cast<std::size_t>(percentile) * n + 99) / 100);
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(k - 1), values.end());
  return values[k - 1];
}

double calibrate_threshold(const ModelArtifact& artifact, const FlowDataset& validation, int percentile) {
  if (percentile < 0 || percentile > kMaxCalibrationPercentile)
    throw_usage_error("invalid-percentile", std::to_string(percentile) + " outside [0, 30]");
  if (validation.empty()) throw_data_error("insufficient-data", "empty validation set");
  std::vector<double> scores;
  scores.reserve(validation.size());
  std::vector<double> x(artifact.schema.dimension());
  for (const auto& lf : validation.flows) {
    preprocess::transform_into(artifact.schema, lf.flow, x);
    scores.push_back(artifact.forest.normality_score(x));
  }
  return nearest_rank_percentile(std::move(scores), percentile);
}

ThresholdSelector ThresholdSelector::parse(std::string_view text) {
  if (text == "default") return default_threshold();
  if (text.size() >= 2 && (text[0] == 'p' || text[0] == 'P')) {
    int p = 0;
    const auto digits = text.substr(1);
    bool ok = !digits.empty() && digits.size() <= 3;
    for (char c : digits) {
      if (c < '0' || c > '9') ok = false;
      else p = p * 10 + (c - '0');
    }
    if (ok && p <= 100) return percentile(p);
  }
  throw_usage_error("invalid-selector", std::string(text));
}

std::string ThresholdSelector::str() const {
  return percentile_ ? "p" + std::to_string(*percentile_) : "default";
}

double ThresholdSelector::resolve(const ModelArtifact& artifact) const {
  if (!percentile_) return artifact.default_threshold;
  auto it = artifact.calibrated_thresholds.find(*percentile_);
  if (it == artifact.calibrated_thresholds.end())
    throw_usage_error("unknown-selector", str() + " not calibrated for " + artifact.model.str());
  return it->second;
}

std::string_view to_string(Decision d) noexcept { return d == Decision::model ? "M" : "non-M"; }

std::string_view to_string(Action a) noexcept {
  switch (a) {
    case Action::none: return "none";
    case Action::log: return "log";
    case Action::notify_stub: return "notify_stub";
    case Action::block_stub: return "block_stub";
    case Action::cascade_hook: return "cascade_hook";
  }
  return "none";
}

Action parse_action(std::string_view text) {
  for (Action a : {Action::log, Action::notify_stub, Action::block_stub, Action::cascade_hook})
    if (to_string(a) == text) return a;
  throw_usage_error("invalid-action", std::string(text));
}

DetectionEvent classify(const ModelArtifact& artifact, const FlowRecord& flow, const ThresholdSelector& selector) {
  const double threshold = selector.resolve(artifact);
  const auto t0 = Clock::now();
  const auto x = preprocess::transform(artifact.schema, flow);
  const double g = artifact.forest.normality_score(x);
  const auto elapsed = std::chrono::duration<double, std::micro>(Clock::now() - t0).count();

  DetectionEvent ev;
  ev.flow_key = flow.key;
  ev.flow_start_ms = flow.flow_start_ms;
  ev.model = artifact.model;
  ev.normality_g = g;
  ev.threshold = threshold;
  ev.decision = g >= threshold ? Decision::model : Decision::non_model;
  ev.wall_time_ms = now_ms();
  ev.processing_us = elapsed;
  return ev;
}

ActionPolicy ActionPolicy::parse(std::string_view text) {
  ActionPolicy policy;
  policy.on_positive.clear();
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto comma = text.find(',', pos);
    const auto item = text.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos);
    if (!item.empty()) policy.on_positive.push_back(parse_action(item));
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  if (std::find(policy.on_positive.begin(), policy.on_positive.end(), Action::log) == policy.on_positive.end())
    policy.on_positive.insert(policy.on_positive.begin(), Action::log);
  return policy;
}

void ActionPolicy::validate() const {
  if (std::find(on_positive.begin(), on_positive.end(), Action::log) == on_positive.end())
    throw_usage_error("invalid-policy", "log action is required");
  if (std::find(on_positive.begin(), on_positive.end(), Action::none) != on_positive.end())
    throw_usage_error("invalid-policy", "'none' is not an action");
}

Detector::Detector(std::vector<ModelArtifact> artifacts, ActionPolicy policy, ThresholdSelector selector,
                   DetectorOutputs outputs, std::string source_id)
    : artifacts_(std::move(artifacts)),
      policy_(std::move(policy)),
      selector_(selector),
      outputs_(outputs),
      source_id_(std::move(source_id)) {
  if (artifacts_.empty()) throw_usage_error("no-artifacts", "the detector needs at least one artifact");
  policy_.validate();
  for (const auto& a : artifacts_) {
    if (a.schema.dimension() != a.forest.dimension())
      throw_data_error("dimension-mismatch", a.model.str());
    thresholds_.push_back(selector_.resolve(a));
  }
}

std::vector<DetectionEvent> Detector::process(const FlowRecord& flow) {
  std::vector<DetectionEvent> events;
  events.reserve(artifacts_.size());
  const std::uint64_t index = next_index_++;
  ++counters_.flows;
  std::vector<double> x;
  for (std::size_t i = 0; i < artifacts_.size(); ++i) {
    const auto& a = artifacts_[i];
    const auto t0 = Clock::now();
    x.resize(a.schema.dimension());
    preprocess::transform_into(a.schema, flow, x);
    const double g = a.forest.normality_score(x);

    DetectionEvent ev;
    ev.flow_index = index;
    ev.flow_key = flow.key;
    ev.flow_start_ms = flow.flow_start_ms;
    ev.model = a.model;
    ev.normality_g = g;
    ev.threshold = thresholds_[i];
    ev.decision = g >= thresholds_[i] ? Decision::model : Decision::non_model;
    ev.processing_us = std::chrono::duration<double, std::micro>(Clock::now() - t0).count();
    ev.wall_time_ms = now_ms();
    ev.source_id = source_id_;
    if (ev.decision == Decision::model) {
      ++counters_.positives;
      act(flow, ev);
    }
    if (outputs_.audit) *outputs_.audit << event_to_json(ev) << '\n';
    ++counters_.events;
    events.push_back(std::move(ev));
  }
  return events;
}

void Detector::act(const FlowRecord& flow, DetectionEvent& event) {
  using nlohmann::json;
  for (Action action : policy_.on_positive) {
    event.action_taken = action;
    switch (action) {
      case Action::none:
      case Action::log:
        break;
      case Action::notify_stub:
        ++counters_.notifications;
        if (outputs_.notifications) {
          json note = {{"timestamp_ms", event.wall_time_ms},
                       {"model", event.model.str()},
                       {"source", source_id_},
                       {"message", "device of model " + event.model.str() + " detected behind NAT at " +
                                       source_id_}};
          *outputs_.notifications << note.dump() << '\n';
        }
        break;
      case Action::block_stub:
        ++counters_.blocks;
        if (outputs_.blocks) {
          json block = {{"timestamp_ms", event.wall_time_ms},
                        {"model", event.model.str()},
                        {"source", source_id_},
                        {"dst_ip", flow.key.dst_ip.str()},
                        {"dst_port", flow.key.dst_port},
                        {"protocol", flow.key.ip_protocol}};
          *outputs_.blocks << block.dump() << '\n';
        }
        break;
      case Action::cascade_hook:
        ++counters_.cascades;
        if (policy_.cascade_verifier && !policy_.cascade_verifier(flow, event)) return;
        break;
    }
  }
}

std::vector<DetectionEvent> run_detector(std::span<const FlowRecord> flows, std::vector<ModelArtifact> artifacts,
                                         ActionPolicy policy, ThresholdSelector selector, DetectorOutputs outputs) {
  Detector detector(std::move(artifacts), std::move(policy), selector, outputs);
  std::vector<DetectionEvent> events;
  for (const auto& f : flows) {
    auto batch = detector.process(f);
    std::move(batch.begin(), batch.end(), std::back_inserter(events));
  }
  return events;
}

std::string event_to_json(const DetectionEvent& event) {
  nlohmann::json j = {
      {"timestamp_ms", event.wall_time_ms},
      {"source", event.source_id},
      {"flow_index", event.flow_index},
      {"model", event.model.str()},
      {"g", event.normality_g},
      {"threshold", event.threshold},
      {"decision", to_string(event.decision)},
      {"action", to_string(event.action_taken)},
      {"processing_us", event.processing_us},
      {"flow",
       {{"src_ip", event.flow_key.src_ip.str()},
        {"dst_ip", event.flow_key.dst_ip.str()},
        {"protocol", event.flow_key.ip_protocol},
        {"src_port", event.flow_key.src_port},
        {"dst_port", event.flow_key.dst_port},
        {"start_ms", event.flow_start_ms}}},
  };
  return j.dump();
}

}  // namespace iotnat::detect
