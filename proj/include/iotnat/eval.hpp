#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "iotnat/artifact.hpp"
#include "iotnat/flowdata.hpp"

namespace iotnat::eval {

// Normality score of one test flow and whether it truly belongs to the model.
struct LabeledScore {
  double g = 0.0;
  bool is_model = false;
};

// A rate is undefined (nullopt) when its class has no members.
struct Rates {
  std::optional<double> tpr;
  std::optional<double> fpr;
};

// TPR = |g >= th & M| / |M|, FPR = |g >= th & !M| / |!M|.
Rates confusion_rates(std::span<const LabeledScore> scores, double threshold);

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
};

// Threshold sweep from +inf down over every distinct score. Starts at (0,0)
// and ends at (1,1). Empty when either class is empty.
std::vector<RocPoint> roc_curve(std::span<const LabeledScore> scores);
// Trapezoidal area under a curve of points.
double trapezoid_area(std::span<const RocPoint> curve);
// nullopt for single-class input.
std::optional<double> roc_auc(std::span<const LabeledScore> scores);

// Mean inter-arrival of successive flow starts + mean duration + the two
// compute times, in seconds. Throws Error(data, "insufficient-data") for < 2.
double time_to_detect(const FlowDataset& model_flows, double preprocess_s, double classify_s);

struct ModelReport {
  std::string method = "iforest";
  std::string model;
  std::size_t training_flows = 0;
  std::size_t test_positives = 0;
  std::size_t test_negatives = 0;
  std::optional<double> training_time_s;
  std::optional<std::size_t> artifact_size_bytes;
  std::optional<double> tpr_default;
  std::optional<double> fpr_default;
  std::optional<double> tpr_p10;
  std::optional<double> fpr_p10;
  std::optional<double> roc_auc;
  std::optional<double> time_to_detect_s;
  std::vector<RocPoint> roc;  // written to roc_<model>.csv when non-empty
};

struct EvalReport {
  std::vector<ModelReport> models;
};

// Scores every test flow with the artifact; negatives are all flows not
// labeled with the artifact's model (other models and non-IoT pooled).
ModelReport evaluate_artifact(const iforest::ModelArtifact& artifact, const FlowDataset& test);

// Mean and sample standard deviation of a column over rows where it is
// defined. Stddev is undefined for fewer than two values.
struct Summary {
  std::optional<double> mean;
  std::optional<double> stddev;
};
Summary summarize(std::span<const std::optional<double>> values);

// report.csv and report.json, plus roc_<model>.csv per model with a curve.
// Mean/stddev rows follow the model rows when there is at least one model.
// Throws Error(io, "unwritable-directory").
void emit_report(const EvalReport& report, const std::filesystem::path& out_dir);

// Column order of report.csv.
std::vector<std::string> report_columns();

}  // namespace iotnat::eval
