#include "iotnat/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>

#include <json.hpp>

#include "csv.hpp"
#include "iotnat/detect.hpp"
#include "iotnat/error.hpp"
#include "iotnat/preprocess.hpp"

namespace iotnat::eval {

namespace {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

struct Column {
  const char* name;
  std::function<std::optional<double>(const ModelReport&)> get;
};

const std::vector<Column>& numeric_columns() {
  static const std::vector<Column> cols = {
      {"training_flows", [](const ModelReport& r) { return std::optional<double>(double(r.training_flows)); }},
      {"test_positives", [](const ModelReport& r) { return std::optional<double>(double(r.test_positives)); }},
      {"test_negatives", [](const ModelReport& r) { return std::optional<double>(double(r.test_negatives)); }},
      {"training_time_s", [](const ModelReport& r) { return r.training_time_s; }},
      {"artifact_size_bytes",
       [](const ModelReport& r) {
         return r.artifact_size_bytes ? std::optional<double>(double(*r.artifact_size_bytes)) : std::nullopt;
       }},
      {"tpr_default", [](const ModelReport& r) { return r.tpr_default; }},
      {"fpr_default", [](const ModelReport& r) { return r.fpr_default; }},
      {"tpr_p10", [](const ModelReport& r) { return r.tpr_p10; }},
      {"fpr_p10", [](const ModelReport& r) { return r.fpr_p10; }},
      {"roc_auc", [](const ModelReport& r) { return r.roc_auc; }},
      {"time_to_detect_s", [](const ModelReport& r) { return r.time_to_detect_s; }},
  };
  return cols;
}

std::string cell(const std::optional<double>& v) { return v ? detail::format_double(*v) : std::string(); }

json to_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::ofstream open_in(const std::filesystem::path& dir, const std::string& name) {
  std::ofstream out(dir / name, std::ios::trunc);
  if (!out) throw_io_error("unwritable-directory", (dir / name).string());
  return out;
}

}  // namespace

Rates confusion_rates(std::span<const LabeledScore> scores, double threshold) {
  std::size_t pos = 0, neg = 0, tp = 0, fp = 0;
  for (const auto& s : scores) {
    const bool predicted = s.g >= threshold;
    if (s.is_model) {
      ++pos;
      tp += predicted;
    } else {
      ++neg;
      fp += predicted;
    }
  }
  Rates r;
  if (pos) r.tpr = double(tp) / double(pos);
  if (neg) r.fpr = double(fp) / double(neg);
  return r;
}

std::vector<RocPoint> roc_curve(std::span<const LabeledScore> scores) {
  std::vector<LabeledScore> sorted(scores.begin(), scores.end());
  std::sort(sorted.begin(), sorted.end(), [](const LabeledScore& a, const LabeledScore& b) { return a.g > b.g; });
  std::size_t pos = 0, neg = 0;
  for (const auto& s : sorted) (s.is_model ? pos : neg)++;
  if (pos == 0 || neg == 0) return {};

  std::vector<RocPoint> curve{{0.0, 0.0}};
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < sorted.size();) {
    const double g = sorted[i].g;
    // One point per distinct threshold; ties move diagonally.
    for (; i < sorted.size() && sorted[i].g == g; ++i) (sorted[i].is_model ? tp : fp)++;
    curve.push_back({double(fp) / double(neg), double(tp) / double(pos)});
  }
  return curve;
}

double trapezoid_area(std::span<const RocPoint> curve) {
  double area = 0.0;
  for (std::size_t i = 1; i < curve.size(); ++i)
    area += (curve[i].fpr - curve[i - 1].fpr) * (curve[i].tpr + curve[i - 1].tpr) / 2.0;
  return area;
}

std::optional<double> roc_auc(std::span<const LabeledScore> scores) {
  const auto curve = roc_curve(scores);
  if (curve.empty()) return std::nullopt;
  return trapezoid_area(curve);
}

double time_to_detect(const FlowDataset& model_flows, double preprocess_s, double classify_s) {
  if (model_flows.size() < 2) throw_data_error("insufficient-data", "time to detect needs at least two flows");
  std::vector<std::int64_t> starts;
  double duration_sum = 0.0;
  for (const auto& lf : model_flows.flows) {
    starts.push_back(lf.flow.flow_start_ms);
    duration_sum += double(flow_duration(lf.flow));
  }
  std::sort(starts.begin(), starts.end());
  const double mean_iat_ms = double(starts.back() - starts.front()) / double(starts.size() - 1);
  const double mean_duration_ms = duration_sum / double(model_flows.size());
  return (mean_iat_ms + mean_duration_ms) / 1000.0 + preprocess_s + classify_s;
}

ModelReport evaluate_artifact(const iforest::ModelArtifact& artifact, const FlowDataset& test) {
  ModelReport report;
  report.model = artifact.model.str();
  report.training_flows = artifact.training_flow_count;
  report.artifact_size_bytes = iforest::serialize_artifact(artifact).size();

  std::vector<LabeledScore> scores;
  scores.reserve(test.size());
  std::vector<double> x(artifact.schema.dimension());
  double preprocess_total = 0.0;
  double classify_total = 0.0;
  FlowDataset own;
  for (const auto& lf : test.flows) {
    const auto t0 = Clock::now();
    preprocess::transform_into(artifact.schema, lf.flow, x);
    const auto t1 = Clock::now();
    const double g = artifact.forest.normality_score(x);
    const auto t2 = Clock::now();
    preprocess_total += std::chrono::duration<double>(t1 - t0).count();
    classify_total += std::chrono::duration<double>(t2 - t1).count();
    const bool is_model = lf.label.is(artifact.model);
    scores.push_back({g, is_model});
    if (is_model) {
      ++report.test_positives;
      own.flows.push_back(lf);
    } else {
      ++report.test_negatives;
    }
  }

  const auto rates_default = confusion_rates(scores, artifact.default_threshold);
  report.tpr_default = rates_default.tpr;
  report.fpr_default = rates_default.fpr;
  if (auto it = artifact.calibrated_thresholds.find(10); it != artifact.calibrated_thresholds.end()) {
    const auto rates = confusion_rates(scores, it->second);
    report.tpr_p10 = rates.tpr;
    report.fpr_p10 = rates.fpr;
  }
  report.roc = roc_curve(scores);
  if (!report.roc.empty()) report.roc_auc = trapezoid_area(report.roc);
  if (own.size() >= 2 && !test.empty()) {
    const double n = double(test.size());
    report.time_to_detect_s = time_to_detect(own, preprocess_total / n, classify_total / n);
  }
  return report;
}

Summary summarize(std::span<const std::optional<double>> values) {
  std::vector<double> xs;
  for (const auto& v : values)
    if (v) xs.push_back(*v);
  Summary s;
  if (xs.empty()) return s;
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= double(xs.size());
  s.mean = mean;
  if (xs.size() >= 2) {
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    s.stddev = std::sqrt(ss / double(xs.size() - 1));
  }
  return s;
}

std::vector<std::string> report_columns() {
  std::vector<std::string> cols{"method", "model"};
  for (const auto& c : numeric_columns()) cols.emplace_back(c.name);
  return cols;
}

void emit_report(const EvalReport& report, const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec || !std::filesystem::is_directory(out_dir)) throw_io_error("unwritable-directory", out_dir.string());

  auto csv = open_in(out_dir, "report.csv");
  const auto cols = report_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) csv << (i ? "," : "") << cols[i];
  csv << '\n';

  json j_models = json::array();
  json j_summary = json::object();

  std::vector<std::string> methods;
  for (const auto& m : report.models)
    if (std::find(methods.begin(), methods.end(), m.method) == methods.end()) methods.push_back(m.method);

  for (const auto& method : methods) {
    std::vector<const ModelReport*> rows;
    for (const auto& m : report.models)
      if (m.method == method) rows.push_back(&m);

    for (const auto* r : rows) {
      csv << detail::csv_escape(r->method) << ',' << detail::csv_escape(r->model);
      json jr = {{"method", r->method}, {"model", r->model}};
      for (const auto& c : numeric_columns()) {
        const auto v = c.get(*r);
        csv << ',' << cell(v);
        jr[c.name] = to_json(v);
      }
      csv << '\n';
      j_models.push_back(std::move(jr));

      if (!r->roc.empty()) {
        auto roc = open_in(out_dir, "roc_" + (method == "iforest" ? "" : method + "_") + r->model + ".csv");
        roc << "fpr,tpr\n";
        for (const auto& p : r->roc) roc << detail::format_double(p.fpr) << ',' << detail::format_double(p.tpr) << '\n';
      }
    }

    json j_mean = json::object(), j_std = json::object();
    std::string mean_row = detail::csv_escape(method) + ",mean";
    std::string std_row = detail::csv_escape(method) + ",stddev";
    for (const auto& c : numeric_columns()) {
      std::vector<std::optional<double>> values;
      for (const auto* r : rows) values.push_back(c.get(*r));
      const auto s = summarize(values);
      mean_row += "," + cell(s.mean);
      std_row += "," + cell(s.stddev);
      j_mean[c.name] = to_json(s.mean);
      j_std[c.name] = to_json(s.stddev);
    }
    csv << mean_row << '\n' << std_row << '\n';
    j_summary[method] = {{"mean", j_mean}, {"stddev", j_std}};
  }
  if (!csv) throw_io_error("unwritable-directory", (out_dir / "report.csv").string());

  auto js = open_in(out_dir, "report.json");
  js << json{{"columns", cols}, {"models", j_models}, {"summary", j_summary}}.dump(2) << '\n';
}

}  // namespace iotnat::eval
