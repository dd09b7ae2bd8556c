#include "iotnat/cli.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "iotnat/artifact.hpp"
#include "iotnat/baselines.hpp"
#include "iotnat/collector.hpp"
#include "iotnat/detect.hpp"
#include "iotnat/error.hpp"
#include "iotnat/eval.hpp"
#include "iotnat/ingest.hpp"
#include "iotnat/synth.hpp"

namespace iotnat::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kArtifactExtension = ".iotnat";
constexpr const char* kTrainingIndex = "training.json";

std::atomic<bool> g_interrupted{false};

extern "C" void on_signal(int) { g_interrupted = true; }

std::int64_t now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
      .count();
}

std::string fmt(const std::optional<double>& v) {
  if (!v) return "n/a";
  std::ostringstream s;
  s.precision(4);
  s << std::fixed << *v;
  return s.str();
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw_io_error("unwritable-directory", dir.string());
}

std::ofstream open_out(const fs::path& path, std::ios::openmode mode = std::ios::trunc) {
  std::ofstream out(path, mode);
  if (!out) throw_io_error("unwritable-file", path.string());
  return out;
}

struct Context {
  std::ostream& out;
  std::ostream& err;
};

// ---- shared loading ----

struct DataOptions {
  std::string data;
  std::string inventory;
};

void add_data_options(CLI::App* cmd, DataOptions& o, const std::string& flag, const std::string& what) {
  cmd->add_option(flag, o.data, what)->required()->check(CLI::ExistingFile);
  cmd->add_option("--inventory", o.inventory, "Inventory CSV (MAC,IP,MODEL) for rows without LABEL")
      ->check(CLI::ExistingFile);
}

FlowDataset load_flows(Context& ctx, const std::string& path, const std::string& inventory_path) {
  std::optional<DeviceInventory> inventory;
  if (!inventory_path.empty()) inventory = ingest::parse_inventory_csv(inventory_path);
  auto result = ingest::parse_flow_csv(fs::path(path), inventory ? &*inventory : nullptr);
  if (!result.rejected.empty()) {
    ctx.err << "warning code=rejected-rows detail=" << result.rejected.size() << " of " << result.rows
            << " rows skipped in " << path << " (first: line " << result.rejected.front().line << ' '
            << result.rejected.front().reason << ")\n";
  }
  return std::move(result.dataset);
}

std::vector<ingest::DnsEvent> load_dns(Context& ctx, const std::string& path) {
  auto result = ingest::parse_dns_jsonl(fs::path(path));
  if (!result.rejected.empty())
    ctx.err << "warning code=rejected-rows detail=" << result.rejected.size() << " lines skipped in " << path
            << '\n';
  return std::move(result.events);
}

// A directory of artifacts or a single artifact file.
std::vector<fs::path> artifact_files(const fs::path& dir) {
  if (fs::is_regular_file(dir)) return {dir};
  if (!fs::is_directory(dir)) throw_usage_error("missing-directory", dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == kArtifactExtension) files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw_usage_error("no-artifacts", "no *" + std::string(kArtifactExtension) + " in " + dir.string());
  return files;
}

std::vector<iforest::ModelArtifact> load_artifacts(const fs::path& dir) {
  std::vector<iforest::ModelArtifact> out;
  for (const auto& f : artifact_files(dir)) out.push_back(iforest::load_artifact(f));
  return out;
}

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw_usage_error("invalid-percentile", item);
    }
  }
  return out;
}

// ---- synth ----

struct SynthOptions {
  std::string scenario = "separable-13";
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> flows_per_device;
  std::optional<std::size_t> dns_per_device;
};

void add_synth(CLI::App& app, SynthOptions& o) {
  auto* cmd = app.add_subcommand("synth", "Generate a labeled synthetic dataset");
  cmd->footer(
      "Writes flows.csv (labeled flow CSV), inventory.csv, dns.jsonl and scenario.json.\n"
      "SCENARIO is a preset (separable-13, overlap-pair) or a scenario JSON file.");
  cmd->add_option("--scenario", o.scenario, "Preset name or scenario JSON path")->capture_default_str();
  cmd->add_option("--out", o.out, "Output directory")->required();
  cmd->add_option("--seed", o.seed, "Override the scenario seed");
  cmd->add_option("--flows-per-device", o.flows_per_device, "Override flows per device")->check(CLI::PositiveNumber);
  cmd->add_option("--dns-per-device", o.dns_per_device, "Override DNS events per device");
}

int run_synth(Context& ctx, const SynthOptions& o) {
  auto scenario = synth::load_scenario(o.scenario);
  if (o.seed) scenario.seed = *o.seed;
  if (o.flows_per_device) scenario.flows_per_device = *o.flows_per_device;
  if (o.dns_per_device) scenario.dns_events_per_device = *o.dns_per_device;
  scenario.validate();
  const fs::path dir(o.out);
  ensure_dir(dir);
  const auto flows = synth::generate_flows(scenario);
  ingest::write_flow_csv(dir / "flows.csv", flows);
  ingest::write_inventory_csv(dir / "inventory.csv", synth::scenario_inventory(scenario));
  const auto dns = synth::generate_dns(scenario);
  ingest::write_dns_jsonl(dir / "dns.jsonl", dns);
  open_out(dir / "scenario.json") << synth::scenario_to_json(scenario) << '\n';
  ctx.out << "scenario " << scenario.name << ": " << flows.size() << " flows, " << dns.size() << " dns events -> "
          << dir.string() << '\n';
  return kExitOk;
}

// ---- split ----

struct SplitOptions {
  DataOptions data;
  std::string ratios = "0.7,0.1,0.2";
  std::string out;
};

void add_split(CLI::App& app, SplitOptions& o) {
  auto* cmd = app.add_subcommand("split", "Chronological per-device split into train/validation/test CSVs");
  add_data_options(cmd, o.data, "--data", "Labeled flow CSV");
  cmd->add_option("--ratios", o.ratios, "training,validation,test")->capture_default_str();
  cmd->add_option("--out", o.out, "Output directory (default: next to --data)");
}

int run_split(Context& ctx, const SplitOptions& o) {
  const auto ratios = SplitRatios::parse(o.ratios);
  const auto split = chronological_split(load_flows(ctx, o.data.data, o.data.inventory), ratios);
  const fs::path dir = o.out.empty() ? fs::path(o.data.data).parent_path() : fs::path(o.out);
  if (!dir.empty()) ensure_dir(dir);
  ingest::write_flow_csv(dir / "train.csv", split.training);
  ingest::write_flow_csv(dir / "validation.csv", split.validation);
  ingest::write_flow_csv(dir / "test.csv", split.test);
  ctx.out << "train " << split.training.size() << ", validation " << split.validation.size() << ", test "
          << split.test.size() << '\n';
  return kExitOk;
}

// ---- train ----

struct TrainOptions {
  DataOptions data;
  std::string model;
  std::string out = "artifacts";
  std::uint64_t seed = 0;
  std::size_t trees = 100;
  std::size_t subsample = 256;
  std::string percentiles = "10";
  std::string ratios = "0.7,0.1,0.2";
  bool no_split = false;
  std::optional<std::int64_t> trained_at;
};

void add_train(CLI::App& app, TrainOptions& o) {
  auto* cmd = app.add_subcommand("train", "Train one isolation-forest artifact per device model");
  cmd->footer(
      "The dataset is split chronologically per device; the model's training part builds the\n"
      "forest and its validation part calibrates the percentile thresholds. Artifacts are\n"
      "written as <model>.iotnat with a training.json index next to them.");
  add_data_options(cmd, o.data, "--data", "Labeled flow CSV");
  cmd->add_option("--model", o.model, "Canonical model id (type.make.version) or 'all'")->required();
  cmd->add_option("--out", o.out, "Artifact directory")->capture_default_str();
  cmd->add_option("--seed", o.seed, "Forest seed")->capture_default_str();
  cmd->add_option("--trees", o.trees, "Number of trees")->capture_default_str()->check(CLI::PositiveNumber);
  cmd->add_option("--subsample", o.subsample, "Subsample size per tree")->capture_default_str()->check(CLI::Range(2, 1 << 20));
  cmd->add_option("--percentiles", o.percentiles, "Calibration percentiles, comma separated (0..30)")
      ->capture_default_str();
  cmd->add_option("--ratios", o.ratios, "Split ratios")->capture_default_str();
  cmd->add_flag("--no-split", o.no_split, "Use all flows for training (no calibration)");
  cmd->add_option("--trained-at", o.trained_at, "Training timestamp in ms (default: now)");
}

int run_train(Context& ctx, const TrainOptions& o) {
  const auto dataset = load_flows(ctx, o.data.data, o.data.inventory);
  detect::TrainConfig base;
  base.forest.num_trees = o.trees;
  base.forest.subsample_size = o.subsample;
  base.forest.seed = o.seed;
  base.calibration_percentiles = parse_int_list(o.percentiles);
  base.ratios = SplitRatios::parse(o.ratios);
  base.trained_at_ms = o.trained_at.value_or(now_ms());
  base.validate();

  std::vector<DeviceModelId> models;
  if (o.model == "all") {
    models = models_in(dataset);
    if (models.empty()) throw_data_error("insufficient-data", "no model-labeled flows in " + o.data.data);
  } else {
    auto id = DeviceModelId::try_parse(o.model);
    if (!id) throw_usage_error("invalid-model", o.model);
    models.push_back(*id);
  }

  DatasetSplit split;
  if (o.no_split) {
    split.training = dataset;
    base.calibration_percentiles.clear();
  } else {
    split = chronological_split(dataset, base.ratios);
  }

  const fs::path dir(o.out);
  ensure_dir(dir);
  json index = json::object();
  if (std::ifstream in(dir / kTrainingIndex); in) {
    index = json::parse(in, nullptr, false);
    if (!index.is_object()) index = json::object();
  }
  for (const auto& m : models) {
    auto cfg = base;
    cfg.model = m;
    detect::TrainReport report;
    const auto artifact = detect::train_on_split(split, cfg, &report);
    const auto path = dir / (m.str() + kArtifactExtension);
    iforest::save_artifact(artifact, path);
    for (const auto& w : report.warnings) ctx.err << "warning code=no-calibration detail=" << w << '\n';
    index[m.str()] = {{"training_flows", report.training_flows},
                      {"validation_flows", report.validation_flows},
                      {"training_time_s", report.training_seconds},
                      {"digest", iforest::artifact_digest(artifact)}};
    ctx.out << m.str() << ": " << report.training_flows << " training flows, " << fmt(report.training_seconds)
            << " s -> " << path.string() << '\n';
  }
  open_out(dir / kTrainingIndex) << index.dump(2) << '\n';
  return kExitOk;
}

// ---- calibrate ----

struct CalibrateOptions {
  std::string artifact;
  DataOptions validation;
  std::vector<int> percentiles;
  std::string out;
};

void add_calibrate(CLI::App& app, CalibrateOptions& o) {
  auto* cmd = app.add_subcommand("calibrate", "Set percentile thresholds of an artifact from validation flows");
  cmd->add_option("--artifact", o.artifact, "Artifact file")->required()->check(CLI::ExistingFile);
  add_data_options(cmd, o.validation, "--validation", "Validation flow CSV (only the artifact's model is used)");
  cmd->add_option("--percentile", o.percentiles, "Percentile in [0, 30]; repeatable")->required();
  cmd->add_option("--out", o.out, "Write here instead of updating in place");
}

int run_calibrate(Context& ctx, const CalibrateOptions& o) {
  auto artifact = iforest::load_artifact(o.artifact);
  const auto validation = filter_model(load_flows(ctx, o.validation.data, o.validation.inventory), artifact.model);
  for (int p : o.percentiles) {
    artifact.calibrated_thresholds[p] = detect::calibrate_threshold(artifact, validation, p);
    ctx.out << artifact.model.str() << " p" << p << " = " << artifact.calibrated_thresholds[p] << '\n';
  }
  iforest::save_artifact(artifact, o.out.empty() ? o.artifact : o.out);
  return kExitOk;
}

// ---- evaluate ----

struct EvaluateOptions {
  std::string artifacts = "artifacts";
  DataOptions test;
  std::string threshold = "p10";
  std::string out = "report";
  std::string split_ratios;
};

void add_evaluate(CLI::App& app, EvaluateOptions& o) {
  auto* cmd = app.add_subcommand("evaluate", "Score a labeled test set with every artifact and write reports");
  cmd->footer(
      "Writes report.csv, report.json and roc_<model>.csv. Negatives for a model are all\n"
      "test flows of other models and non-IoT hosts.");
  cmd->add_option("--artifacts", o.artifacts, "Artifact directory or file")->capture_default_str();
  add_data_options(cmd, o.test, "--test", "Labeled test flow CSV");
  cmd->add_option("--threshold", o.threshold, "Threshold for the printed summary: default | pNN")
      ->capture_default_str();
  cmd->add_option("--out", o.out, "Report directory")->capture_default_str();
  cmd->add_option("--split-ratios", o.split_ratios, "Treat --test as a full dataset and use its test split");
}

int run_evaluate(Context& ctx, const EvaluateOptions& o) {
  const auto selector = detect::ThresholdSelector::parse(o.threshold);
  const auto artifacts = load_artifacts(o.artifacts);
  FlowDataset test = load_flows(ctx, o.test.data, o.test.inventory);
  if (!o.split_ratios.empty()) test = chronological_split(test, SplitRatios::parse(o.split_ratios)).test;

  json index;
  if (std::ifstream in(fs::path(o.artifacts) / kTrainingIndex); in) index = json::parse(in, nullptr, false);

  eval::EvalReport report;
  std::vector<std::optional<double>> tprs, fprs, aucs;
  for (const auto& a : artifacts) {
    auto r = eval::evaluate_artifact(a, test);
    if (index.is_object() && index.contains(r.model) && index[r.model].contains("training_time_s"))
      r.training_time_s = index[r.model]["training_time_s"].get<double>();
    selector.resolve(a);  // rejects an uncalibrated selector before any output
    if (selector.is_default()) {
      tprs.push_back(r.tpr_default);
      fprs.push_back(r.fpr_default);
    } else if (selector.percentile_value() == 10) {
      tprs.push_back(r.tpr_p10);
      fprs.push_back(r.fpr_p10);
    }
    aucs.push_back(r.roc_auc);
    report.models.push_back(std::move(r));
  }
  // Selectors other than default/p10 need a second pass at their threshold.
  if (!selector.is_default() && selector.percentile_value() != 10) {
    for (const auto& a : artifacts) {
      std::vector<eval::LabeledScore> scores;
      for (const auto& lf : test.flows) {
        const auto ev = detect::classify(a, lf.flow, selector);
        scores.push_back({ev.normality_g, lf.label.is(a.model)});
      }
      const auto rates = eval::confusion_rates(scores, selector.resolve(a));
      tprs.push_back(rates.tpr);
      fprs.push_back(rates.fpr);
    }
  }
  eval::emit_report(report, o.out);
  ctx.out << "models " << artifacts.size() << ", test flows " << test.size() << '\n'
          << "mean roc_auc " << fmt(eval::summarize(aucs).mean) << '\n'
          << "mean tpr@" << selector.str() << ' ' << fmt(eval::summarize(tprs).mean) << '\n'
          << "mean fpr@" << selector.str() << ' ' << fmt(eval::summarize(fprs).mean) << '\n'
          << "report -> " << o.out << '\n';
  return kExitOk;
}

// ---- collector helpers ----

struct StreamOptions {
  std::string bind = "0.0.0.0";
  std::optional<std::uint64_t> max_datagrams;
  std::optional<double> duration_s;
};

void add_stream_options(CLI::App* cmd, StreamOptions& o) {
  cmd->add_option("--bind", o.bind, "Bind address")->capture_default_str();
  cmd->add_option("--max-datagrams", o.max_datagrams, "Stop after this many datagrams");
  cmd->add_option("--duration", o.duration_s, "Stop after this many seconds")->check(CLI::NonNegativeNumber);
}

// Runs a collector until a stop condition or SIGINT/SIGTERM.
ingest::CollectorStats run_collector(Context& ctx, std::uint16_t port, const StreamOptions& o,
                                     const ingest::FlowSink& sink) {
  ingest::CollectorConfig cfg;
  cfg.bind_address = o.bind;
  cfg.port = port;
  ingest::UdpCollector collector(cfg, sink);
  collector.start();
  ctx.err << "info code=listening detail=" << o.bind << ':' << collector.port() << '\n';
  g_interrupted = false;
  auto prev_int = std::signal(SIGINT, on_signal);
  auto prev_term = std::signal(SIGTERM, on_signal);
  const auto deadline =
      o.duration_s ? std::optional(std::chrono::steady_clock::now() +
                                   std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                       std::chrono::duration<double>(*o.duration_s)))
                   : std::nullopt;
  while (!g_interrupted) {
    if (deadline && std::chrono::steady_clock::now() >= *deadline) break;
    if (o.max_datagrams && collector.stats().datagrams >= *o.max_datagrams) break;
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
  collector.stop();
  std::signal(SIGINT, prev_int);
  std::signal(SIGTERM, prev_term);
  return collector.stats();
}

// ---- collect ----

struct CollectOptions {
  std::uint16_t port = 2055;
  std::string out;
  StreamOptions stream;
};

void add_collect(CLI::App& app, CollectOptions& o) {
  auto* cmd = app.add_subcommand("collect", "Receive NetFlow v9 over UDP and write a raw flow CSV");
  cmd->add_option("--port", o.port, "UDP port (0 = ephemeral)")->capture_default_str();
  cmd->add_option("--out", o.out, "Output CSV")->required();
  add_stream_options(cmd, o.stream);
}

int run_collect(Context& ctx, const CollectOptions& o) {
  auto out = open_out(o.out);
  std::vector<FlowRecord> flows;
  const auto stats = run_collector(ctx, o.port, o.stream, [&](const FlowRecord& f) { flows.push_back(f); });
  ingest::write_flow_csv(out, flows);
  if (!out) throw_io_error("write-failed", o.out);
  ctx.out << "datagrams " << stats.datagrams << ", records " << stats.records << ", malformed " << stats.malformed
          << '\n';
  return kExitOk;
}

// ---- detect ----

struct DetectOptions {
  std::string artifacts = "artifacts";
  std::string input;
  DataOptions csv;
  std::string policy = "log";
  std::string threshold = "default";
  std::string audit = "-";
  std::string notifications;
  std::string blocks;
  std::string source_id = "home-0";
  StreamOptions stream;
};

void add_detect(CLI::App& app, DetectOptions& o) {
  auto* cmd = app.add_subcommand("detect", "Run the local detector over a flow CSV or a live NetFlow v9 stream");
  cmd->footer(
      "--input is a flow CSV path (optionally prefixed with csv:) or udp:PORT.\n"
      "--policy lists actions on positives: log, notify_stub, block_stub, cascade_hook.\n"
      "Audit, notification and block outputs are JSON lines; '-' means stdout.");
  cmd->add_option("--artifacts", o.artifacts, "Artifact directory or file")->capture_default_str();
  cmd->add_option("--input", o.input, "csv:FILE | FILE | udp:PORT")->required();
  cmd->add_option("--inventory", o.csv.inventory, "Inventory CSV for CSV input")->check(CLI::ExistingFile);
  cmd->add_option("--policy", o.policy, "Comma separated actions")->capture_default_str();
  cmd->add_option("--threshold", o.threshold, "default | pNN")->capture_default_str();
  cmd->add_option("--audit", o.audit, "Audit log path")->capture_default_str();
  cmd->add_option("--notifications", o.notifications, "Notification stub output");
  cmd->add_option("--blocks", o.blocks, "Block stub output");
  cmd->add_option("--source-id", o.source_id, "Identifier of the monitored home")->capture_default_str();
  add_stream_options(cmd, o.stream);
}

int run_detect(Context& ctx, const DetectOptions& o) {
  auto artifacts = load_artifacts(o.artifacts);
  const auto selector = detect::ThresholdSelector::parse(o.threshold);
  const auto policy = detect::ActionPolicy::parse(o.policy);

  std::unique_ptr<std::ofstream> audit_file, note_file, block_file;
  auto sink_for = [&](const std::string& path, std::unique_ptr<std::ofstream>& holder) -> std::ostream* {
    if (path.empty()) return nullptr;
    if (path == "-") return &ctx.out;
    holder = std::make_unique<std::ofstream>(open_out(path));
    return holder.get();
  };
  detect::DetectorOutputs outputs;
  outputs.audit = sink_for(o.audit, audit_file);
  outputs.notifications = sink_for(o.notifications, note_file);
  outputs.blocks = sink_for(o.blocks, block_file);
  detect::Detector detector(std::move(artifacts), policy, selector, outputs, o.source_id);

  if (o.input.rfind("udp:", 0) == 0) {
    int port = -1;
    try {
      std::size_t used = 0;
      port = std::stoi(o.input.substr(4), &used);
      if (used != o.input.size() - 4) port = -1;
    } catch (const std::exception&) {
    }
    if (port < 0 || port > 65535) throw_usage_error("invalid-input", o.input);
    run_collector(ctx, static_cast<std::uint16_t>(port), o.stream,
                  [&](const FlowRecord& f) { detector.process(f); });
  } else {
    const std::string path = o.input.rfind("csv:", 0) == 0 ? o.input.substr(4) : o.input;
    if (!fs::is_regular_file(path)) throw_usage_error("missing-file", path);
    for (const auto& lf : load_flows(ctx, path, o.csv.inventory).flows) detector.process(lf.flow);
  }
  const auto& c = detector.counters();
  ctx.err << "info code=detector-summary detail=flows=" << c.flows << " events=" << c.events
          << " positives=" << c.positives << " notifications=" << c.notifications << " blocks=" << c.blocks << '\n';
  return kExitOk;
}

// ---- label ----

struct LabelOptions {
  std::string external;
  std::string internal;
  std::string inventory;
  std::string router_ip;
  std::string out;
};

void add_label(CLI::App& app, LabelOptions& o) {
  auto* cmd = app.add_subcommand("label", "Label NATed flows by joining them with pre-NAT flows");
  cmd->add_option("--external", o.external, "Flows captured outside the NAT")->required()->check(CLI::ExistingFile);
  cmd->add_option("--internal", o.internal, "Flows captured inside the NAT")->required()->check(CLI::ExistingFile);
  cmd->add_option("--inventory", o.inventory, "Inventory CSV")->required()->check(CLI::ExistingFile);
  cmd->add_option("--router-ip", o.router_ip, "External address of the NAT router")->required();
  cmd->add_option("--out", o.out, "Labeled flow CSV")->required();
}

int run_label(Context& ctx, const LabelOptions& o) {
  const auto inventory = ingest::parse_inventory_csv(o.inventory);
  auto records = [&](const std::string& path) {
    std::vector<FlowRecord> flows;
    for (auto& lf : load_flows(ctx, path, {}).flows) flows.push_back(std::move(lf.flow));
    return flows;
  };
  const auto external = records(o.external);
  const auto internal = records(o.internal);
  const auto result = label_flows(external, internal, inventory, Ipv4::parse(o.router_ip));
  ingest::write_flow_csv(fs::path(o.out), result.labeled);
  std::map<std::string, std::size_t> reasons;
  for (const auto& r : result.rejected) ++reasons[r.reason];
  ctx.out << "labeled " << result.labeled.size() << " of " << external.size();
  for (const auto& [reason, n] : reasons) ctx.out << ", " << reason << ' ' << n;
  ctx.out << '\n';
  return kExitOk;
}

// ---- baseline ----

struct BaselineOptions {
  std::string method;
  std::string data;
  std::string train;
  std::string test;
  double train_fraction = 0.7;
  double tolerance = baselines::kDefaultSlopeTolerance;
  std::int64_t window_s = baselines::kDefaultWindowSeconds;
  std::size_t min_distinct = baselines::kMinProfileNames;
  std::string out = "baseline-report";
};

void add_baseline(CLI::App& app, BaselineOptions& o) {
  auto* cmd = app.add_subcommand("baseline", "Evaluate the IP-ID or domain baseline on DNS JSONL");
  cmd->footer(
      "Give --train and --test, or --data with --train-fraction for a chronological split\n"
      "per source address. Writes report.csv/report.json with method ipid or domain.");
  cmd->add_option("method", o.method, "ipid | domain")->required()->check(CLI::IsMember({"ipid", "domain"}));
  auto* data = cmd->add_option("--data", o.data, "DNS JSONL to split")->check(CLI::ExistingFile);
  auto* train = cmd->add_option("--train", o.train, "Training DNS JSONL")->check(CLI::ExistingFile);
  auto* test = cmd->add_option("--test", o.test, "Test DNS JSONL")->check(CLI::ExistingFile);
  data->excludes(train)->excludes(test);
  train->needs(test);
  test->needs(train);
  cmd->add_option("--train-fraction", o.train_fraction, "Fraction of each source's events used for training")
      ->capture_default_str()
      ->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--tolerance", o.tolerance, "Relative slope tolerance (ipid)")->capture_default_str();
  cmd->add_option("--window", o.window_s, "Window seconds (domain)")->capture_default_str();
  cmd->add_option("--min-distinct", o.min_distinct, "Distinct names per window (domain)")->capture_default_str();
  cmd->add_option("--out", o.out, "Report directory")->capture_default_str();
}

int run_baseline(Context& ctx, const BaselineOptions& o) {
  std::vector<ingest::DnsEvent> train, test;
  if (!o.data.empty()) {
    std::map<Ipv4, std::vector<ingest::DnsEvent>> per_source;
    auto events = load_dns(ctx, o.data);
    std::stable_sort(events.begin(), events.end(),
                     [](const auto& a, const auto& b) { return a.timestamp_ms < b.timestamp_ms; });
    for (auto& ev : events) per_source[ev.observed_src_ip].push_back(std::move(ev));
    for (auto& [src, evs] : per_source) {
      const auto cut = static_cast<std::size_t>(o.train_fraction * double(evs.size()) + 1e-9);
      train.insert(train.end(), evs.begin(), evs.begin() + static_cast<std::ptrdiff_t>(cut));
      test.insert(test.end(), evs.begin() + static_cast<std::ptrdiff_t>(cut), evs.end());
    }
  } else if (!o.train.empty()) {
    train = load_dns(ctx, o.train);
    test = load_dns(ctx, o.test);
  } else {
    throw_usage_error("missing-input", "baseline needs --data or --train/--test");
  }

  const auto rates = o.method == "ipid" ? baselines::evaluate_ipid(train, test, o.tolerance)
                                        : baselines::evaluate_domain(train, test, o.window_s, o.min_distinct);
  eval::EvalReport report;
  std::vector<std::optional<double>> tprs, fprs;
  for (const auto& r : rates) {
    eval::ModelReport m;
    m.method = o.method;
    m.model = r.model.str();
    m.test_positives = r.positives;
    m.test_negatives = r.negatives;
    m.tpr_default = r.tpr;
    m.fpr_default = r.fpr;
    tprs.push_back(r.tpr);
    fprs.push_back(r.fpr);
    report.models.push_back(std::move(m));
  }
  eval::emit_report(report, o.out);
  ctx.out << o.method << ": models " << rates.size() << ", mean tpr " << fmt(eval::summarize(tprs).mean)
          << ", mean fpr " << fmt(eval::summarize(fprs).mean) << '\n'
          << "report -> " << o.out << '\n';
  return kExitOk;
}

int exit_code_for(ErrorKind kind) { return kind == ErrorKind::usage ? kExitUsage : kExitData; }

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Detect IoT device models behind NAT from NetFlow records", "iotnat"};
  app.require_subcommand(1);
  app.set_config("--config", "", "TOML/INI config file; sections per subcommand, flags win");
  app.footer("Exit codes: 0 ok, 1 usage error, 2 data error. Errors: 'error code=<code> detail=<text>' on stderr.");

  SynthOptions synth_o;
  SplitOptions split_o;
  TrainOptions train_o;
  CalibrateOptions calibrate_o;
  EvaluateOptions evaluate_o;
  DetectOptions detect_o;
  CollectOptions collect_o;
  LabelOptions label_o;
  BaselineOptions baseline_o;
  add_synth(app, synth_o);
  add_split(app, split_o);
  add_train(app, train_o);
  add_calibrate(app, calibrate_o);
  add_evaluate(app, evaluate_o);
  add_detect(app, detect_o);
  add_collect(app, collect_o);
  add_label(app, label_o);
  add_baseline(app, baseline_o);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error code=usage detail=" << one_line(e.what()) << '\n';
    return kExitUsage;
  }

  Context ctx{out, err};
  try {
    const auto* cmd = app.get_subcommands().front();
    const std::string name = cmd->get_name();
    if (name == "synth") return run_synth(ctx, synth_o);
    if (name == "split") return run_split(ctx, split_o);
    if (name == "train") return run_train(ctx, train_o);
    if (name == "calibrate") return run_calibrate(ctx, calibrate_o);
    if (name == "evaluate") return run_evaluate(ctx, evaluate_o);
    if (name == "detect") return run_detect(ctx, detect_o);
    if (name == "collect") return run_collect(ctx, collect_o);
    if (name == "label") return run_label(ctx, label_o);
    if (name == "baseline") return run_baseline(ctx, baseline_o);
    throw_usage_error("unknown-command", name);
  } catch (const Error& e) {
    err << "error code=" << e.code() << " detail=" << one_line(e.detail()) << '\n';
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    err << "error code=internal detail=" << one_line(e.what()) << '\n';
    return kExitData;
  }
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace iotnat::cli
