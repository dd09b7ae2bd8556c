#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "iotnat/flowdata.hpp"
#include "iotnat/ingest.hpp"

namespace iotnat::synth {

struct LogNormal {
  double mu = 0.0;
  double sigma = 1.0;
};

// Traffic profile of one device model (or of non-IoT hosts).
struct ModelTrafficSpec {
  Label label;
  std::map<std::uint16_t, double> port_weights;
  std::map<std::uint8_t, double> protocol_weights;
  std::map<std::string, double> l7_weights;
  std::map<std::uint8_t, double> src_tos_weights{{0, 1.0}};
  std::map<std::uint8_t, double> dst_tos_weights{{0, 1.0}};
  LogNormal in_bytes{6.0, 0.5};
  LogNormal out_bytes{6.0, 0.5};
  LogNormal duration_ms{8.0, 0.5};
  double mean_interarrival_s = 60.0;
  std::size_t devices = 1;

  // DNS behaviour for the IP-ID and domain baselines.
  double ipid_slope = 1.0;      // unwrapped IP-ID increase per request
  std::int64_t ipid_noise = 0;  // uniform integer noise in [-noise, noise]
  std::vector<std::string> qnames;
  double dns_period_s = 30.0;   // requests every period +- 10% jitter
};

// Borrowing of categorical mass: `target` keeps (1 - fraction) of its own
// port/protocol/L7 weights and takes `fraction` from `source`, so the two
// share exactly `fraction` of that mass.
struct Overlap {
  DeviceModelId source;
  DeviceModelId target;
  double fraction = 0.0;
};

struct ScenarioSpec {
  std::string name;
  std::vector<ModelTrafficSpec> specs;
  std::size_t flows_per_device = 2000;
  std::size_t dns_events_per_device = 200;
  std::uint64_t seed = 1;
  std::int64_t start_ms = 1'600'000'000'000;
  std::vector<Overlap> overlaps;

  // Throws Error(usage, "invalid-scenario") naming the problem.
  void validate() const;
};

// Built-in scenarios: "separable-13" and "overlap-pair".
std::vector<std::string> preset_names();
ScenarioSpec preset(const std::string& name);
ScenarioSpec separable_13(std::uint64_t seed = 1, std::size_t flows_per_device = 2000);
// separable-13 with webcam.Sricam.SP017 borrowing `fraction` of
// webcam.Amcrest.IPM_723S's categorical mass.
ScenarioSpec overlap_pair(std::uint64_t seed = 1, std::size_t flows_per_device = 2000,
                          double fraction = 0.8);

// The webcam pair used by overlap_pair (confused, confuser).
DeviceModelId overlap_target_model();
DeviceModelId overlap_source_model();

// Scenario JSON; see README for the schema.
ScenarioSpec scenario_from_json(const std::string& text);
std::string scenario_to_json(const ScenarioSpec& scenario);
// A preset name or a path to a JSON file.
ScenarioSpec load_scenario(const std::string& name_or_path);

// Weight maps after applying overlaps.
std::vector<ModelTrafficSpec> effective_specs(const ScenarioSpec& scenario);

// Per device: exponential inter-arrivals, features drawn from its ModelTrafficSpec.
// Output is merged across devices and ordered by flow start.
FlowDataset generate_flows(const ScenarioSpec& scenario);
// Devices get 192.168.1.2 upward and locally administered MACs.
DeviceInventory scenario_inventory(const ScenarioSpec& scenario);
std::vector<ingest::DnsEvent> generate_dns(const ScenarioSpec& scenario);

}  // namespace iotnat::synth
