#include "iotnat/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "iotnat/error.hpp"
#include "iotnat/rng.hpp"

namespace iotnat::synth {

namespace {

using nlohmann::json;

[[noreturn]] void invalid(const std::string& what) { throw_usage_error("invalid-scenario", what); }

template <typename K>
void check_weights(const std::map<K, double>& weights, const std::string& what) {
  if (weights.empty()) invalid(what + " is empty");
  double total = 0.0;
  for (const auto& [k, w] : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) invalid(what + " has a negative weight");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-6) invalid(what + " does not sum to 1");
}

template <typename K>
const K& draw(const std::map<K, double>& weights, Rng& rng) {
  const double u = rng.uniform01();
  double acc = 0.0;
  for (const auto& [k, w] : weights) {
    acc += w;
    if (u < acc) return k;
  }
  // Rounding left a sliver at the top; return the last positive entry.
  for (auto it = weights.rbegin(); it != weights.rend(); ++it)
    if (it->second > 0.0) return it->first;
  return weights.rbegin()->first;
}

template <typename K>
std::map<K, double> mix(const std::map<K, double>& own, const std::map<K, double>& other, double fraction) {
  std::map<K, double> out;
  for (const auto& [k, w] : own) out[k] += (1.0 - fraction) * w;
  for (const auto& [k, w] : other) out[k] += fraction * w;
  return out;
}

Ipv4 device_ip(std::size_t k) {
  return Ipv4{(192u << 24) | (168u << 16) | (static_cast<std::uint32_t>(1 + k / 250) << 8) |
              static_cast<std::uint32_t>(2 + k % 250)};
}

MacAddress device_mac(std::size_t k) { return MacAddress{0x020000000000ULL | (k & 0xffffffffULL)}; }

struct Device {
  std::size_t global_index;
  std::size_t spec_index;
};

std::vector<Device> devices_of(const std::vector<ModelTrafficSpec>& specs) {
  std::vector<Device> out;
  for (std::size_t s = 0; s < specs.size(); ++s)
    for (std::size_t d = 0; d < specs[s].devices; ++d) out.push_back({out.size(), s});
  return out;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

// ---- JSON ----

template <typename K>
json weights_to_json(const std::map<K, double>& m) {
  json j = json::object();
  for (const auto& [k, w] : m) {
    if constexpr (std::is_same_v<K, std::string>)
      j[k] = w;
    else
      j[std::to_string(unsigned(k))] = w;
  }
  return j;
}

template <typename K>
std::map<K, double> weights_from_json(const json& j, const std::string& what, unsigned max_key) {
  if (!j.is_object()) invalid(what + " must be an object");
  std::map<K, double> m;
  for (const auto& [key, value] : j.items()) {
    if (!value.is_number()) invalid(what + " weights must be numbers");
    if constexpr (std::is_same_v<K, std::string>) {
      m[key] = value.template get<double>();
    } else {
      unsigned long k = 0;
      try {
        std::size_t used = 0;
        k = std::stoul(key, &used);
        if (used != key.size()) throw std::invalid_argument(key);
      } catch (const std::exception&) {
        invalid(what + " key '" + key + "' is not an integer");
      }
      if (k > max_key) invalid(what + " key " + key + " out of range");
      m[static_cast<K>(k)] = value.template get<double>();
    }
  }
  return m;
}

json lognormal_to_json(const LogNormal& ln) { return {{"mu", ln.mu}, {"sigma", ln.sigma}}; }

LogNormal lognormal_from_json(const json& j, const LogNormal& fallback) {
  if (j.is_null()) return fallback;
  return {j.value("mu", fallback.mu), j.value("sigma", fallback.sigma)};
}

json spec_to_json(const ModelTrafficSpec& s) {
  return {{"label", s.label.str()},
          {"devices", s.devices},
          {"ports", weights_to_json(s.port_weights)},
          {"protocols", weights_to_json(s.protocol_weights)},
          {"l7", weights_to_json(s.l7_weights)},
          {"src_tos", weights_to_json(s.src_tos_weights)},
          {"dst_tos", weights_to_json(s.dst_tos_weights)},
          {"in_bytes", lognormal_to_json(s.in_bytes)},
          {"out_bytes", lognormal_to_json(s.out_bytes)},
          {"duration_ms", lognormal_to_json(s.duration_ms)},
          {"mean_interarrival_s", s.mean_interarrival_s},
          {"ipid_slope", s.ipid_slope},
          {"ipid_noise", s.ipid_noise},
          {"qnames", s.qnames},
          {"dns_period_s", s.dns_period_s}};
}

ModelTrafficSpec spec_from_json(const json& j) {
  if (!j.is_object()) invalid("model entry must be an object");
  ModelTrafficSpec s;
  try {
    s.label = Label::parse(j.at("label").get<std::string>());
  } catch (const Error& e) {
    invalid("bad label: " + e.detail());
  } catch (const json::exception&) {
    invalid("model entry needs a string 'label'");
  }
  try {
    s.devices = j.value("devices", std::size_t{1});
    s.port_weights = weights_from_json<std::uint16_t>(j.value("ports", json::object()), "ports", 65535);
    s.protocol_weights = weights_from_json<std::uint8_t>(j.value("protocols", json::object()), "protocols", 255);
    s.l7_weights = weights_from_json<std::string>(j.value("l7", json::object()), "l7", 0);
    if (j.contains("src_tos")) s.src_tos_weights = weights_from_json<std::uint8_t>(j["src_tos"], "src_tos", 255);
    if (j.contains("dst_tos")) s.dst_tos_weights = weights_from_json<std::uint8_t>(j["dst_tos"], "dst_tos", 255);
    s.in_bytes = lognormal_from_json(j.value("in_bytes", json()), s.in_bytes);
    s.out_bytes = lognormal_from_json(j.value("out_bytes", json()), s.out_bytes);
    s.duration_ms = lognormal_from_json(j.value("duration_ms", json()), s.duration_ms);
    s.mean_interarrival_s = j.value("mean_interarrival_s", s.mean_interarrival_s);
    s.ipid_slope = j.value("ipid_slope", s.ipid_slope);
    s.ipid_noise = j.value("ipid_noise", s.ipid_noise);
    s.qnames = j.value("qnames", std::vector<std::string>{});
    s.dns_period_s = j.value("dns_period_s", s.dns_period_s);
  } catch (const json::exception& e) {
    invalid(std::string("type error: ") + e.what());
  }
  return s;
}

ScenarioSpec scenario_from(const json& j) {
  if (!j.is_object()) invalid("scenario must be an object");
  ScenarioSpec sc;
  try {
    sc.name = j.at("name").get<std::string>();
    sc.seed = j.value("seed", sc.seed);
    sc.flows_per_device = j.value("flows_per_device", sc.flows_per_device);
    sc.dns_events_per_device = j.value("dns_events_per_device", sc.dns_events_per_device);
    sc.start_ms = j.value("start_ms", sc.start_ms);
    for (const auto& m : j.at("models")) sc.specs.push_back(spec_from_json(m));
    for (const auto& o : j.value("overlaps", json::array())) {
      sc.overlaps.push_back({DeviceModelId::parse(o.at("source").get<std::string>()),
                             DeviceModelId::parse(o.at("target").get<std::string>()),
                             o.at("fraction").get<double>()});
    }
  } catch (const json::exception& e) {
    invalid(std::string("malformed scenario: ") + e.what());
  } catch (const Error& e) {
    invalid(e.what());
  }
  sc.validate();
  return sc;
}

// ---- presets ----

struct PresetModel {
  const char* id;
  const char* make_tag;
};

constexpr PresetModel kPresetModels[] = {
    {"webcam.D_Link.DCS_933L", "dlink"},       {"webcam.Sricam.SP017", "sricam"},
    {"webcam.Amcrest.IPM_723S", "amcrest"},    {"webcam.Edimax.IC_3116W", "edimax"},
    {"webcam.Amcrest.IPM_HX1B", "amcresthx"},  {"socket.TP_Link.HS110", "tplink"},
    {"socket.Edimax.SP_2101W", "edimaxplug"},  {"bulb.TP_Link.LB130", "tplinkbulb"},
    {"speaker.Amazon.Echo_Dot", "amazon"},     {"hub.Philips.Hue_Bridge", "philips"},
    {"webcam.Xiaomi.MJSXJ02CM", "xiaomi"},     {"plug.Meross.MSS110", "meross"},
    {"doorbell.Ring.Doorbell_2", "ring"},
};

constexpr double kPresetSlopes[] = {3, 5, 7, 9.5, 12, 15.5, 20, 26, 33, 42, 54, 70, 90};

ModelTrafficSpec preset_iot(std::size_t i) {
  const auto& pm = kPresetModels[i];
  const std::string tag = pm.make_tag;
  ModelTrafficSpec s;
  s.label = Label::of(DeviceModelId::parse(pm.id));
  // One dominant value per categorical field. Isolation trees cannot split a
  // constant column, and an unseen category follows the 0 branch, which is
  // only small when the column is mostly 1.
  const auto base_port = static_cast<std::uint16_t>(20000 + 16 * i);
  s.port_weights = {{base_port, 0.94}, {static_cast<std::uint16_t>(base_port + 1), 0.04},
                    {static_cast<std::uint16_t>(base_port + 2), 0.02}};
  const std::uint8_t main_proto = i % 3 == 0 ? 17 : 6;
  s.protocol_weights = {{main_proto, 0.95}, {static_cast<std::uint8_t>(main_proto == 6 ? 17 : 6), 0.05}};
  s.l7_weights = {{"SSL." + tag, 0.95}, {"NTP." + tag, 0.05}};
  s.src_tos_weights = {{0, 0.97}, {static_cast<std::uint8_t>(4 * (i + 1)), 0.03}};
  s.dst_tos_weights = {{0, 1.0}};
  s.in_bytes = {4.5 + 0.7 * double(i), 0.15};
  s.out_bytes = {5.0 + 0.7 * double((i * 5) % 13), 0.15};
  s.duration_ms = {6.0 + 0.5 * double((i * 7) % 13), 0.2};
  s.mean_interarrival_s = 60.0 + 20.0 * double(i);
  s.ipid_slope = kPresetSlopes[i];
  s.ipid_noise = 2;
  s.qnames = {"api." + tag + ".example", "ntp." + tag + ".example", "cloud." + tag + ".example",
              "update." + tag + ".example"};
  s.dns_period_s = 30.0;
  return s;
}

ModelTrafficSpec preset_non_iot() {
  ModelTrafficSpec s;
  s.label = Label::non_iot();
  s.devices = 3;
  s.port_weights = {{443, 0.6}, {80, 0.2}, {53, 0.15}, {123, 0.05}};
  s.protocol_weights = {{6, 0.8}, {17, 0.2}};
  s.l7_weights = {{"SSL", 0.4}, {"HTTP", 0.15}, {"DNS", 0.15}, {"Google", 0.2}, {"YouTube", 0.1}};
  s.src_tos_weights = {{0, 1.0}};
  s.dst_tos_weights = {{0, 0.8}, {40, 0.2}};
  s.in_bytes = {7.0, 1.5};
  s.out_bytes = {8.0, 1.8};
  s.duration_ms = {8.0, 1.5};
  s.mean_interarrival_s = 20.0;
  s.ipid_slope = 1.0;
  s.ipid_noise = 0;
  s.qnames = {"www.google.com", "www.youtube.com", "outlook.office.com", "www.wikipedia.org"};
  s.dns_period_s = 15.0;
  return s;
}

}  // namespace

void ScenarioSpec::validate() const {
  if (name.empty()) invalid("name is empty");
  if (specs.empty()) invalid("no models");
  std::set<std::string> labels;
  for (const auto& s : specs) {
    const auto what = s.label.str().empty() ? std::string("<unlabeled>") : s.label.str();
    if (s.label.kind() == Label::Kind::unlabeled) invalid("model entry without label");
    if (s.label.is_model() && !labels.insert(what).second) invalid("duplicate model " + what);
    check_weights(s.port_weights, what + " ports");
    check_weights(s.protocol_weights, what + " protocols");
    check_weights(s.l7_weights, what + " l7");
    check_weights(s.src_tos_weights, what + " src_tos");
    check_weights(s.dst_tos_weights, what + " dst_tos");
    for (const auto* ln : {&s.in_bytes, &s.out_bytes, &s.duration_ms})
      if (!(ln->sigma > 0.0) || !std::isfinite(ln->mu)) invalid(what + " log-normal needs sigma > 0");
    if (!(s.mean_interarrival_s > 0.0)) invalid(what + " mean_interarrival_s must be > 0");
    if (!(s.dns_period_s > 0.0)) invalid(what + " dns_period_s must be > 0");
    if (!(s.ipid_slope > 0.0)) invalid(what + " ipid_slope must be > 0");
    if (s.ipid_noise < 0) invalid(what + " ipid_noise must be >= 0");
    if (s.devices == 0) invalid(what + " needs at least one device");
    for (const auto& q : s.qnames)
      if (q.empty()) invalid(what + " has an empty qname");
  }
  for (const auto& o : overlaps) {
    if (!(o.fraction >= 0.0 && o.fraction <= 1.0)) invalid("overlap fraction outside [0, 1]");
    if (!labels.count(o.source.str()) || !labels.count(o.target.str()))
      invalid("overlap references unknown model");
    if (o.source == o.target) invalid("overlap of a model with itself");
  }
}

std::vector<std::string> preset_names() { return {"separable-13", "overlap-pair"}; }

DeviceModelId overlap_target_model() { return DeviceModelId::parse("webcam.Sricam.SP017"); }
DeviceModelId overlap_source_model() { return DeviceModelId::parse("webcam.Amcrest.IPM_723S"); }

ScenarioSpec separable_13(std::uint64_t seed, std::size_t flows_per_device) {
  ScenarioSpec sc;
  sc.name = "separable-13";
  sc.seed = seed;
  sc.flows_per_device = flows_per_device;
  for (std::size_t i = 0; i < std::size(kPresetModels); ++i) sc.specs.push_back(preset_iot(i));
  // The two webcams of the overlap pair share one numeric profile, so only
  // their categorical vocabularies tell them apart.
  sc.specs[1].in_bytes = sc.specs[2].in_bytes;
  sc.specs[1].out_bytes = sc.specs[2].out_bytes;
  sc.specs[1].duration_ms = sc.specs[2].duration_ms;
  sc.specs[2].devices = 3;
  sc.specs.push_back(preset_non_iot());
  return sc;
}

ScenarioSpec overlap_pair(std::uint64_t seed, std::size_t flows_per_device, double fraction) {
  ScenarioSpec sc = separable_13(seed, flows_per_device);
  sc.name = "overlap-pair";
  sc.overlaps.push_back({overlap_source_model(), overlap_target_model(), fraction});
  return sc;
}

ScenarioSpec preset(const std::string& name) {
  if (name == "separable-13") return separable_13();
  if (name == "overlap-pair") return overlap_pair();
  throw_usage_error("unknown-scenario", name);
}

ScenarioSpec scenario_from_json(const std::string& text) {
  const json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) invalid("not valid JSON");
  if (j.is_array()) {
    if (j.empty()) invalid("empty scenario list");
    std::set<std::string> names;
    for (const auto& item : j)
      if (item.is_object() && !names.insert(item.value("name", std::string())).second)
        invalid("duplicate scenario name " + item.value("name", std::string()));
    return scenario_from(j.front());
  }
  return scenario_from(j);
}

std::string scenario_to_json(const ScenarioSpec& scenario) {
  json models = json::array();
  for (const auto& s : scenario.specs) models.push_back(spec_to_json(s));
  json overlaps = json::array();
  for (const auto& o : scenario.overlaps)
    overlaps.push_back({{"source", o.source.str()}, {"target", o.target.str()}, {"fraction", o.fraction}});
  json j = {{"name", scenario.name},
            {"seed", scenario.seed},
            {"flows_per_device", scenario.flows_per_device},
            {"dns_events_per_device", scenario.dns_events_per_device},
            {"start_ms", scenario.start_ms},
            {"models", models},
            {"overlaps", overlaps}};
  return j.dump(2);
}

ScenarioSpec load_scenario(const std::string& name_or_path) {
  const auto names = preset_names();
  if (std::find(names.begin(), names.end(), name_or_path) != names.end()) return preset(name_or_path);
  std::ifstream in(name_or_path);
  if (!in) throw_usage_error("unknown-scenario", name_or_path);
  std::stringstream buf;
  buf << in.rdbuf();
  return scenario_from_json(buf.str());
}

std::vector<ModelTrafficSpec> effective_specs(const ScenarioSpec& scenario) {
  std::vector<ModelTrafficSpec> specs = scenario.specs;
  auto find = [&](const DeviceModelId& id) -> ModelTrafficSpec& {
    for (auto& s : specs)
      if (s.label.is(id)) return s;
    invalid("overlap references unknown model " + id.str());
  };
  for (const auto& o : scenario.overlaps) {
    const ModelTrafficSpec source = find(o.source);
    ModelTrafficSpec& target = find(o.target);
    target.port_weights = mix(target.port_weights, source.port_weights, o.fraction);
    target.protocol_weights = mix(target.protocol_weights, source.protocol_weights, o.fraction);
    target.l7_weights = mix(target.l7_weights, source.l7_weights, o.fraction);
  }
  return specs;
}

FlowDataset generate_flows(const ScenarioSpec& scenario) {
  scenario.validate();
  const auto specs = effective_specs(scenario);
  FlowDataset out;
  for (const auto& dev : devices_of(specs)) {
    const auto& s = specs[dev.spec_index];
    Rng rng(derive_seed(scenario.seed, dev.global_index));
    const Ipv4 ip = device_ip(dev.global_index);
    const MacAddress mac = device_mac(dev.global_index);
    double t_ms = double(scenario.start_ms);
    for (std::size_t n = 0; n < scenario.flows_per_device; ++n) {
      t_ms += rng.exponential(s.mean_interarrival_s) * 1000.0;
      LabeledFlow lf;
      lf.label = s.label;
      lf.source_mac = mac;
      FlowRecord& f = lf.flow;
      f.key.ingress_interface = 1;
      f.key.src_ip = ip;
      f.key.dst_ip = Ipv4{(52u << 24) | (static_cast<std::uint32_t>(dev.spec_index & 0xff) << 16) |
                          static_cast<std::uint32_t>(rng.below(4096))};
      f.key.ip_protocol = draw(s.protocol_weights, rng);
      f.key.src_port = static_cast<std::uint16_t>(rng.between(32768, 60999));
      f.key.dst_port = draw(s.port_weights, rng);
      f.src_tos = draw(s.src_tos_weights, rng);
      f.dst_tos = draw(s.dst_tos_weights, rng);
      f.key.tos = f.src_tos;
      f.l7_proto_name = draw(s.l7_weights, rng);
      f.in_bytes = static_cast<std::uint64_t>(std::max(1.0, std::round(rng.lognormal(s.in_bytes.mu, s.in_bytes.sigma))));
      f.out_bytes =
          static_cast<std::uint64_t>(std::max(1.0, std::round(rng.lognormal(s.out_bytes.mu, s.out_bytes.sigma))));
      f.flow_start_ms = static_cast<std::int64_t>(std::llround(t_ms));
      f.flow_end_ms = f.flow_start_ms +
                      static_cast<std::int64_t>(std::llround(rng.lognormal(s.duration_ms.mu, s.duration_ms.sigma)));
      out.flows.push_back(std::move(lf));
    }
  }
  std::stable_sort(out.flows.begin(), out.flows.end(), [](const LabeledFlow& a, const LabeledFlow& b) {
    return a.flow.flow_start_ms < b.flow.flow_start_ms;
  });
  return out;
}

DeviceInventory scenario_inventory(const ScenarioSpec& scenario) {
  std::vector<InventoryEntry> entries;
  for (const auto& dev : devices_of(scenario.specs))
    entries.push_back({device_mac(dev.global_index), device_ip(dev.global_index), scenario.specs[dev.spec_index].label});
  return DeviceInventory(std::move(entries));
}

std::vector<ingest::DnsEvent> generate_dns(const ScenarioSpec& scenario) {
  scenario.validate();
  const Ipv4 resolver = Ipv4::parse("8.8.8.8");
  std::vector<ingest::DnsEvent> out;
  for (const auto& dev : devices_of(scenario.specs)) {
    const auto& s = scenario.specs[dev.spec_index];
    if (s.qnames.empty()) continue;
    // Separate stream from the flow generator so both can change independently.
    Rng rng(derive_seed(scenario.seed ^ 0xd1b54a32d192ed03ULL, dev.global_index));
    const auto base = static_cast<std::int64_t>(rng.below(65536));
    const double period_ms = s.dns_period_s * 1000.0;
    std::int64_t previous = 0;
    for (std::size_t i = 0; i < scenario.dns_events_per_device; ++i) {
      const double jitter = rng.uniform(-0.1, 0.1) * period_ms;
      std::int64_t unwrapped =
          base + std::llround(s.ipid_slope * double(i)) + rng.between(-s.ipid_noise, s.ipid_noise);
      // IP-ID counters never run backwards.
      if (i > 0) unwrapped = std::max(unwrapped, previous);
      unwrapped = std::max<std::int64_t>(unwrapped, 0);
      previous = unwrapped;
      ingest::DnsEvent ev;
      ev.timestamp_ms = scenario.start_ms + std::llround(double(i) * period_ms + jitter);
      ev.observed_src_ip = device_ip(dev.global_index);
      ev.ip_id = static_cast<std::uint16_t>(unwrapped % 65536);
      ev.resolver_ip = resolver;
      ev.qname = lower(s.qnames[rng.below(s.qnames.size())]);
      ev.label = s.label;
      out.push_back(std::move(ev));
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const ingest::DnsEvent& a, const ingest::DnsEvent& b) {
    return a.timestamp_ms < b.timestamp_ms;
  });
  return out;
}

}  // namespace iotnat::synth
