#include "iotnat/baselines.hpp"

#include <algorithm>
#include <cmath>

#include "iotnat/error.hpp"

namespace iotnat::baselines {

namespace {

double median_inplace(std::vector<double>& v) {
  const auto n = v.size();
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(n / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (n % 2 == 1) return *mid;
  const double upper = *mid;
  const double lower = *std::max_element(v.begin(), mid);
  return (lower + upper) / 2.0;
}

std::vector<DnsEvent> time_ordered(std::span<const DnsEvent> events) {
  std::vector<DnsEvent> sorted(events.begin(), events.end());
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const DnsEvent& a, const DnsEvent& b) { return a.timestamp_ms < b.timestamp_ms; });
  return sorted;
}

std::int64_t window_index(std::int64_t t, std::int64_t t0, std::int64_t window_ms) { return (t - t0) / window_ms; }

}  // namespace

IpIdTrack unwrap_ipid(std::span<const DnsEvent> events) {
  IpIdTrack track;
  if (!events.empty()) track.resolver_ip = events.front().resolver_ip;
  std::int64_t offset = 0;
  for (const auto& ev : events) {
    std::int64_t value = ev.ip_id + offset;
    while (!track.unwrapped_ids.empty() && value < track.unwrapped_ids.back()) {
      offset += 65536;
      value += 65536;
    }
    track.timestamps_ms.push_back(ev.timestamp_ms);
    track.raw_ids.push_back(ev.ip_id);
    track.unwrapped_ids.push_back(value);
  }
  return track;
}

std::map<std::int64_t, std::size_t> increment_distribution(const IpIdTrack& track) {
  if (track.unwrapped_ids.size() < 2)
    throw_data_error("insufficient-data", "increment distribution needs at least two observations");
  std::map<std::int64_t, std::size_t> histogram;
  for (std::size_t i = 1; i < track.unwrapped_ids.size(); ++i)
    ++histogram[track.unwrapped_ids[i] - track.unwrapped_ids[i - 1]];
  return histogram;
}

std::optional<TheilSenFit> theil_sen(std::span<const double> x, std::span<const double> y) {
  std::vector<double> slopes;
  slopes.reserve(x.size() * (x.size() - (x.empty() ? 0 : 1)) / 2);
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = i + 1; j < x.size(); ++j)
      if (x[j] != x[i]) slopes.push_back((y[j] - y[i]) / (x[j] - x[i]));
  if (slopes.empty()) return std::nullopt;

  TheilSenFit fit;
  fit.slope = median_inplace(slopes);
  std::vector<double> offsets(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) offsets[i] = y[i] - fit.slope * x[i];
  fit.intercept = median_inplace(offsets);
  std::vector<double> residuals(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) residuals[i] = std::abs(y[i] - (fit.intercept + fit.slope * x[i]));
  fit.residual_scale = median_inplace(residuals);
  return fit;
}

SlopeModel fit_slope(const IpIdTrack& track) {
  const auto n = track.unwrapped_ids.size();
  if (n < 3) throw_data_error("insufficient-data", "slope fit needs at least three observations");
  std::vector<double> index(n), ids(n), seconds(n);
  for (std::size_t i = 0; i < n; ++i) {
    index[i] = double(i);
    ids[i] = double(track.unwrapped_ids[i]);
    seconds[i] = double(track.timestamps_ms[i] - track.timestamps_ms.front()) / 1000.0;
  }
  SlopeModel model;
  const auto per_request = theil_sen(index, ids);
  model.slope_per_request = per_request->slope;
  model.residual_scale = per_request->residual_scale;
  if (auto per_second = theil_sen(seconds, ids)) model.slope_per_second = per_second->slope;
  model.increment_histogram = increment_distribution(track);
  return model;
}

SlopeMatch slope_match(const IpIdTrack& test_track, std::span<const SlopeModel> trained, double rel_tolerance) {
  SlopeMatch result;
  result.test_slope = fit_slope(test_track).slope_per_request;
  std::optional<double> best;
  std::size_t best_count = 0;
  const SlopeModel* best_model = nullptr;
  for (const auto& m : trained) {
    if (m.slope_per_request == 0.0) continue;
    const double dist = std::abs(result.test_slope - m.slope_per_request) / std::abs(m.slope_per_request);
    if (dist > rel_tolerance) continue;
    if (!best || dist < *best) {
      best = dist;
      best_count = 1;
      best_model = &m;
    } else if (dist == *best && m.model != best_model->model) {
      ++best_count;
    }
  }
  if (!best) {
    result.reason = "no-candidate";
  } else if (best_count > 1) {
    result.reason = "ambiguous";
  } else {
    result.model = best_model->model;
    result.reason = "match";
  }
  return result;
}

std::map<std::pair<Ipv4, Ipv4>, std::vector<DnsEvent>> group_tracks(std::span<const DnsEvent> events) {
  std::map<std::pair<Ipv4, Ipv4>, std::vector<DnsEvent>> tracks;
  for (const auto& ev : time_ordered(events)) tracks[{ev.observed_src_ip, ev.resolver_ip}].push_back(ev);
  return tracks;
}

std::vector<SlopeModel> train_slope_models(std::span<const DnsEvent> training) {
  struct Acc {
    std::vector<double> per_request, per_second, residuals;
    std::map<std::int64_t, std::size_t> histogram;
  };
  std::vector<DeviceModelId> order;
  std::map<DeviceModelId, Acc> acc;
  for (const auto& [key, events] : group_tracks(training)) {
    if (events.size() < 3 || !events.front().label.is_model()) continue;
    const auto& model = events.front().label.model();
    const auto fit = fit_slope(unwrap_ipid(events));
    auto [it, inserted] = acc.try_emplace(model);
    if (inserted) order.push_back(model);
    it->second.per_request.push_back(fit.slope_per_request);
    if (fit.slope_per_second) it->second.per_second.push_back(*fit.slope_per_second);
    it->second.residuals.push_back(fit.residual_scale);
    for (const auto& [inc, count] : fit.increment_histogram) it->second.histogram[inc] += count;
  }
  std::vector<SlopeModel> models;
  for (const auto& id : order) {
    auto& a = acc[id];
    SlopeModel m;
    m.model = id;
    m.slope_per_request = median_inplace(a.per_request);
    if (!a.per_second.empty()) m.slope_per_second = median_inplace(a.per_second);
    m.residual_scale = median_inplace(a.residuals);
    m.increment_histogram = std::move(a.histogram);
    models.push_back(std::move(m));
  }
  return models;
}

std::vector<DomainProfile> build_domain_profiles(std::span<const DnsEvent> training) {
  std::vector<DomainProfile> profiles;
  for (const auto& ev : training) {
    if (!ev.label.is_model()) continue;
    auto it = std::find_if(profiles.begin(), profiles.end(),
                           [&](const DomainProfile& p) { return p.model == ev.label.model(); });
    if (it == profiles.end()) {
      profiles.push_back({ev.label.model(), {}, false});
      it = std::prev(profiles.end());
    }
    it->server_names.insert(ingest::normalize_qname(ev.qname));
  }
  for (auto& p : profiles) p.covered = p.server_names.size() >= kMinProfileNames;
  return profiles;
}

std::vector<WindowDetection> domain_detect(std::span<const DnsEvent> events, std::span<const DomainProfile> profiles,
                                           std::int64_t window_s, std::size_t min_distinct) {
  if (window_s <= 0) throw_usage_error("invalid-window", std::to_string(window_s));
  const auto sorted = time_ordered(events);
  std::vector<WindowDetection> out;
  if (sorted.empty()) return out;
  const std::int64_t window_ms = window_s * 1000;
  const std::int64_t t0 = sorted.front().timestamp_ms;

  for (std::size_t i = 0; i < sorted.size();) {
    const auto w = window_index(sorted[i].timestamp_ms, t0, window_ms);
    std::set<std::string> names;
    for (; i < sorted.size() && window_index(sorted[i].timestamp_ms, t0, window_ms) == w; ++i)
      names.insert(sorted[i].qname);
    WindowDetection det;
    det.window_start_ms = t0 + w * window_ms;
    for (const auto& p : profiles) {
      if (!p.covered) continue;
      std::size_t hits = 0;
      for (const auto& name : names) hits += p.server_names.count(name);
      if (hits >= min_distinct) det.models.push_back(p.model);
    }
    out.push_back(std::move(det));
  }
  return out;
}

namespace {

BaselineRates finish(const DeviceModelId& model, std::size_t pos, std::size_t tp, std::size_t neg, std::size_t fp) {
  BaselineRates r;
  r.model = model;
  r.positives = pos;
  r.negatives = neg;
  if (pos) r.tpr = double(tp) / double(pos);
  if (neg) r.fpr = double(fp) / double(neg);
  return r;
}

}  // namespace

std::vector<BaselineRates> evaluate_ipid(std::span<const DnsEvent> training, std::span<const DnsEvent> test,
                                         double rel_tolerance) {
  const auto models = train_slope_models(training);
  struct Unit {
    Label truth;
    std::optional<DeviceModelId> predicted;
  };
  std::vector<Unit> units;
  for (const auto& [key, events] : group_tracks(test)) {
    if (events.size() < 3 || events.front().label.kind() == Label::Kind::unlabeled) continue;
    units.push_back({events.front().label, slope_match(unwrap_ipid(events), models, rel_tolerance).model});
  }
  std::vector<BaselineRates> rates;
  for (const auto& m : models) {
    std::size_t pos = 0, tp = 0, neg = 0, fp = 0;
    for (const auto& u : units) {
      const bool hit = u.predicted && *u.predicted == m.model;
      if (u.truth.is(m.model)) {
        ++pos;
        tp += hit;
      } else {
        ++neg;
        fp += hit;
      }
    }
    rates.push_back(finish(m.model, pos, tp, neg, fp));
  }
  return rates;
}

std::vector<BaselineRates> evaluate_domain(std::span<const DnsEvent> training, std::span<const DnsEvent> test,
                                           std::int64_t window_s, std::size_t min_distinct) {
  const auto profiles = build_domain_profiles(training);
  struct Unit {
    std::set<DeviceModelId> truth;
    std::vector<DeviceModelId> detected;
  };
  std::vector<Unit> units;

  std::map<Ipv4, std::vector<DnsEvent>> per_source;
  for (const auto& ev : time_ordered(test)) per_source[ev.observed_src_ip].push_back(ev);
  const std::int64_t window_ms = window_s * 1000;
  for (const auto& [src, events] : per_source) {
    const auto detections = domain_detect(events, profiles, window_s, min_distinct);
    const std::int64_t t0 = events.front().timestamp_ms;
    std::map<std::int64_t, std::set<DeviceModelId>> truth;
    for (const auto& ev : events) {
      auto& labels = truth[t0 + window_index(ev.timestamp_ms, t0, window_ms) * window_ms];
      if (ev.label.is_model()) labels.insert(ev.label.model());
    }
    for (const auto& d : detections) units.push_back({truth[d.window_start_ms], d.models});
  }

  std::vector<BaselineRates> rates;
  for (const auto& p : profiles) {
    if (!p.covered) continue;
    std::size_t pos = 0, tp = 0, neg = 0, fp = 0;
    for (const auto& u : units) {
      const bool hit = std::find(u.detected.begin(), u.detected.end(), p.model) != u.detected.end();
      if (u.truth.count(p.model)) {
        ++pos;
        tp += hit;
      } else {
        ++neg;
        fp += hit;
      }
    }
    rates.push_back(finish(p.model, pos, tp, neg, fp));
  }
  return rates;
}

}  // namespace iotnat::baselines
