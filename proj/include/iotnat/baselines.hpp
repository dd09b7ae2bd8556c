#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "iotnat/flowdata.hpp"
#include "iotnat/ingest.hpp"

namespace iotnat::baselines {

using ingest::DnsEvent;

// DNS IP-ID observations of one device towards one resolver.
struct IpIdTrack {
  Ipv4 resolver_ip;
  std::vector<std::int64_t> timestamps_ms;
  std::vector<std::uint16_t> raw_ids;
  std::vector<std::int64_t> unwrapped_ids;  // non-decreasing
};

// Adds 65536 at every point the 16-bit counter goes backwards.
IpIdTrack unwrap_ipid(std::span<const DnsEvent> events);

// Successive differences of the unwrapped ids.
// Throws Error(data, "insufficient-data") for < 2 observations.
std::map<std::int64_t, std::size_t> increment_distribution(const IpIdTrack& track);

// Theil-Sen line through (x, y).
struct TheilSenFit {
  double slope = 0.0;
  double intercept = 0.0;
  double residual_scale = 0.0;  // median |y - fit|
};

// Median of pairwise slopes over pairs with distinct x. nullopt if every x is
// equal.
std::optional<TheilSenFit> theil_sen(std::span<const double> x, std::span<const double> y);

struct SlopeModel {
  DeviceModelId model;
  double slope_per_request = 0.0;
  std::optional<double> slope_per_second;  // undefined when all timestamps coincide
  double residual_scale = 0.0;
  std::map<std::int64_t, std::size_t> increment_histogram;
};

// Throws Error(data, "insufficient-data") for < 3 observations.
SlopeModel fit_slope(const IpIdTrack& track);

struct SlopeMatch {
  std::optional<DeviceModelId> model;
  std::string reason;  // "match", "no-candidate", "ambiguous"
  double test_slope = 0.0;
};

inline constexpr double kDefaultSlopeTolerance = 0.2;

// Closest trained slope within the relative tolerance; an exact tie in
// relative distance yields no match.
SlopeMatch slope_match(const IpIdTrack& test_track, std::span<const SlopeModel> trained,
                       double rel_tolerance = kDefaultSlopeTolerance);

// Groups events into per (source ip, resolver) tracks in time order.
std::map<std::pair<Ipv4, Ipv4>, std::vector<DnsEvent>> group_tracks(
    std::span<const DnsEvent> events);

// Model-level slope: Theil-Sen per labeled track, then the median of
// the per-track slopes.
std::vector<SlopeModel> train_slope_models(std::span<const DnsEvent> training);

struct DomainProfile {
  DeviceModelId model;
  std::set<std::string> server_names;
  bool covered = false;  // at least kMinProfileNames names
};

inline constexpr std::size_t kMinProfileNames = 3;
inline constexpr std::int64_t kDefaultWindowSeconds = 600;

std::vector<DomainProfile> build_domain_profiles(std::span<const DnsEvent> training);

struct WindowDetection {
  std::int64_t window_start_ms = 0;
  std::vector<DeviceModelId> models;  // every covered profile that fired
};

// Tumbling windows aligned to the first event. A covered profile fires when
// at least `min_distinct` of its names appear in the window.
std::vector<WindowDetection> domain_detect(std::span<const DnsEvent> events,
                                           std::span<const DomainProfile> profiles,
                                           std::int64_t window_s = kDefaultWindowSeconds,
                                           std::size_t min_distinct = kMinProfileNames);

struct BaselineRates {
  DeviceModelId model;
  std::size_t positives = 0;
  std::size_t negatives = 0;
  std::optional<double> tpr;
  std::optional<double> fpr;
};

// Per-track slope matching on the test set; a track is one unit.
std::vector<BaselineRates> evaluate_ipid(std::span<const DnsEvent> training,
                                         std::span<const DnsEvent> test,
                                         double rel_tolerance = kDefaultSlopeTolerance);

// Per (source ip, window) detection; only covered profiles are evaluated.
std::vector<BaselineRates> evaluate_domain(std::span<const DnsEvent> training,
                                           std::span<const DnsEvent> test,
                                           std::int64_t window_s = kDefaultWindowSeconds,
                                           std::size_t min_distinct = kMinProfileNames);

}  // namespace iotnat::baselines
