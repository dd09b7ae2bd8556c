#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "iotnat/preprocess.hpp"

namespace iotnat::iforest {

using preprocess::FeatureMatrix;

inline constexpr double kEulerGamma = 0.5772156649;

// Average unsuccessful-search path length in a binary search tree of n
// points: 2H(n-1) - 2(n-1)/n. H is the exact harmonic number (tabulated up
// to 4096, asymptotic series above). 0 for n <= 1.
double c_factor(std::size_t n) noexcept;

// ceil(log2(n)), 0 for n <= 1.
std::size_t height_limit_for(std::size_t subsample) noexcept;

// A tree stored as a preorder node list. Internal nodes send x[dim] < value
// to the left child (always the next node) and everything else to
// `right`.
class IsolationTree {
 public:
  struct Node {
    bool external = true;
    std::uint32_t dimension = 0;  // internal
    double split_value = 0.0;     // internal
    std::uint32_t right = 0;      // internal: index of right child
    std::uint32_t size = 0;       // external: training points that reached it

    bool operator==(const Node&) const = default;
  };

  IsolationTree() = default;
  // Validates the preorder layout. Throws Error(data, "invalid-tree").
  IsolationTree(std::vector<Node> nodes, std::size_t height_limit);

  const std::vector<Node>& nodes() const noexcept { return nodes_; }
  std::size_t height_limit() const noexcept { return height_limit_; }
  // Sum of external sizes.
  std::size_t sample_count() const noexcept;
  // Edges traversed to the external node plus c_factor(its size).
  double path_length(std::span<const double> x) const noexcept;

  bool operator==(const IsolationTree&) const = default;

 private:
  std::vector<Node> nodes_;
  std::size_t height_limit_ = 0;
};

struct ForestParams {
  std::size_t num_trees = 100;
  std::size_t subsample_size = 256;
  std::uint64_t seed = 0;
};

class IsolationForest {
 public:
  IsolationForest() = default;
  IsolationForest(std::vector<IsolationTree> trees, std::size_t subsample_size,
                  std::uint64_t seed, std::size_t dimension);

  const std::vector<IsolationTree>& trees() const noexcept { return trees_; }
  // Effective subsample size (already capped at the training size).
  std::size_t subsample_size() const noexcept { return subsample_size_; }
  std::uint64_t seed() const noexcept { return seed_; }
  std::size_t dimension() const noexcept { return dimension_; }

  double mean_path_length(std::span<const double> x) const noexcept;
  // s = 2^(-E[h(x)] / c(psi)) in (0, 1]; 0.5 when c(psi) == 0.
  double anomaly_score(std::span<const double> x) const noexcept;
  // g = 0.5 - s. Higher means more typical of the training class.
  double normality_score(std::span<const double> x) const noexcept {
    return 0.5 - anomaly_score(x);
  }

  bool operator==(const IsolationForest&) const = default;

 private:
  std::vector<IsolationTree> trees_;
  std::size_t subsample_size_ = 0;
  std::uint64_t seed_ = 0;
  std::size_t dimension_ = 0;
};

// Throws Error(data, "insufficient-data") for an empty matrix.
IsolationForest train_forest(const FeatureMatrix& rows, const ForestParams& params);

// Builds a single tree from the given sample rows with its own seed.
IsolationTree build_tree(const FeatureMatrix& rows, std::span<const std::size_t> sample,
                         std::uint64_t tree_seed, std::size_t height_limit);

// Score bundle for one flow.
struct ScoredFlow {
  const FlowRecord* flow = nullptr;
  double anomaly_s = 0.0;
  double normality_g = 0.0;  // always 0.5 - anomaly_s
};

ScoredFlow score_flow(const IsolationForest& forest, const preprocess::FeatureSchema& schema,
                      const FlowRecord& flow);

}  // namespace iotnat::iforest
