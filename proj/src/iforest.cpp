#include "iotnat/iforest.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <numeric>

#include "iotnat/error.hpp"
#include "iotnat/rng.hpp"

namespace iotnat::iforest {

namespace {

constexpr std::size_t kExactHarmonicLimit = 4096;
constexpr double kGammaFull = 0.57721566490153286061;

// H(i) for i <= kExactHarmonicLimit by direct summation.
const std::vector<double>& harmonic_table() {
  static const std::vector<double> table = [] {
    std::vector<double> h(kExactHarmonicLimit + 1, 0.0);
    for (std::size_t i = 1; i <= kExactHarmonicLimit; ++i) h[i] = h[i - 1] + 1.0 / static_cast<double>(i);
    return h;
  }();
  return table;
}

double harmonic(std::size_t i) {
  if (i <= kExactHarmonicLimit) return harmonic_table()[i];
  const double x = static_cast<double>(i);
  const double inv2 = 1.0 / (x * x);
  return std::log(x) + kGammaFull + 0.5 / x - inv2 / 12.0 + inv2 * inv2 / 120.0;
}

class TreeBuilder {
 public:
  TreeBuilder(const FeatureMatrix& rows, std::uint64_t seed, std::size_t height_limit)
      : rows_(rows), rng_(seed), height_limit_(height_limit), lo_(rows.cols), hi_(rows.cols) {}

  Rng& rng() { return rng_; }

  std::vector<IsolationTree::Node> build(std::vector<std::size_t> sample) {
    sample_ = std::move(sample);
    nodes_.clear();
    grow(0, sample_.size(), 0);
    return std::move(nodes_);
  }

 private:
  void leaf(std::size_t size) {
    IsolationTree::Node n;
    n.external = true;
    n.size = static_cast<std::uint32_t>(size);
    nodes_.push_back(n);
  }

  void grow(std::size_t begin, std::size_t end, std::size_t depth) {
    const std::size_t n = end - begin;
    if (n <= 1 || depth >= height_limit_) return leaf(n);

    const std::size_t d = rows_.cols;
    std::fill(lo_.begin(), lo_.end(), std::numeric_limits<double>::infinity());
    std::fill(hi_.begin(), hi_.end(), -std::numeric_limits<double>::infinity());
    for (std::size_t k = begin; k < end; ++k) {
      const auto x = rows_.row(sample_[k]);
      for (std::size_t j = 0; j < d; ++j) {
        lo_[j] = std::min(lo_[j], x[j]);
        hi_[j] = std::max(hi_[j], x[j]);
      }
    }
    splittable_.clear();
    for (std::size_t j = 0; j < d; ++j)
      if (hi_[j] > lo_[j]) splittable_.push_back(static_cast<std::uint32_t>(j));
    if (splittable_.empty()) return leaf(n);

    const std::uint32_t dim = splittable_[rng_.below(splittable_.size())];
    const double lo = lo_[dim];
    const double hi = hi_[dim];
    double value = rng_.uniform(lo, hi);
    // Open interval; when no double lies strictly inside, hi still
    // separates lo from hi under the "x < value goes left" rule.
    if (!(value > lo && value < hi)) value = hi;

    const auto mid = std::partition(sample_.begin() + static_cast<std::ptrdiff_t>(begin),
                                    sample_.begin() + static_cast<std::ptrdiff_t>(end),
                                    [&](std::size_t r) { return rows_.row(r)[dim] < value; });
    const auto split = static_cast<std::size_t>(mid - sample_.begin());

    const std::size_t self = nodes_.size();
    IsolationTree::Node node;
    node.external = false;
    node.dimension = dim;
    node.split_value = value;
    nodes_.push_back(node);
    grow(begin, split, depth + 1);
    nodes_[self].right = static_cast<std::uint32_t>(nodes_.size());
    grow(split, end, depth + 1);
  }

  const FeatureMatrix& rows_;
  Rng rng_;
  std::size_t height_limit_;
  std::vector<double> lo_, hi_;
  std::vector<std::uint32_t> splittable_;
  std::vector<std::size_t> sample_;
  std::vector<IsolationTree::Node> nodes_;
};

}  // namespace

double c_factor(std::size_t n) noexcept {
  if (n <= 1) return 0.0;
  const double nd = static_cast<double>(n);
  return 2.0 * harmonic(n - 1) - 2.0 * (nd - 1.0) / nd;
}

std::size_t height_limit_for(std::size_t subsample) noexcept {
  if (subsample <= 1) return 0;
  return static_cast<std::size_t>(std::bit_width(subsample - 1));
}

IsolationTree::IsolationTree(std::vector<Node> nodes, std::size_t height_limit)
    : nodes_(std::move(nodes)), height_limit_(height_limit) {
  if (nodes_.empty()) throw_data_error("invalid-tree", "no nodes");
  // Walk the preorder layout and check that it closes exactly.
  std::vector<std::pair<std::size_t, std::size_t>> stack{{0, 0}};  // node, depth
  std::size_t visited = 0;
  std::size_t expected_next = 0;
  while (!stack.empty()) {
    auto [i, depth] = stack.back();
    stack.pop_back();
    if (i != expected_next || i >= nodes_.size()) throw_data_error("invalid-tree", "bad preorder layout");
    ++visited;
    ++expected_next;
    if (depth > height_limit_) throw_data_error("invalid-tree", "exceeds height limit");
    const Node& n = nodes_[i];
    if (n.external) continue;
    if (n.right <= i + 1 || n.right >= nodes_.size()) throw_data_error("invalid-tree", "bad child index");
    stack.push_back({n.right, depth + 1});
    stack.push_back({i + 1, depth + 1});
  }
  if (visited != nodes_.size()) throw_data_error("invalid-tree", "unreachable nodes");
}

std::size_t IsolationTree::sample_count() const noexcept {
  std::size_t total = 0;
  for (const auto& n : nodes_)
    if (n.external) total += n.size;
  return total;
}

double IsolationTree::path_length(std::span<const double> x) const noexcept {
  std::size_t i = 0;
  std::size_t depth = 0;
  while (!nodes_[i].external) {
    const Node& n = nodes_[i];
    i = x[n.dimension] < n.split_value ? i + 1 : n.right;
    ++depth;
  }
  return static_cast<double>(depth) + c_factor(nodes_[i].size);
}

IsolationForest::IsolationForest(std::vector<IsolationTree> trees, std::size_t subsample_size,
                                 std::uint64_t seed, std::size_t dimension)
    : trees_(std::move(trees)), subsample_size_(subsample_size), seed_(seed), dimension_(dimension) {
  for (const auto& t : trees_)
    for (const auto& n : t.nodes())
      if (!n.external && n.dimension >= dimension_)
        throw_data_error("invalid-tree", "split dimension out of range");
}

double IsolationForest::mean_path_length(std::span<const double> x) const noexcept {
  if (trees_.empty()) return 0.0;
  double total = 0.0;
  for (const auto& t : trees_) total += t.path_length(x);
  return total / static_cast<double>(trees_.size());
}

double IsolationForest::anomaly_score(std::span<const double> x) const noexcept {
  const double c = c_factor(subsample_size_);
  if (c == 0.0) return 0.5;
  return std::exp2(-mean_path_length(x) / c);
}

IsolationTree build_tree(const FeatureMatrix& rows, std::span<const std::size_t> sample,
                         std::uint64_t tree_seed, std::size_t height_limit) {
  TreeBuilder builder(rows, tree_seed, height_limit);
  return IsolationTree(builder.build({sample.begin(), sample.end()}), height_limit);
}

IsolationForest train_forest(const FeatureMatrix& rows, const ForestParams& params) {
  if (rows.rows == 0) throw_data_error("insufficient-data", "no training rows");
  if (params.num_trees == 0) throw_usage_error("invalid-forest-params", "num_trees must be >= 1");
  if (params.subsample_size == 0) throw_usage_error("invalid-forest-params", "subsample_size must be >= 1");

  const std::size_t psi = std::min(params.subsample_size, rows.rows);
  const std::size_t height = height_limit_for(psi);
  std::vector<IsolationTree> trees;
  trees.reserve(params.num_trees);
  std::vector<std::size_t> pool(rows.rows);

  for (std::size_t t = 0; t < params.num_trees; ++t) {
    TreeBuilder builder(rows, derive_seed(params.seed, t), height);
    // Partial Fisher-Yates: the first psi entries are a uniform sample
    // without replacement.
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    for (std::size_t k = 0; k < psi; ++k) {
      const auto j = k + static_cast<std::size_t>(builder.rng().below(rows.rows - k));
      std::swap(pool[k], pool[j]);
    }
    std::vector<std::size_t> sample(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(psi));
    trees.emplace_back(builder.build(std::move(sample)), height);
  }
  return IsolationForest(std::move(trees), psi, params.seed, rows.cols);
}

ScoredFlow score_flow(const IsolationForest& forest, const preprocess::FeatureSchema& schema,
                      const FlowRecord& flow) {
  const auto x = preprocess::transform(schema, flow);
  ScoredFlow s;
  s.flow = &flow;
  s.anomaly_s = forest.anomaly_score(x);
  s.normality_g = 0.5 - s.anomaly_s;
  return s;
}

}  // namespace iotnat::iforest
