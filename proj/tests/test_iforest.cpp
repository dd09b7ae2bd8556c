#include <doctest.h>

#include <cmath>
#include <functional>
#include <set>

#include "iotnat/error.hpp"
#include "iotnat/iforest.hpp"
#include "iotnat/rng.hpp"
#include "support/oracles.hpp"

using namespace iotnat;
using namespace iotnat::iforest;
using testsupport::c_oracle;
using testsupport::oracle_path;

namespace {

FeatureMatrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols, int levels = 0) {
  FeatureMatrix m;
  m.rows = rows;
  m.cols = cols;
  m.values.resize(rows * cols);
  for (auto& v : m.values) v = levels > 0 ? static_cast<double>(rng.below(levels)) : rng.uniform01();
  return m;
}

}  // namespace

TEST_SUITE("iforest") {

TEST_CASE("c_factor matches the exact harmonic form") {
  CHECK(c_factor(0) == 0.0);
  CHECK(c_factor(1) == 0.0);
  CHECK(c_factor(2) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(c_factor(3) == doctest::Approx(5.0 / 3.0).epsilon(1e-12));
  for (std::size_t n = 2; n <= 1024; ++n) CHECK(std::abs(c_factor(n) - c_oracle(n)) < 1e-9);
  for (std::size_t n : {4096u, 4097u, 5000u, 65536u, 1000000u}) CHECK(std::abs(c_factor(n) - c_oracle(n)) < 1e-9);
  // The large-n asymptotic form is the textbook approximation.
  const double n = 256.0;
  CHECK(c_factor(256) == doctest::Approx(2.0 * (std::log(n - 1) + kEulerGamma) - 2.0 * (n - 1) / n).epsilon(2e-3));
}

TEST_CASE("c_factor is increasing") {
  for (std::size_t n = 1; n < 5000; ++n) CHECK(c_factor(n + 1) > c_factor(n));
}

TEST_CASE("height limit is ceil(log2)") {
  CHECK(height_limit_for(0) == 0);
  CHECK(height_limit_for(1) == 0);
  CHECK(height_limit_for(2) == 1);
  CHECK(height_limit_for(3) == 2);
  CHECK(height_limit_for(256) == 8);
  CHECK(height_limit_for(257) == 9);
}

TEST_CASE("path_length agrees with a recursive oracle and every leaf is reachable") {
  Rng rng(77);
  for (int round = 0; round < 200; ++round) {
    const std::size_t cols = 1 + rng.below(2);
    const std::size_t rows = 1 + rng.below(8);
    const auto m = random_matrix(rng, rows, cols, round % 2 ? 4 : 0);
    std::vector<std::size_t> sample(rows);
    for (std::size_t i = 0; i < rows; ++i) sample[i] = i;
    const std::size_t height = height_limit_for(rows) + rng.below(2);
    const auto tree = build_tree(m, sample, derive_seed(9, round), height);
    CHECK(tree.sample_count() == rows);

    CHECK(testsupport::path_oracle_mismatches(tree, cols) == 0);
    // Training rows land at depth <= height.
    for (std::size_t r = 0; r < rows; ++r) {
      std::size_t leaf = 0;
      const double h = oracle_path(tree.nodes(), 0, m.row(r), 0, leaf);
      CHECK(h - c_oracle(tree.nodes()[leaf].size) <= static_cast<double>(height));
      CHECK(tree.nodes()[leaf].size >= 1);
    }
  }
}

TEST_CASE("trivial training sets") {
  SUBCASE("single row scores 0.5") {
    FeatureMatrix m{1, 2, {0.3, 0.7}};
    const auto f = train_forest(m, {10, 256, 1});
    CHECK(f.subsample_size() == 1);
    const std::vector<double> q{5.0, -3.0};
    CHECK(f.anomaly_score(q) == 0.5);
    CHECK(f.normality_score(q) == 0.0);
  }
  SUBCASE("identical rows give single-leaf trees and identical scores") {
    FeatureMatrix m{50, 2, std::vector<double>(100, 0.25)};
    const auto f = train_forest(m, {20, 32, 4});
    for (const auto& t : f.trees()) CHECK(t.nodes().size() == 1);
    const std::vector<double> a{0.25, 0.25};
    const std::vector<double> b{9.0, -9.0};
    CHECK(f.anomaly_score(a) == f.anomaly_score(b));
    CHECK(f.anomaly_score(a) == doctest::Approx(std::exp2(-c_oracle(32) / c_oracle(32))));
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(train_forest(FeatureMatrix{}, {}), Error);
    FeatureMatrix m{1, 1, {0.0}};
    CHECK_THROWS_AS(train_forest(m, {0, 8, 1}), Error);
    CHECK_THROWS_AS(train_forest(m, {8, 0, 1}), Error);
  }
}

TEST_CASE("training is deterministic and tree t depends only on (seed, t)") {
  Rng rng(3);
  const auto m = random_matrix(rng, 500, 4);
  const auto a = train_forest(m, {30, 64, 42});
  const auto b = train_forest(m, {30, 64, 42});
  CHECK(a == b);
  const auto prefix = train_forest(m, {10, 64, 42});
  for (std::size_t t = 0; t < 10; ++t) CHECK(prefix.trees()[t] == a.trees()[t]);
  const auto other = train_forest(m, {30, 64, 43});
  CHECK_FALSE(other == a);
}

TEST_CASE("scores lie in (0,1]; outliers score higher than cluster members") {
  Rng rng(11);
  FeatureMatrix m;
  m.rows = 1000;
  m.cols = 2;
  for (std::size_t i = 0; i < m.rows; ++i) {
    m.values.push_back(0.5 + 0.02 * rng.normal());
    m.values.push_back(0.5 + 0.02 * rng.normal());
  }
  const auto f = train_forest(m, {100, 256, 5});
  const std::vector<double> centre{0.5, 0.5};
  const std::vector<double> outlier{0.95, 0.05};
  CHECK(f.anomaly_score(outlier) > 0.6);
  CHECK(f.anomaly_score(centre) < 0.5);
  CHECK(f.normality_score(centre) > f.normality_score(outlier));
  for (int i = 0; i < 2000; ++i) {
    const std::vector<double> q{rng.uniform(-2, 3), rng.uniform(-2, 3)};
    const double s = f.anomaly_score(q);
    CHECK(s > 0.0);
    CHECK(s <= 1.0);
    CHECK(f.normality_score(q) == 0.5 - s);
  }
}

TEST_CASE("invalid tree layouts are rejected") {
  using Node = IsolationTree::Node;
  CHECK_THROWS_AS(IsolationTree({}, 1), Error);
  Node internal{false, 0, 0.5, 5, 0};
  CHECK_THROWS_AS(IsolationTree({internal, Node{true, 0, 0, 0, 1}}, 1), Error);
  Node ok_internal{false, 0, 0.5, 2, 0};
  CHECK_NOTHROW(IsolationTree({ok_internal, Node{true, 0, 0, 0, 1}, Node{true, 0, 0, 0, 1}}, 1));
  IsolationTree t({ok_internal, Node{true, 0, 0, 0, 1}, Node{true, 0, 0, 0, 1}}, 1);
  CHECK_THROWS_AS(IsolationForest({t}, 2, 0, 0), Error);
}

}  // TEST_SUITE
