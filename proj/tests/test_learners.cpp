#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "leakaudit/error.hpp"
#include "leakaudit/learners.hpp"
#include "leakaudit/rng.hpp"

using namespace leakaudit;

namespace {

Matrix random_matrix(Rng& rng, std::size_t n, std::size_t d) {
  Matrix X(n, d);
  for (auto& v : X.data) v = rng.normal();
  return X;
}

std::vector<Label> random_labels(Rng& rng, const Matrix& X, double noise) {
  std::vector<Label> y(X.rows);
  for (std::size_t i = 0; i < X.rows; ++i) {
    double z = 0;
    for (std::size_t j = 0; j < X.cols; ++j) z += X(i, j) * (j % 2 ? -1.0 : 1.0);
    y[i] = z + noise * rng.normal() > 0 ? 1 : 0;
  }
  if (std::count(y.begin(), y.end(), 1) == 0) y[0] = 1;
  if (std::count(y.begin(), y.end(), 0) == 0) y[0] = 0;
  return y;
}

int tree_depth(const RegressionTree& t, int node) {
  const auto& n = t.nodes[static_cast<std::size_t>(node)];
  if (n.is_leaf()) return 0;
  return 1 + std::max(tree_depth(t, n.left), tree_depth(t, n.right));
}

}  // namespace

TEST(Logistic, SeparablePair) {
  Matrix X(2, 1);
  X(0, 0) = -1;
  X(1, 0) = 1;
  const std::vector<Label> y{0, 1};
  const auto m = train_logistic(X, y);
  EXPECT_GT(m.weights[0], 0.0);
  const double x1[] = {1.0};
  EXPECT_GT(m.predict_proba(x1), 0.5);
}

TEST(Logistic, BalancedInterceptOnly) {
  Matrix X(8, 3);
  const std::vector<Label> y{1, 0, 0, 0, 1, 0, 0, 0};
  const auto m = train_logistic(X, y);
  const double x[] = {0.3, -2.0, 5.0};
  EXPECT_NEAR(m.predict_proba(x), 0.5, 1e-6);
}

TEST(Logistic, ProbaExamples) {
  LogisticModel zero;
  zero.weights = {0.0, 0.0};
  const double x[] = {4.0, -7.0};
  EXPECT_DOUBLE_EQ(zero.predict_proba(x), 0.5);
  LogisticModel one;
  one.weights = {1.0};
  const double ln3[] = {std::log(3.0)};
  EXPECT_NEAR(one.predict_proba(ln3), 0.75, 1e-15);
  const double wrong[] = {1.0, 2.0};
  EXPECT_THROW(one.predict_proba(wrong), DataError);
}

TEST(Logistic, GradientMatchesFiniteDifferences) {
  Rng rng(21);
  for (int point = 0; point < 10; ++point) {
    const Matrix X = random_matrix(rng, 40, 6);
    const auto y = random_labels(rng, X, 1.0);
    const auto cw = ClassWeights::balanced(y);
    std::vector<double> params(7);
    for (auto& p : params) p = rng.normal();
    std::vector<double> grad;
    logistic_objective(X, y, cw, 0.01, params, &grad);
    const double h = 1e-5;
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto up = params, down = params;
      up[k] += h;
      down[k] -= h;
      const double fd = (logistic_objective(X, y, cw, 0.01, up, nullptr) -
                         logistic_objective(X, y, cw, 0.01, down, nullptr)) / (2 * h);
      const double rel = std::abs(fd - grad[k]) / std::max(1e-8, std::max(std::abs(fd), std::abs(grad[k])));
      EXPECT_LE(rel, 1e-4) << "point " << point << " coord " << k;
    }
  }
}

TEST(Logistic, ConvexObjectiveIgnoresInitialisation) {
  Rng rng(4);
  const Matrix X = random_matrix(rng, 120, 5);
  const auto y = random_labels(rng, X, 1.5);
  LogisticConfig a{.l2_lambda = 0.01, .gradient_tolerance = 1e-9, .init_scale = 1.0, .init_seed = 1};
  LogisticConfig b = a;
  b.init_seed = 99;
  const auto ma = train_logistic(X, y, a), mb = train_logistic(X, y, b);
  for (std::size_t j = 0; j < ma.weights.size(); ++j) EXPECT_NEAR(ma.weights[j], mb.weights[j], 1e-6);
  EXPECT_NEAR(ma.bias, mb.bias, 1e-6);
}

TEST(Logistic, InputErrors) {
  Matrix X(3, 1);
  EXPECT_THROW(train_logistic(X, std::vector<Label>{1, 1, 1}), DataError);
  X(1, 0) = std::nan("");
  EXPECT_THROW(train_logistic(X, std::vector<Label>{0, 1, 1}), DataError);
  EXPECT_THROW(train_logistic(X, std::vector<Label>{0, 1}), DataError);
}

TEST(Logistic, SerializationRoundTrip) {
  Rng rng(2);
  const Matrix X = random_matrix(rng, 50, 3);
  const auto y = random_labels(rng, X, 0.5);
  const Model m = train_model(LogisticConfig{}, X, y);
  const auto back = model_from_json(model_to_json(m, "h"));
  EXPECT_EQ(predict_proba(back, X), predict_proba(m, X));
}

TEST(Gbdt, ZeroTrees) {
  Rng rng(1);
  const Matrix X = random_matrix(rng, 30, 2);
  const auto y = random_labels(rng, X, 0.1);
  const auto m = train_gbdt(X, y, GbdtConfig{.n_trees = 0});
  for (std::size_t i = 0; i < X.rows; ++i) EXPECT_DOUBLE_EQ(m.predict_proba(X.row(i)), sigmoid(m.base_score()));
}

TEST(Gbdt, SeparableToy) {
  Matrix X(20, 1);
  std::vector<Label> y(20);
  for (int i = 0; i < 20; ++i) {
    X(i, 0) = -10 + i;
    y[i] = X(i, 0) >= 0 ? 1 : 0;
  }
  const auto m = train_gbdt(X, y, GbdtConfig{.n_trees = 10, .learning_rate = 0.5, .max_depth = 1});
  for (std::size_t i = 0; i < 20; ++i) EXPECT_EQ(m.predict_proba(X.row(i)) >= 0.5 ? 1 : 0, y[i]);
}

TEST(Gbdt, LossNonIncreasingAndLimitsHold) {
  Rng rng(17);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix X = random_matrix(rng, 150, 4);
    const auto y = random_labels(rng, X, 2.0);
    const GbdtConfig cfg{.n_trees = 30, .learning_rate = 0.3, .max_depth = 3, .min_child_weight = 2.0};
    const auto m = train_gbdt(X, y, cfg);
    const auto& loss = m.training_loss();
    ASSERT_EQ(loss.size(), 31u);
    for (std::size_t r = 1; r < loss.size(); ++r) EXPECT_LE(loss[r], loss[r - 1] + 1e-12);
    for (const auto& t : m.trees()) {
      EXPECT_LE(tree_depth(t, 0), 3);
      EXPECT_EQ(t.depth(), tree_depth(t, 0));
      for (const auto& n : t.nodes) EXPECT_GE(n.cover, 2.0 - 1e-9);
    }
  }
}

TEST(Gbdt, MonotoneFeatureTransformKeepsPredictions) {
  Rng rng(30);
  const Matrix X = random_matrix(rng, 100, 3);
  const auto y = random_labels(rng, X, 1.0);
  Matrix Xt = X;
  for (auto& v : Xt.data) v = std::exp(v);
  const GbdtConfig cfg{.n_trees = 20, .max_depth = 3};
  const auto a = train_gbdt(X, y, cfg), b = train_gbdt(Xt, y, cfg);
  for (std::size_t i = 0; i < X.rows; ++i) EXPECT_NEAR(a.predict_proba(X.row(i)), b.predict_proba(Xt.row(i)), 1e-9);
}

TEST(Gbdt, SerializationRoundTrip) {
  Rng rng(8);
  const Matrix X = random_matrix(rng, 80, 3);
  const auto y = random_labels(rng, X, 1.0);
  const Model m = train_model(GbdtConfig{.n_trees = 15}, X, y);
  const auto back = model_from_json(model_to_json(m, "h"));
  EXPECT_EQ(predict_proba(back, X), predict_proba(m, X));
}

TEST(Learners, SchemaHashDependsOnOrder) {
  const std::vector<std::string> a{"s:x", "t:y"}, b{"t:y", "s:x"};
  EXPECT_NE(schema_hash(a), schema_hash(b));
  EXPECT_EQ(schema_hash(a), schema_hash(a));
}
