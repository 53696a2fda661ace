#ifndef LEAKAUDIT_LEARNERS_HPP
#define LEAKAUDIT_LEARNERS_HPP

#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "leakaudit/cohort.hpp"
#include "leakaudit/tabular.hpp"

namespace leakaudit {

double sigmoid(double z);
double logit(double p);

// Per-class sample weights. balanced() gives w_c = N / (2 N_c).
struct ClassWeights {
  double w0 = 1.0;
  double w1 = 1.0;

  static ClassWeights balanced(std::span<const Label> y);
  double operator()(Label y) const { return y == 1 ? w1 : w0; }
};

// Throws DataError unless X and y agree in size, both classes occur and
// every feature is finite.
void validate_training_data(const Matrix& X, std::span<const Label> y);

struct LogisticConfig {
  double l2_lambda = 1e-4;
  int max_iters = 2000;
  double gradient_tolerance = 1e-6;
  bool balanced_class_weights = true;
  int history = 10;  // L-BFGS correction pairs
  // Random initial weights ~ init_scale * N(0,1) under init_seed; 0 = start at zero.
  double init_scale = 0.0;
  std::uint64_t init_seed = 0;
};

void to_json(nlohmann::json& j, const LogisticConfig& c);
void from_json(const nlohmann::json& j, LogisticConfig& c);

struct LogisticModel {
  std::vector<double> weights;
  double bias = 0.0;
  double l2_lambda = 0.0;
  ClassWeights class_weights;
  int iterations = 0;
  double final_gradient_norm = 0.0;

  double decision(std::span<const double> x) const;  // w.x + b
  double predict_proba(std::span<const double> x) const;

  nlohmann::json to_json() const;
  static LogisticModel from_json(const nlohmann::json& j);
};

// Mean class-weighted log-loss + (lambda/2) ||w||^2 at params = (w..., b).
// Fills `gradient` (same layout) when non-null.
double logistic_objective(const Matrix& X, std::span<const Label> y, const ClassWeights& cw, double l2_lambda,
                          std::span<const double> params, std::vector<double>* gradient);

// Full-batch L-BFGS with Armijo backtracking; stops at max-norm gradient
// <= tolerance or max_iters.
LogisticModel train_logistic(const Matrix& X, std::span<const Label> y, const LogisticConfig& config = {});

struct GbdtConfig {
  int n_trees = 200;
  double learning_rate = 0.1;
  int max_depth = 6;
  double min_child_weight = 1.0;
  double leaf_l2 = 1.0;
  bool balanced_class_weights = true;
};

void to_json(nlohmann::json& j, const GbdtConfig& c);
void from_json(const nlohmann::json& j, GbdtConfig& c);

struct TreeNode {
  int feature = -1;  // -1 for leaves
  double threshold = 0.0;
  int left = -1;   // rows with x[feature] < threshold
  int right = -1;
  double value = 0.0;  // leaf output before the learning rate
  double gain = 0.0;
  double cover = 0.0;  // training Hessian mass reaching this node

  bool is_leaf() const { return feature < 0; }
};

struct RegressionTree {
  std::vector<TreeNode> nodes;  // root at index 0

  double predict(std::span<const double> x) const;
  int leaf_index(std::span<const double> x) const;
  int depth() const;
};

class GbdtModel {
 public:
  double margin(std::span<const double> x) const;
  double predict_proba(std::span<const double> x) const;

  const std::vector<RegressionTree>& trees() const { return trees_; }
  double base_score() const { return base_score_; }
  double learning_rate() const { return config_.learning_rate; }
  const GbdtConfig& config() const { return config_; }
  std::size_t n_features() const { return n_features_; }
  // Weighted mean training log-loss before round 1 and after every round.
  const std::vector<double>& training_loss() const { return training_loss_; }

  nlohmann::json to_json() const;
  static GbdtModel from_json(const nlohmann::json& j);

  friend GbdtModel train_gbdt(const Matrix& X, std::span<const Label> y, const GbdtConfig& config);

 private:
  std::vector<RegressionTree> trees_;
  double base_score_ = 0.0;
  GbdtConfig config_;
  std::size_t n_features_ = 0;
  std::vector<double> training_loss_;
};

// Second-order boosting on class-weighted logistic loss with exact greedy
// splits. A round whose tree would raise the training loss is shrunk by
// halving until it does not.
GbdtModel train_gbdt(const Matrix& X, std::span<const Label> y, const GbdtConfig& config = {});

using LearnerSpec = std::variant<LogisticConfig, GbdtConfig>;
using Model = std::variant<LogisticModel, GbdtModel>;

Model train_model(const LearnerSpec& spec, const Matrix& X, std::span<const Label> y);
double predict_proba(const Model& model, std::span<const double> x);
std::vector<double> predict_proba(const Model& model, const Matrix& X);
std::size_t model_dimension(const Model& model);

nlohmann::json model_to_json(const Model& model, const std::string& schema_hash);
Model model_from_json(const nlohmann::json& j);

// FNV-1a over the ordered feature names; identifies the fused column layout.
std::string schema_hash(std::span<const std::string> feature_names);

}  // namespace leakaudit

#endif  // LEAKAUDIT_LEARNERS_HPP
