#ifndef LEAKAUDIT_ENSEMBLE_HPP
#define LEAKAUDIT_ENSEMBLE_HPP

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "leakaudit/evalcal.hpp"
#include "leakaudit/learners.hpp"

namespace leakaudit {

// Arithmetic mean of member probabilities. Throws on an empty list.
double soft_vote(std::span<const double> member_probs);

struct StackMember {
  std::string name;
  LearnerSpec spec;
  // Fit a sigmoid calibrator on the member's out-of-fold probabilities and
  // feed calibrated probabilities to the meta learner.
  bool calibrate = true;
};

// Which rows each out-of-fold clone saw. fold_of_row[i] is the fold whose
// clone produced row i's meta features; clone_training_rows[k] lists the
// rows clone k was fitted on.
struct StackingTrace {
  std::vector<int> fold_of_row;
  std::vector<std::vector<std::size_t>> clone_training_rows;
};

struct StackedEnsemble {
  std::vector<std::string> member_names;
  std::vector<Model> members;  // refitted on the full training split
  std::vector<std::optional<PlattModel>> calibrators;
  LogisticModel meta;
  Matrix meta_features;  // out-of-fold, one column per member
  StackingTrace trace;

  std::vector<double> member_features(std::span<const double> x) const;
  double predict_proba(std::span<const double> x) const;
  std::vector<double> predict_proba(const Matrix& X) const;
};

// Seeded stratified assignment of rows to k folds.
std::vector<int> stratified_folds(std::span<const Label> y, int k_folds, std::uint64_t seed);

// Out-of-fold stacking: every training row's meta features come from member
// clones fitted without that row's fold. The meta learner is an L2 logistic
// regression with unpenalised bias and no class reweighting.
StackedEnsemble train_stacker(std::span<const StackMember> members, const Matrix& X, std::span<const Label> y,
                              int k_folds = 5, std::uint64_t seed = 0,
                              const LogisticConfig& meta_config = {.l2_lambda = 1e-4,
                                                                   .balanced_class_weights = false});

nlohmann::json stacker_to_json(const StackedEnsemble& ensemble, const std::string& schema_hash);
// Members, calibrators and meta learner; the out-of-fold matrix is not stored.
StackedEnsemble stacker_from_json(const nlohmann::json& j);

}  // namespace leakaudit

#endif  // LEAKAUDIT_ENSEMBLE_HPP
