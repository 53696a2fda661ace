#include "leakaudit/ensemble.hpp"

#include <algorithm>

#include "leakaudit/error.hpp"
#include "leakaudit/rng.hpp"

namespace leakaudit {

double soft_vote(std::span<const double> member_probs) {
  if (member_probs.empty()) throw DataError("soft_vote: no members");
  double s = 0.0;
  for (double p : member_probs) s += p;
  return s / static_cast<double>(member_probs.size());
}

std::vector<int> stratified_folds(std::span<const Label> y, int k_folds, std::uint64_t seed) {
  if (k_folds < 2) throw ConfigError("stacking needs k_folds >= 2");
  std::vector<int> fold(y.size(), -1);
  Rng rng(seed);
  for (Label c : {1, 0}) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < y.size(); ++i) {
      if (y[i] == c) idx.push_back(i);
    }
    rng.shuffle(std::span<std::size_t>(idx));
    for (std::size_t k = 0; k < idx.size(); ++k) fold[idx[k]] = static_cast<int>(k % static_cast<std::size_t>(k_folds));
  }
  return fold;
}

std::vector<double> StackedEnsemble::member_features(std::span<const double> x) const {
  std::vector<double> f(members.size());
  for (std::size_t m = 0; m < members.size(); ++m) {
    const double p = leakaudit::predict_proba(members[m], x);
    f[m] = calibrators[m] ? calibrators[m]->apply(p) : p;
  }
  return f;
}

double StackedEnsemble::predict_proba(std::span<const double> x) const {
  return meta.predict_proba(member_features(x));
}

std::vector<double> StackedEnsemble::predict_proba(const Matrix& X) const {
  std::vector<double> out(X.rows);
  for (std::size_t i = 0; i < X.rows; ++i) out[i] = predict_proba(X.row(i));
  return out;
}

StackedEnsemble train_stacker(std::span<const StackMember> members, const Matrix& X, std::span<const Label> y,
                              int k_folds, std::uint64_t seed, const LogisticConfig& meta_config) {
  if (members.empty()) throw ConfigError("stacking needs at least one member");
  validate_training_data(X, y);

  StackedEnsemble ens;
  ens.trace.fold_of_row = stratified_folds(y, k_folds, seed);
  const auto& fold = ens.trace.fold_of_row;

  std::vector<std::vector<std::size_t>> train_rows(static_cast<std::size_t>(k_folds)),
      held_rows(static_cast<std::size_t>(k_folds));
  for (std::size_t i = 0; i < y.size(); ++i) {
    for (int k = 0; k < k_folds; ++k) (fold[i] == k ? held_rows : train_rows)[k].push_back(i);
  }
  for (int k = 0; k < k_folds; ++k) {
    bool seen[2] = {false, false};
    for (auto i : held_rows[k]) seen[y[i]] = true;
    if (!seen[0] || !seen[1]) throw DataError("stacking fold " + std::to_string(k) + " holds a single class");
  }
  ens.trace.clone_training_rows = train_rows;

  Matrix oof(X.rows, members.size());
  for (int k = 0; k < k_folds; ++k) {
    const Matrix Xk = X.select_rows(train_rows[k]);
    std::vector<Label> yk;
    for (auto i : train_rows[k]) yk.push_back(y[i]);
    for (std::size_t m = 0; m < members.size(); ++m) {
      const Model clone = train_model(members[m].spec, Xk, yk);
      for (auto i : held_rows[k]) oof(i, m) = leakaudit::predict_proba(clone, X.row(i));
    }
  }

  for (std::size_t m = 0; m < members.size(); ++m) {
    ens.member_names.push_back(members[m].name);
    std::optional<PlattModel> cal;
    if (members[m].calibrate) {
      std::vector<double> col(X.rows);
      for (std::size_t i = 0; i < X.rows; ++i) col[i] = oof(i, m);
      cal = fit_platt(col, y);
      for (std::size_t i = 0; i < X.rows; ++i) oof(i, m) = cal->apply(col[i]);
    }
    ens.calibrators.push_back(cal);
    ens.members.push_back(train_model(members[m].spec, X, y));
  }
  ens.meta = train_logistic(oof, y, meta_config);
  ens.meta_features = std::move(oof);
  return ens;
}

nlohmann::json stacker_to_json(const StackedEnsemble& ensemble, const std::string& schema_hash) {
  nlohmann::json members = nlohmann::json::array();
  for (std::size_t m = 0; m < ensemble.members.size(); ++m) {
    members.push_back({{"name", ensemble.member_names[m]},
                       {"model", model_to_json(ensemble.members[m], schema_hash)},
                       {"calibrator", ensemble.calibrators[m] ? ensemble.calibrators[m]->to_json() : nullptr}});
  }
  return {{"type", "stacked"},
          {"members", members},
          {"meta", ensemble.meta.to_json()},
          {"fold_of_row", ensemble.trace.fold_of_row},
          {"schema_hash", schema_hash}};
}

StackedEnsemble stacker_from_json(const nlohmann::json& j) {
  StackedEnsemble ens;
  try {
    if (j.at("type") != "stacked") throw DataError("not a stacked ensemble");
    for (const auto& m : j.at("members")) {
      ens.member_names.push_back(m.at("name").get<std::string>());
      ens.members.push_back(model_from_json(m.at("model")));
      ens.calibrators.push_back(m.at("calibrator").is_null() ? std::nullopt
                                                             : std::optional(PlattModel::from_json(m["calibrator"])));
    }
    ens.meta = LogisticModel::from_json(j.at("meta"));
    ens.trace.fold_of_row = j.value("fold_of_row", std::vector<int>{});
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed stacked ensemble: ") + e.what());
  }
  return ens;
}

}  // namespace leakaudit
