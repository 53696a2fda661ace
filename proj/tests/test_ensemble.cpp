#include <gtest/gtest.h>

#include <algorithm>

#include "leakaudit/ensemble.hpp"
#include "leakaudit/error.hpp"
#include "leakaudit/evalcal.hpp"
#include "leakaudit/rng.hpp"

using namespace leakaudit;

namespace {

struct Data {
  Matrix X;
  std::vector<Label> y;
};

Data noisy_data(std::uint64_t seed, std::size_t n) {
  Rng rng(seed);
  Data d{Matrix(n, 3), std::vector<Label>(n)};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < 3; ++j) d.X(i, j) = rng.normal();
    d.y[i] = d.X(i, 0) - 0.5 * d.X(i, 1) + rng.normal() > 0 ? 1 : 0;
  }
  return d;
}

}  // namespace

TEST(SoftVote, Examples) {
  EXPECT_DOUBLE_EQ(soft_vote(std::vector<double>{0.2, 0.4, 0.9}), 0.5);
  EXPECT_DOUBLE_EQ(soft_vote(std::vector<double>{0.37, 0.37}), 0.37);
  EXPECT_THROW(soft_vote(std::vector<double>{}), DataError);
}

TEST(Stacking, PerfectMemberGivesPerfectRanking) {
  // Column 0 is the label itself, so every out-of-fold member is exact.
  auto d = noisy_data(3, 200);
  for (std::size_t i = 0; i < d.X.rows; ++i) d.X(i, 0) = d.y[i];
  const std::vector<StackMember> members{{"lr", LogisticConfig{}, false}};
  const auto ens = train_stacker(members, d.X, d.y, 5, 7);
  const auto p = ens.predict_proba(d.X);
  EXPECT_DOUBLE_EQ(roc_auc(p, d.y), 1.0);
}

TEST(Stacking, ConstantMembersGiveConstantOutput) {
  auto d = noisy_data(4, 120);
  Matrix zeros(d.X.rows, 2);
  // Balanced weights on all-zero features make every member output 0.5.
  const std::vector<StackMember> members{{"a", LogisticConfig{}, false}, {"b", LogisticConfig{}, false}};
  const auto ens = train_stacker(members, zeros, d.y, 4, 1);
  const auto p = ens.predict_proba(zeros);
  for (double v : p) EXPECT_NEAR(v, p[0], 1e-12);
  const double prevalence = static_cast<double>(std::count(d.y.begin(), d.y.end(), 1)) / d.y.size();
  EXPECT_NEAR(p[0], prevalence, 1e-3);
}

TEST(Stacking, NoRowSeenByItsOwnClone) {
  const auto d = noisy_data(5, 150);
  const std::vector<StackMember> members{{"lr", LogisticConfig{}, true},
                                         {"gb", GbdtConfig{.n_trees = 10, .max_depth = 2}, true}};
  const auto ens = train_stacker(members, d.X, d.y, 5, 11);
  ASSERT_EQ(ens.trace.fold_of_row.size(), d.X.rows);
  ASSERT_EQ(ens.trace.clone_training_rows.size(), 5u);
  for (std::size_t i = 0; i < d.X.rows; ++i) {
    const auto& seen = ens.trace.clone_training_rows[static_cast<std::size_t>(ens.trace.fold_of_row[i])];
    EXPECT_FALSE(std::binary_search(seen.begin(), seen.end(), i)) << "row " << i;
  }
  EXPECT_EQ(ens.meta_features.rows, d.X.rows);
  EXPECT_EQ(ens.meta_features.cols, 2u);
}

TEST(Stacking, FoldsAreStratifiedAndSeeded) {
  const auto d = noisy_data(6, 103);
  const auto a = stratified_folds(d.y, 5, 2), b = stratified_folds(d.y, 5, 2);
  EXPECT_EQ(a, b);
  std::vector<int> pos(5, 0), all(5, 0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    ++all[static_cast<std::size_t>(a[i])];
    if (d.y[i]) ++pos[static_cast<std::size_t>(a[i])];
  }
  EXPECT_LE(*std::max_element(pos.begin(), pos.end()) - *std::min_element(pos.begin(), pos.end()), 1);
  EXPECT_LE(*std::max_element(all.begin(), all.end()) - *std::min_element(all.begin(), all.end()), 2);
}

TEST(Stacking, SingleClassFoldIsAnError) {
  auto d = noisy_data(7, 40);
  std::fill(d.y.begin(), d.y.end(), 0);
  d.y[0] = 1;
  d.y[1] = 1;
  const std::vector<StackMember> members{{"lr", LogisticConfig{}, false}};
  EXPECT_THROW(train_stacker(members, d.X, d.y, 5, 1), DataError);
}
