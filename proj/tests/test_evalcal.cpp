#include <gtest/gtest.h>

#include <cmath>

#include "leakaudit/error.hpp"
#include "leakaudit/evalcal.hpp"
#include "leakaudit/learners.hpp"
#include "leakaudit/rng.hpp"

using namespace leakaudit;

namespace {

double pairwise_auc(const std::vector<double>& s, const std::vector<Label>& y) {
  double wins = 0, pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[i] != 1 || y[j] != 0) continue;
      pairs += 1;
      wins += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
    }
  }
  return wins / pairs;
}

}  // namespace

TEST(Confusion, Examples) {
  const std::vector<double> p{0.9, 0.4, 0.6, 0.2};
  const std::vector<Label> y{1, 0, 1, 0};
  const auto cm = confusion_at_threshold(p, y);
  EXPECT_EQ(cm.tp, 2u);
  EXPECT_EQ(cm.tn, 2u);
  EXPECT_EQ(cm.fp, 0u);
  EXPECT_EQ(cm.fn, 0u);
  EXPECT_EQ(confusion_at_threshold(p, y, 0.0).fp, 2u);
  EXPECT_THROW(confusion_at_threshold(p, std::vector<Label>{1, 0}), DataError);
}

TEST(Confusion, ReportedCounts) {
  ConfusionMatrix cm{.tn = 226, .fp = 17, .fn = 19, .tp = 51};
  const auto c1 = precision_recall_f1(cm, 1);
  EXPECT_NEAR(c1.precision, 0.750, 5e-4);
  EXPECT_NEAR(c1.recall, 0.729, 5e-4);
  EXPECT_NEAR(c1.f1, 0.739, 5e-4);
  EXPECT_NEAR(cm.accuracy(), 0.885, 5e-4);
  EXPECT_FALSE(c1.degenerate);
}

TEST(Confusion, DegenerateAndPerfect) {
  ConfusionMatrix none{.tn = 10, .fp = 0, .fn = 4, .tp = 0};
  const auto c = precision_recall_f1(none, 1);
  EXPECT_EQ(c.precision, 0.0);
  EXPECT_TRUE(c.degenerate);
  ConfusionMatrix perfect{.tn = 5, .fp = 0, .fn = 0, .tp = 5};
  const auto p = precision_recall_f1(perfect, 1);
  EXPECT_EQ(p.precision, 1.0);
  EXPECT_EQ(p.recall, 1.0);
  EXPECT_EQ(p.f1, 1.0);
}

TEST(RocAuc, Examples) {
  EXPECT_DOUBLE_EQ(roc_auc(std::vector<double>{0.1, 0.4, 0.35, 0.8}, std::vector<Label>{0, 0, 1, 1}), 0.75);
  EXPECT_DOUBLE_EQ(roc_auc(std::vector<double>{0.1, 0.2, 0.3}, std::vector<Label>{0, 1, 1}), 1.0);
  EXPECT_DOUBLE_EQ(roc_auc(std::vector<double>{0.3, 0.3, 0.3}, std::vector<Label>{0, 1, 1}), 0.5);
  EXPECT_THROW(roc_auc(std::vector<double>{0.1, 0.2}, std::vector<Label>{1, 1}), DataError);
}

TEST(RocAuc, MatchesPairwiseOracleWithTies) {
  Rng rng(44);
  for (int trial = 0; trial < 100; ++trial) {
    const auto n = static_cast<std::size_t>(rng.between(2, 300));
    std::vector<double> s(n);
    std::vector<Label> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng.below(20)) / 20.0;
      y[i] = rng.bernoulli(0.3) ? 1 : 0;
    }
    y[0] = 1;
    y[1] = 0;
    EXPECT_DOUBLE_EQ(roc_auc(s, y), pairwise_auc(s, y));
  }
}

TEST(RocAuc, InvariantUnderMonotoneTransform) {
  Rng rng(45);
  std::vector<double> s(200), t(200);
  std::vector<Label> y(200);
  for (std::size_t i = 0; i < 200; ++i) {
    s[i] = rng.normal();
    t[i] = std::exp(3 * s[i]) + 1;
    y[i] = rng.bernoulli(sigmoid(s[i])) ? 1 : 0;
  }
  EXPECT_DOUBLE_EQ(roc_auc(s, y), roc_auc(t, y));
}

TEST(Brier, Examples) {
  EXPECT_DOUBLE_EQ(brier(std::vector<double>{1, 0, 1}, std::vector<Label>{1, 0, 1}), 0.0);
  EXPECT_DOUBLE_EQ(brier(std::vector<double>{0.5, 0.5}, std::vector<Label>{1, 0}), 0.25);
  EXPECT_NEAR(brier(std::vector<double>{0.8, 0.3}, std::vector<Label>{1, 0}), 0.065, 1e-15);
}

TEST(Platt, IdentityOnCalibratedScores) {
  Rng rng(46);
  std::vector<double> s(10000);
  std::vector<Label> y(10000);
  for (std::size_t i = 0; i < s.size(); ++i) {
    s[i] = rng.uniform(0.02, 0.98);
    y[i] = rng.bernoulli(s[i]) ? 1 : 0;
  }
  const auto m = fit_platt(s, y);
  EXPECT_NEAR(m.a, 1.0, 0.1);
  EXPECT_NEAR(m.b, 0.0, 0.1);
}

TEST(Platt, ConstantScoresGiveBaseRate) {
  std::vector<double> s(1000, 0.5);
  std::vector<Label> y(1000, 0);
  for (std::size_t i = 0; i < 300; ++i) y[i] = 1;
  EXPECT_NEAR(fit_platt(s, y).apply(0.5), 0.3, 1e-6);
}

TEST(Platt, SharpensSeparableScores) {
  std::vector<double> s;
  std::vector<Label> y;
  for (int i = 0; i < 50; ++i) {
    s.push_back(0.05 + 0.005 * i);
    y.push_back(0);
    s.push_back(0.7 + 0.005 * i);
    y.push_back(1);
  }
  const auto m = fit_platt(s, y);
  EXPECT_GT(m.a, 1.0);
  EXPECT_LT(m.apply(0.1), 0.1);
  EXPECT_GT(m.apply(0.8), 0.8);
}

TEST(Platt, ApplyContract) {
  PlattModel identity;
  for (double p : {0.01, 0.2, 0.5, 0.93}) EXPECT_NEAR(identity.apply(p), p, 1e-12);
  EXPECT_TRUE(std::isfinite(identity.apply(0.0)));
  EXPECT_TRUE(std::isfinite(identity.apply(1.0)));
  EXPECT_GT(identity.apply(0.0), 0.0);
  EXPECT_LT(identity.apply(1.0), 1.0);
  PlattModel m{.a = 2.5, .b = -0.7};
  EXPECT_LT(m.apply(0.3), m.apply(0.31));
  EXPECT_THROW(fit_platt(std::vector<double>{0.1, 0.2}, std::vector<Label>{0, 0}), DataError);
}

TEST(Platt, NeverWorseThanIdentity) {
  Rng rng(47);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> s(300);
    std::vector<Label> y(300);
    const double skew = rng.uniform(-2, 2);
    for (std::size_t i = 0; i < s.size(); ++i) {
      s[i] = rng.uniform();
      y[i] = rng.bernoulli(sigmoid(skew + 3 * (s[i] - 0.5))) ? 1 : 0;
    }
    y[0] = 0;
    y[1] = 1;
    const auto m = fit_platt(s, y);
    const auto clamped = PlattModel{}.apply(s);
    EXPECT_LE(log_loss(m.apply(s), y), log_loss(clamped, y) + 1e-12);
  }
}

TEST(Reliability, Examples) {
  const auto c = reliability_curve(std::vector<double>{0.05, 0.05}, std::vector<Label>{0, 0});
  ASSERT_EQ(c.bins.size(), 10u);
  EXPECT_EQ(c.bins[0].count, 2u);
  EXPECT_NEAR(*c.bins[0].mean_predicted, 0.05, 1e-15);
  EXPECT_EQ(*c.bins[0].event_rate, 0.0);
  EXPECT_FALSE(c.bins[1].mean_predicted.has_value());
  const auto last = reliability_curve(std::vector<double>{1.0}, std::vector<Label>{1});
  EXPECT_EQ(last.bins[9].count, 1u);
}

TEST(Reliability, CountsSumToN) {
  Rng rng(48);
  for (int trial = 0; trial < 20; ++trial) {
    const auto n = static_cast<std::size_t>(rng.between(1, 500));
    std::vector<double> p(n);
    std::vector<Label> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = rng.bernoulli(0.1) ? static_cast<double>(rng.below(11)) / 10.0 : rng.uniform();
      y[i] = rng.bernoulli(p[i]) ? 1 : 0;
    }
    const auto c = reliability_curve(p, y);
    std::size_t total = 0;
    for (const auto& b : c.bins) total += b.count;
    EXPECT_EQ(c.bins.size(), 10u);
    EXPECT_EQ(total, n);
  }
}

TEST(Report, FixedFormatting) {
  EXPECT_EQ(format_fixed(0.1234567), "0.123457");
  EXPECT_EQ(format_fixed(1.0), "1.000000");
  const auto m = evaluate_scores("m", std::vector<double>{0.9, 0.1}, std::vector<Label>{1, 0});
  const auto table = metrics_table(std::vector<MetricsReport>{m});
  EXPECT_NE(table.find("1.000000"), std::string::npos);
}
