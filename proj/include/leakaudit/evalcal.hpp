#ifndef LEAKAUDIT_EVALCAL_HPP
#define LEAKAUDIT_EVALCAL_HPP

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "leakaudit/cohort.hpp"

namespace leakaudit {

struct ConfusionMatrix {
  std::size_t tn = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t tp = 0;
  double threshold = 0.5;

  std::size_t total() const { return tn + fp + fn + tp; }
  double accuracy() const;
};

// prediction = 1 iff prob >= threshold.
ConfusionMatrix confusion_at_threshold(std::span<const double> probs, std::span<const Label> labels,
                                       double threshold = 0.5);

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  // Set when a denominator was zero and the metric was reported as 0.
  bool degenerate = false;
};

ClassMetrics precision_recall_f1(const ConfusionMatrix& cm, Label cls);

// Mann-Whitney statistic: wins 1, ties 0.5, averaged over positive/negative pairs.
double roc_auc(std::span<const double> scores, std::span<const Label> labels);

double brier(std::span<const double> probs, std::span<const Label> labels);

// Mean Bernoulli negative log-likelihood, probabilities clamped to [eps, 1-eps].
double log_loss(std::span<const double> probs, std::span<const Label> labels, double eps = 1e-15);

struct PlattModel {
  double a = 1.0;
  double b = 0.0;
  double clamp_epsilon = 1e-6;
  double initial_log_loss = 0.0;
  double final_log_loss = 0.0;
  int iterations = 0;

  double apply(double score) const;
  std::vector<double> apply(std::span<const double> scores) const;

  nlohmann::json to_json() const;
  static PlattModel from_json(const nlohmann::json& j);
};

// Maximum-likelihood sigmoid(a * logit(clamp(s)) + b), Newton iterations from
// (1, 0) with a monotone line search, so the fitted log-loss never exceeds
// the identity map's.
PlattModel fit_platt(std::span<const double> scores, std::span<const Label> labels);

inline double apply_platt(const PlattModel& model, double score) { return model.apply(score); }

struct ReliabilityBin {
  double low = 0.0;
  double high = 0.0;
  std::size_t count = 0;
  std::optional<double> mean_predicted;
  std::optional<double> event_rate;
};

struct ReliabilityCurve {
  std::vector<ReliabilityBin> bins;
};

// Equal-width bins [i/n, (i+1)/n), the last one closed on the right.
ReliabilityCurve reliability_curve(std::span<const double> probs, std::span<const Label> labels,
                                   std::size_t n_bins = 10);

struct MetricsReport {
  std::string name;
  std::size_t n = 0;
  double accuracy = 0.0;
  ClassMetrics class0;
  ClassMetrics class1;
  double roc_auc = 0.0;
  double brier = 0.0;
  ConfusionMatrix confusion;
};

MetricsReport evaluate_scores(std::string name, std::span<const double> probs, std::span<const Label> labels,
                              double threshold = 0.5);

// Number formatting shared by every emitted report: fixed, 6 decimals.
std::string format_fixed(double value, int decimals = 6);

// Rounded to 6 decimals so the JSON serialisation is stable.
nlohmann::ordered_json metrics_to_json(const MetricsReport& m);
nlohmann::ordered_json reliability_to_json(const ReliabilityCurve& c);

// Tab-separated table: model, Acc, P0, R0, F1_0, P1, R1, F1_1, ROC_AUC, Brier.
std::string metrics_table(std::span<const MetricsReport> rows);
std::string reliability_table(const ReliabilityCurve& curve);

}  // namespace leakaudit

#endif  // LEAKAUDIT_EVALCAL_HPP
