#include "leakaudit/evalcal.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "leakaudit/error.hpp"
#include "leakaudit/learners.hpp"

namespace leakaudit {

namespace {

void require_same_length(std::size_t a, std::size_t b, const char* what) {
  if (a != b) throw DataError(std::string(what) + ": scores and labels differ in length");
}

void require_both_classes(std::span<const Label> labels, const char* what) {
  bool seen[2] = {false, false};
  for (Label l : labels) {
    if (l != 0 && l != 1) throw DataError(std::string(what) + ": labels must be 0 or 1");
    seen[l] = true;
  }
  if (!seen[0] || !seen[1]) throw DataError(std::string(what) + ": labels contain a single class");
}

double ratio(std::size_t num, std::size_t den, bool& degenerate) {
  if (den == 0) {
    degenerate = true;
    return 0.0;
  }
  return static_cast<double>(num) / static_cast<double>(den);
}

double round6(double v) { return std::round(v * 1e6) / 1e6; }

}  // namespace

double ConfusionMatrix::accuracy() const {
  const auto n = total();
  return n == 0 ? 0.0 : static_cast<double>(tp + tn) / static_cast<double>(n);
}

ConfusionMatrix confusion_at_threshold(std::span<const double> probs, std::span<const Label> labels,
                                       double threshold) {
  require_same_length(probs.size(), labels.size(), "confusion_at_threshold");
  if (probs.empty()) throw DataError("confusion_at_threshold: no samples");
  ConfusionMatrix cm;
  cm.threshold = threshold;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const bool predicted = probs[i] >= threshold;
    if (labels[i] == 1) {
      ++(predicted ? cm.tp : cm.fn);
    } else {
      ++(predicted ? cm.fp : cm.tn);
    }
  }
  return cm;
}

ClassMetrics precision_recall_f1(const ConfusionMatrix& cm, Label cls) {
  // For class 0 the roles of positives and negatives swap.
  const std::size_t tp = cls == 1 ? cm.tp : cm.tn;
  const std::size_t fp = cls == 1 ? cm.fp : cm.fn;
  const std::size_t fn = cls == 1 ? cm.fn : cm.fp;
  ClassMetrics m;
  m.precision = ratio(tp, tp + fp, m.degenerate);
  m.recall = ratio(tp, tp + fn, m.degenerate);
  // F1 = 2TP / (2TP + FP + FN), which equals the harmonic mean whenever it is defined.
  m.f1 = ratio(2 * tp, 2 * tp + fp + fn, m.degenerate);
  return m;
}

double roc_auc(std::span<const double> scores, std::span<const Label> labels) {
  require_same_length(scores.size(), labels.size(), "roc_auc");
  require_both_classes(labels, "roc_auc");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Twice the Mann-Whitney U, accumulated in integers over groups of tied scores.
  std::uint64_t twice_u = 0;
  std::uint64_t negatives_below = 0;
  std::uint64_t n_pos = 0, n_neg = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    std::uint64_t pos = 0, neg = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] == 1 ? pos : neg) += 1;
      ++j;
    }
    twice_u += 2 * pos * negatives_below + pos * neg;
    negatives_below += neg;
    n_pos += pos;
    n_neg += neg;
    i = j;
  }
  return static_cast<double>(twice_u) / (2.0 * static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double brier(std::span<const double> probs, std::span<const Label> labels) {
  require_same_length(probs.size(), labels.size(), "brier");
  if (probs.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double d = probs[i] - static_cast<double>(labels[i]);
    s += d * d;
  }
  return s / static_cast<double>(probs.size());
}

double log_loss(std::span<const double> probs, std::span<const Label> labels, double eps) {
  require_same_length(probs.size(), labels.size(), "log_loss");
  double s = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double p = std::clamp(probs[i], eps, 1.0 - eps);
    s -= labels[i] == 1 ? std::log(p) : std::log1p(-p);
  }
  return probs.empty() ? 0.0 : s / static_cast<double>(probs.size());
}

double PlattModel::apply(double score) const {
  const double s = std::clamp(score, clamp_epsilon, 1.0 - clamp_epsilon);
  return sigmoid(a * logit(s) + b);
}

std::vector<double> PlattModel::apply(std::span<const double> scores) const {
  std::vector<double> out(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) out[i] = apply(scores[i]);
  return out;
}

nlohmann::json PlattModel::to_json() const {
  return {{"a", a},
          {"b", b},
          {"clamp_epsilon", clamp_epsilon},
          {"input_space", "logit"},
          {"initial_log_loss", initial_log_loss},
          {"final_log_loss", final_log_loss},
          {"iterations", iterations}};
}

PlattModel PlattModel::from_json(const nlohmann::json& j) {
  PlattModel m;
  try {
    m.a = j.at("a").get<double>();
    m.b = j.at("b").get<double>();
    m.clamp_epsilon = j.value("clamp_epsilon", m.clamp_epsilon);
    m.initial_log_loss = j.value("initial_log_loss", 0.0);
    m.final_log_loss = j.value("final_log_loss", 0.0);
    m.iterations = j.value("iterations", 0);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed platt model: ") + e.what());
  }
  return m;
}

PlattModel fit_platt(std::span<const double> scores, std::span<const Label> labels) {
  require_same_length(scores.size(), labels.size(), "fit_platt");
  require_both_classes(labels, "fit_platt");
  PlattModel m;
  const std::size_t n = scores.size();
  std::vector<double> s(n);
  for (std::size_t i = 0; i < n; ++i) s[i] = logit(std::clamp(scores[i], m.clamp_epsilon, 1.0 - m.clamp_epsilon));

  auto nll = [&](double a, double b) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double z = a * s[i] + b;
      // log(1 + e^z) - y z
      total += (z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z))) - (labels[i] == 1 ? z : 0.0);
    }
    return total / static_cast<double>(n);
  };

  double a = 1.0, b = 0.0;
  double f = nll(a, b);
  m.initial_log_loss = f;
  int it = 0;
  for (; it < 100; ++it) {
    double ga = 0, gb = 0, haa = 0, hab = 0, hbb = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double p = sigmoid(a * s[i] + b);
      const double r = p - labels[i];
      const double w = p * (1.0 - p);
      ga += r * s[i];
      gb += r;
      haa += w * s[i] * s[i];
      hab += w * s[i];
      hbb += w;
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    ga *= inv_n, gb *= inv_n, haa *= inv_n, hab *= inv_n, hbb *= inv_n;
    if (std::max(std::abs(ga), std::abs(gb)) < 1e-10) break;

    // Small ridge keeps the system solvable when all scores coincide.
    const double ridge = 1e-12 + 1e-10 * (haa + hbb);
    haa += ridge;
    hbb += ridge;
    const double det = haa * hbb - hab * hab;
    double da, db;
    if (det > 0 && std::isfinite(det)) {
      da = -(hbb * ga - hab * gb) / det;
      db = -(haa * gb - hab * ga) / det;
    } else {
      da = -ga;
      db = -gb;
    }
    double step = 1.0;
    bool improved = false;
    for (int bt = 0; bt < 50; ++bt) {
      const double fa = nll(a + step * da, b + step * db);
      if (fa <= f) {
        improved = fa < f;
        a += step * da;
        b += step * db;
        f = fa;
        break;
      }
      step *= 0.5;
    }
    if (!improved) break;
  }
  m.a = a;
  m.b = b;
  m.final_log_loss = f;
  m.iterations = it;
  return m;
}

ReliabilityCurve reliability_curve(std::span<const double> probs, std::span<const Label> labels, std::size_t n_bins) {
  require_same_length(probs.size(), labels.size(), "reliability_curve");
  if (n_bins == 0) throw ConfigError("reliability_curve: n_bins must be positive");
  ReliabilityCurve curve;
  curve.bins.resize(n_bins);
  const double width = static_cast<double>(n_bins);
  std::vector<double> sum_pred(n_bins, 0.0), sum_pos(n_bins, 0.0);
  for (std::size_t i = 0; i < n_bins; ++i) {
    curve.bins[i].low = static_cast<double>(i) / width;
    curve.bins[i].high = static_cast<double>(i + 1) / width;
  }
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double p = probs[i];
    if (!(p >= 0.0 && p <= 1.0)) throw DataError("reliability_curve: probability outside [0,1]");
    auto k = static_cast<std::size_t>(std::min(std::floor(p * width), width - 1));
    // Settle floating-point edge cases against the bin bounds themselves.
    while (k > 0 && p < curve.bins[k].low) --k;
    while (k + 1 < n_bins && p >= curve.bins[k].high) ++k;
    ++curve.bins[k].count;
    sum_pred[k] += p;
    sum_pos[k] += labels[i];
  }
  for (std::size_t k = 0; k < n_bins; ++k) {
    auto& bin = curve.bins[k];
    if (bin.count == 0) continue;
    const double c = static_cast<double>(bin.count);
    bin.mean_predicted = std::clamp(sum_pred[k] / c, bin.low, bin.high);
    bin.event_rate = sum_pos[k] / c;
  }
  return curve;
}

MetricsReport evaluate_scores(std::string name, std::span<const double> probs, std::span<const Label> labels,
                              double threshold) {
  MetricsReport r;
  r.name = std::move(name);
  r.n = probs.size();
  r.confusion = confusion_at_threshold(probs, labels, threshold);
  r.accuracy = r.confusion.accuracy();
  r.class0 = precision_recall_f1(r.confusion, 0);
  r.class1 = precision_recall_f1(r.confusion, 1);
  r.roc_auc = roc_auc(probs, labels);
  r.brier = brier(probs, labels);
  return r;
}

std::string format_fixed(double value, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, value);
  std::string s = buf;
  if (s.starts_with("-") && s.find_first_not_of("-0.") == std::string::npos) s.erase(0, 1);
  return s;
}

nlohmann::ordered_json metrics_to_json(const MetricsReport& m) {
  auto cls = [](const ClassMetrics& c) {
    return nlohmann::ordered_json{{"degenerate", c.degenerate},
                                  {"f1", round6(c.f1)},
                                  {"precision", round6(c.precision)},
                                  {"recall", round6(c.recall)}};
  };
  return {{"accuracy", round6(m.accuracy)},
          {"brier", round6(m.brier)},
          {"class0", cls(m.class0)},
          {"class1", cls(m.class1)},
          {"confusion",
           {{"fn", m.confusion.fn},
            {"fp", m.confusion.fp},
            {"threshold", round6(m.confusion.threshold)},
            {"tn", m.confusion.tn},
            {"tp", m.confusion.tp}}},
          {"n", m.n},
          {"name", m.name},
          {"roc_auc", round6(m.roc_auc)}};
}

nlohmann::ordered_json reliability_to_json(const ReliabilityCurve& c) {
  nlohmann::ordered_json bins = nlohmann::ordered_json::array();
  for (const auto& b : c.bins) {
    bins.push_back({{"count", b.count},
                    {"event_rate", b.event_rate ? nlohmann::ordered_json(round6(*b.event_rate)) : nullptr},
                    {"high", round6(b.high)},
                    {"low", round6(b.low)},
                    {"mean_predicted",
                     b.mean_predicted ? nlohmann::ordered_json(round6(*b.mean_predicted)) : nullptr}});
  }
  return {{"bins", bins}};
}

std::string metrics_table(std::span<const MetricsReport> rows) {
  std::string out = "model\tAcc\tP0\tR0\tF1_0\tP1\tR1\tF1_1\tROC_AUC\tBrier\n";
  for (const auto& r : rows) {
    out += r.name;
    for (double v : {r.accuracy, r.class0.precision, r.class0.recall, r.class0.f1, r.class1.precision,
                     r.class1.recall, r.class1.f1, r.roc_auc, r.brier}) {
      out += '\t';
      out += format_fixed(v);
    }
    out += '\n';
  }
  return out;
}

std::string reliability_table(const ReliabilityCurve& curve) {
  std::string out = "bin_low\tbin_high\tcount\tmean_pred\tevent_rate\n";
  for (const auto& b : curve.bins) {
    out += format_fixed(b.low) + '\t' + format_fixed(b.high) + '\t' + std::to_string(b.count) + '\t';
    out += (b.mean_predicted ? format_fixed(*b.mean_predicted) : "NA") + '\t';
    out += (b.event_rate ? format_fixed(*b.event_rate) : "NA") + '\n';
  }
  return out;
}

}  // namespace leakaudit
