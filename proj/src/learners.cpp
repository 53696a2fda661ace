#include "leakaudit/learners.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <limits>

#include "leakaudit/error.hpp"
#include "leakaudit/rng.hpp"

namespace leakaudit {

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double logit(double p) { return std::log(p) - std::log1p(-p); }

namespace {

// log(1 + exp(z))
double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

// Weighted log-loss of one example at margin z.
double log_loss_at(double z, Label y) { return softplus(z) - (y == 1 ? z : 0.0); }

// Row-compressed view of the nonzero entries of a dense matrix.
struct Csr {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::size_t> offsets;
  std::vector<std::uint32_t> columns;
  std::vector<double> values;

  explicit Csr(const Matrix& X) : rows(X.rows), cols(X.cols) {
    offsets.reserve(rows + 1);
    offsets.push_back(0);
    for (std::size_t i = 0; i < rows; ++i) {
      const auto r = X.row(i);
      for (std::size_t j = 0; j < cols; ++j) {
        if (r[j] != 0.0) {
          columns.push_back(static_cast<std::uint32_t>(j));
          values.push_back(r[j]);
        }
      }
      offsets.push_back(columns.size());
    }
  }
};

double objective_csr(const Csr& X, std::span<const Label> y, const ClassWeights& cw, double lambda,
                     std::span<const double> params, std::vector<double>* gradient) {
  const std::size_t d = X.cols;
  const double bias = params[d];
  const double inv_n = 1.0 / static_cast<double>(X.rows);
  if (gradient) gradient->assign(d + 1, 0.0);
  double loss = 0.0;
  for (std::size_t i = 0; i < X.rows; ++i) {
    double z = bias;
    for (std::size_t k = X.offsets[i]; k < X.offsets[i + 1]; ++k) z += params[X.columns[k]] * X.values[k];
    const double w = cw(y[i]);
    loss += w * log_loss_at(z, y[i]);
    if (gradient) {
      const double r = w * (sigmoid(z) - static_cast<double>(y[i])) * inv_n;
      for (std::size_t k = X.offsets[i]; k < X.offsets[i + 1]; ++k) (*gradient)[X.columns[k]] += r * X.values[k];
      (*gradient)[d] += r;
    }
  }
  loss *= inv_n;
  double sq = 0.0;
  for (std::size_t j = 0; j < d; ++j) sq += params[j] * params[j];
  loss += 0.5 * lambda * sq;
  if (gradient) {
    for (std::size_t j = 0; j < d; ++j) (*gradient)[j] += lambda * params[j];
  }
  return loss;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double max_abs(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

}  // namespace

ClassWeights ClassWeights::balanced(std::span<const Label> y) {
  double n1 = 0;
  for (Label l : y) n1 += l == 1 ? 1.0 : 0.0;
  const double n = static_cast<double>(y.size());
  const double n0 = n - n1;
  if (n1 == 0 || n0 == 0) throw DataError("class weights need both classes");
  return {n / (2.0 * n0), n / (2.0 * n1)};
}

void validate_training_data(const Matrix& X, std::span<const Label> y) {
  if (X.rows != y.size()) throw DataError("feature rows and labels differ in length");
  bool seen[2] = {false, false};
  for (Label l : y) {
    if (l != 0 && l != 1) throw DataError("labels must be 0 or 1");
    seen[l] = true;
  }
  if (!seen[0] || !seen[1]) throw DataError("training labels contain a single class");
  for (double v : X.data) {
    if (!std::isfinite(v)) throw DataError("non-finite feature value");
  }
}

double logistic_objective(const Matrix& X, std::span<const Label> y, const ClassWeights& cw, double l2_lambda,
                          std::span<const double> params, std::vector<double>* gradient) {
  if (params.size() != X.cols + 1) throw DataError("parameter vector has wrong length");
  return objective_csr(Csr(X), y, cw, l2_lambda, params, gradient);
}

double LogisticModel::decision(std::span<const double> x) const {
  if (x.size() != weights.size()) {
    throw DataError("logistic model expects " + std::to_string(weights.size()) + " features, got " +
                    std::to_string(x.size()));
  }
  return dot(weights, x) + bias;
}

double LogisticModel::predict_proba(std::span<const double> x) const { return sigmoid(decision(x)); }

LogisticModel train_logistic(const Matrix& X, std::span<const Label> y, const LogisticConfig& config) {
  validate_training_data(X, y);
  if (config.l2_lambda < 0) throw ConfigError("logistic: l2_lambda must be non-negative");
  if (config.max_iters < 0) throw ConfigError("logistic: max_iters must be non-negative");

  const Csr csr(X);
  const std::size_t d = X.cols;
  const ClassWeights cw = config.balanced_class_weights ? ClassWeights::balanced(y) : ClassWeights{};
  auto f = [&](std::span<const double> p, std::vector<double>* g) {
    return objective_csr(csr, y, cw, config.l2_lambda, p, g);
  };

  std::vector<double> x(d + 1, 0.0);
  if (config.init_scale > 0) {
    Rng rng(config.init_seed);
    for (std::size_t j = 0; j < d; ++j) x[j] = config.init_scale * rng.normal();
  }
  std::vector<double> g;
  double fx = f(x, &g);

  std::deque<std::pair<std::vector<double>, std::vector<double>>> memory;  // (s, y) pairs
  std::vector<double> dir(d + 1), x_new(d + 1), g_new;
  int it = 0;
  for (; it < config.max_iters; ++it) {
    if (max_abs(g) <= config.gradient_tolerance) break;

    // Two-loop recursion.
    dir = g;
    std::vector<double> alpha(memory.size());
    for (std::size_t k = memory.size(); k-- > 0;) {
      const auto& [s, yv] = memory[k];
      alpha[k] = dot(s, dir) / dot(yv, s);
      for (std::size_t j = 0; j <= d; ++j) dir[j] -= alpha[k] * yv[j];
    }
    if (!memory.empty()) {
      const auto& [s, yv] = memory.back();
      const double gamma = dot(s, yv) / dot(yv, yv);
      for (double& v : dir) v *= gamma;
    }
    for (std::size_t k = 0; k < memory.size(); ++k) {
      const auto& [s, yv] = memory[k];
      const double beta = dot(yv, dir) / dot(yv, s);
      for (std::size_t j = 0; j <= d; ++j) dir[j] += s[j] * (alpha[k] - beta);
    }
    for (double& v : dir) v = -v;

    double slope = dot(g, dir);
    if (!(slope < 0)) {
      memory.clear();
      for (std::size_t j = 0; j <= d; ++j) dir[j] = -g[j];
      slope = dot(g, dir);
    }

    // Armijo backtracking; the first steepest-descent step is scaled to unit length.
    double step = memory.empty() ? 1.0 / std::max(1.0, std::sqrt(-slope)) : 1.0;
    bool accepted = false;
    double f_new = fx;
    for (int bt = 0; bt < 60; ++bt) {
      for (std::size_t j = 0; j <= d; ++j) x_new[j] = x[j] + step * dir[j];
      f_new = f(x_new, &g_new);
      if (f_new <= fx + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      if (memory.empty()) break;  // no descent possible at working precision
      memory.clear();
      --it;
      continue;
    }

    std::vector<double> s(d + 1), yv(d + 1);
    for (std::size_t j = 0; j <= d; ++j) {
      s[j] = x_new[j] - x[j];
      yv[j] = g_new[j] - g[j];
    }
    if (dot(s, yv) > 1e-16 * dot(yv, yv)) {
      memory.emplace_back(std::move(s), std::move(yv));
      if (memory.size() > static_cast<std::size_t>(std::max(1, config.history))) memory.pop_front();
    }
    x.swap(x_new);
    g.swap(g_new);
    fx = f_new;
  }

  LogisticModel m;
  m.weights.assign(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(d));
  m.bias = x[d];
  m.l2_lambda = config.l2_lambda;
  m.class_weights = cw;
  m.iterations = it;
  m.final_gradient_norm = max_abs(g);
  return m;
}

nlohmann::json LogisticModel::to_json() const {
  return {{"type", "logistic"},
          {"weights", weights},
          {"bias", bias},
          {"l2_lambda", l2_lambda},
          {"class_weights", {class_weights.w0, class_weights.w1}},
          {"iterations", iterations},
          {"final_gradient_norm", final_gradient_norm}};
}

LogisticModel LogisticModel::from_json(const nlohmann::json& j) {
  LogisticModel m;
  try {
    m.weights = j.at("weights").get<std::vector<double>>();
    m.bias = j.at("bias").get<double>();
    m.l2_lambda = j.at("l2_lambda").get<double>();
    m.class_weights.w0 = j.at("class_weights").at(0).get<double>();
    m.class_weights.w1 = j.at("class_weights").at(1).get<double>();
    m.iterations = j.value("iterations", 0);
    m.final_gradient_norm = j.value("final_gradient_norm", 0.0);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed logistic model: ") + e.what());
  }
  return m;
}

void to_json(nlohmann::json& j, const LogisticConfig& c) {
  j = {{"l2_lambda", c.l2_lambda},
       {"max_iters", c.max_iters},
       {"gradient_tolerance", c.gradient_tolerance},
       {"balanced_class_weights", c.balanced_class_weights},
       {"history", c.history},
       {"init_scale", c.init_scale},
       {"init_seed", c.init_seed}};
}

void from_json(const nlohmann::json& j, LogisticConfig& c) {
  c.l2_lambda = j.value("l2_lambda", c.l2_lambda);
  c.max_iters = j.value("max_iters", c.max_iters);
  c.gradient_tolerance = j.value("gradient_tolerance", c.gradient_tolerance);
  c.balanced_class_weights = j.value("balanced_class_weights", c.balanced_class_weights);
  c.history = j.value("history", c.history);
  c.init_scale = j.value("init_scale", c.init_scale);
  c.init_seed = j.value("init_seed", c.init_seed);
}

// ---------------------------------------------------------------------------
// Gradient-boosted trees

double RegressionTree::predict(std::span<const double> x) const { return nodes[leaf_index(x)].value; }

int RegressionTree::leaf_index(std::span<const double> x) const {
  int n = 0;
  while (!nodes[n].is_leaf()) n = x[nodes[n].feature] < nodes[n].threshold ? nodes[n].left : nodes[n].right;
  return n;
}

int RegressionTree::depth() const {
  std::vector<int> depth_of(nodes.size(), 0);
  int best = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    best = std::max(best, depth_of[i]);
    if (!nodes[i].is_leaf()) {
      depth_of[nodes[i].left] = depth_of[i] + 1;
      depth_of[nodes[i].right] = depth_of[i] + 1;
    }
  }
  return best;
}

double GbdtModel::margin(std::span<const double> x) const {
  if (x.size() != n_features_) {
    throw DataError("gbdt model expects " + std::to_string(n_features_) + " features, got " +
                    std::to_string(x.size()));
  }
  double sum = 0.0;
  for (const auto& t : trees_) sum += t.predict(x);
  return base_score_ + config_.learning_rate * sum;
}

double GbdtModel::predict_proba(std::span<const double> x) const { return sigmoid(margin(x)); }

void to_json(nlohmann::json& j, const GbdtConfig& c) {
  j = {{"n_trees", c.n_trees},     {"learning_rate", c.learning_rate},
       {"max_depth", c.max_depth}, {"min_child_weight", c.min_child_weight},
       {"leaf_l2", c.leaf_l2},     {"balanced_class_weights", c.balanced_class_weights}};
}

void from_json(const nlohmann::json& j, GbdtConfig& c) {
  c.n_trees = j.value("n_trees", c.n_trees);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.max_depth = j.value("max_depth", c.max_depth);
  c.min_child_weight = j.value("min_child_weight", c.min_child_weight);
  c.leaf_l2 = j.value("leaf_l2", c.leaf_l2);
  c.balanced_class_weights = j.value("balanced_class_weights", c.balanced_class_weights);
}

namespace {

struct Entry {
  double value;
  std::uint32_t row;
};

struct SplitCandidate {
  double gain = 0.0;
  int feature = -1;
  double threshold = 0.0;
};

// Node-level gradient statistics.
struct Stats {
  double g = 0.0;
  double h = 0.0;
  std::size_t count = 0;
};

double midpoint(double lo, double hi) {
  const double mid = lo + (hi - lo) / 2.0;
  return mid > lo ? mid : hi;
}

class TreeBuilder {
 public:
  TreeBuilder(const Matrix& X, const std::vector<std::vector<Entry>>& columns, const GbdtConfig& config)
      : X_(X), columns_(columns), config_(config) {}

  // Grows one tree; node_of_row ends holding each row's leaf.
  RegressionTree build(std::span<const double> g, std::span<const double> h, std::vector<int>& node_of_row) {
    RegressionTree tree;
    const std::size_t n = X_.rows;
    node_of_row.assign(n, 0);
    tree.nodes.emplace_back();
    stats_.assign(1, Stats{});
    for (std::size_t i = 0; i < n; ++i) add(stats_[0], g[i], h[i]);

    std::vector<int> active{0};
    for (int depth = 0; depth < config_.max_depth && !active.empty(); ++depth) {
      const auto best = find_splits(active, g, h, node_of_row);
      std::vector<int> next;
      std::vector<int> split_of(tree.nodes.size(), -1);
      for (std::size_t s = 0; s < active.size(); ++s) {
        if (best[s].feature < 0) continue;
        const int id = active[s];
        auto& node = tree.nodes[id];
        node.feature = best[s].feature;
        node.threshold = best[s].threshold;
        node.gain = best[s].gain;
        node.left = static_cast<int>(tree.nodes.size());
        node.right = node.left + 1;
        tree.nodes.emplace_back();
        tree.nodes.emplace_back();
        stats_.resize(tree.nodes.size());
        split_of.resize(tree.nodes.size(), -1);
        split_of[id] = static_cast<int>(s);
        next.push_back(node.left);
        next.push_back(node.right);
      }
      for (std::size_t i = 0; i < n; ++i) {
        const int id = node_of_row[i];
        if (id >= static_cast<int>(split_of.size()) || split_of[id] < 0) continue;
        const auto& node = tree.nodes[id];
        const int child = X_(i, static_cast<std::size_t>(node.feature)) < node.threshold ? node.left : node.right;
        node_of_row[i] = child;
        add(stats_[child], g[i], h[i]);
      }
      active.swap(next);
    }

    for (std::size_t id = 0; id < tree.nodes.size(); ++id) {
      auto& node = tree.nodes[id];
      node.cover = stats_[id].h;
      if (node.is_leaf()) node.value = -stats_[id].g / (stats_[id].h + config_.leaf_l2);
    }
    return tree;
  }

 private:
  static void add(Stats& s, double g, double h) {
    s.g += g;
    s.h += h;
    ++s.count;
  }

  double score(double g, double h) const { return g * g / (h + config_.leaf_l2); }

  std::vector<SplitCandidate> find_splits(const std::vector<int>& active, std::span<const double> g,
                                          std::span<const double> h, const std::vector<int>& node_of_row) {
    const std::size_t k = active.size();
    std::vector<int> slot_of(stats_.size(), -1);
    for (std::size_t s = 0; s < k; ++s) slot_of[active[s]] = static_cast<int>(s);
    std::vector<SplitCandidate> best(k);
    std::vector<double> parent_score(k);
    for (std::size_t s = 0; s < k; ++s) {
      const auto& st = stats_[active[s]];
      parent_score[s] = score(st.g, st.h);
    }

    std::vector<Stats> nonzero(k), left(k);
    std::vector<double> last(k);
    auto slot = [&](std::uint32_t row) {
      const int id = node_of_row[row];
      return id < static_cast<int>(slot_of.size()) ? slot_of[id] : -1;
    };

    for (std::size_t f = 0; f < columns_.size(); ++f) {
      const auto& entries = columns_[f];
      std::fill(nonzero.begin(), nonzero.end(), Stats{});
      std::fill(left.begin(), left.end(), Stats{});
      for (const auto& e : entries) {
        if (const int s = slot(e.row); s >= 0) add(nonzero[s], g[e.row], h[e.row]);
      }

      auto consider = [&](std::size_t s, double value, double gs, double hs, std::size_t count) {
        auto& l = left[s];
        if (l.count > 0 && value > last[s]) {
          const auto& total = stats_[active[s]];
          const double hl = l.h;
          const double hr = total.h - l.h;
          if (hl >= config_.min_child_weight && hr >= config_.min_child_weight) {
            const double gl = l.g;
            const double gr = total.g - l.g;
            const double gain = score(gl, hl) + score(gr, hr) - parent_score[s];
            if (gain > best[s].gain) {
              best[s] = {gain, static_cast<int>(f), midpoint(last[s], value)};
            }
          }
        }
        l.g += gs;
        l.h += hs;
        l.count += count;
        last[s] = value;
      };
      auto zero_blocks = [&]() {
        for (std::size_t s = 0; s < k; ++s) {
          const auto& total = stats_[active[s]];
          const std::size_t zc = total.count - nonzero[s].count;
          if (zc > 0) consider(s, 0.0, total.g - nonzero[s].g, total.h - nonzero[s].h, zc);
        }
      };

      bool zeros_done = false;
      for (const auto& e : entries) {
        if (!zeros_done && e.value > 0.0) {
          zero_blocks();
          zeros_done = true;
        }
        if (const int s = slot(e.row); s >= 0) consider(static_cast<std::size_t>(s), e.value, g[e.row], h[e.row], 1);
      }
      if (!zeros_done) zero_blocks();
    }
    return best;
  }

  const Matrix& X_;
  const std::vector<std::vector<Entry>>& columns_;
  const GbdtConfig& config_;
  std::vector<Stats> stats_;
};

double weighted_loss(std::span<const double> margin, std::span<const Label> y, std::span<const double> w,
                     double total_weight) {
  double s = 0.0;
  for (std::size_t i = 0; i < margin.size(); ++i) s += w[i] * log_loss_at(margin[i], y[i]);
  return s / total_weight;
}

}  // namespace

GbdtModel train_gbdt(const Matrix& X, std::span<const Label> y, const GbdtConfig& config) {
  validate_training_data(X, y);
  if (config.n_trees < 0 || config.max_depth < 0) throw ConfigError("gbdt: n_trees and max_depth must be >= 0");
  if (!(config.learning_rate > 0 && config.learning_rate <= 1)) throw ConfigError("gbdt: learning_rate in (0,1]");
  if (config.min_child_weight < 0 || config.leaf_l2 < 0) {
    throw ConfigError("gbdt: min_child_weight and leaf_l2 must be >= 0");
  }

  const std::size_t n = X.rows;
  const ClassWeights cw = config.balanced_class_weights ? ClassWeights::balanced(y) : ClassWeights{};
  std::vector<double> w(n);
  double pos = 0.0, neg = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = cw(y[i]);
    (y[i] == 1 ? pos : neg) += w[i];
  }

  GbdtModel model;
  model.config_ = config;
  model.n_features_ = X.cols;
  model.base_score_ = std::log(pos / neg);

  std::vector<std::vector<Entry>> columns(X.cols);
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = X.row(i);
    for (std::size_t j = 0; j < X.cols; ++j) {
      if (r[j] != 0.0) columns[j].push_back({r[j], static_cast<std::uint32_t>(i)});
    }
  }
  for (auto& c : columns) {
    std::sort(c.begin(), c.end(), [](const Entry& a, const Entry& b) {
      return a.value < b.value || (a.value == b.value && a.row < b.row);
    });
  }

  std::vector<double> margin(n, model.base_score_), candidate(n), g(n), h(n);
  const double total_weight = pos + neg;
  double loss = weighted_loss(margin, y, w, total_weight);
  model.training_loss_.push_back(loss);

  TreeBuilder builder(X, columns, config);
  std::vector<int> leaf_of_row;
  for (int round = 0; round < config.n_trees; ++round) {
    for (std::size_t i = 0; i < n; ++i) {
      const double p = sigmoid(margin[i]);
      g[i] = w[i] * (p - static_cast<double>(y[i]));
      h[i] = w[i] * p * (1.0 - p);
    }
    RegressionTree tree = builder.build(g, h, leaf_of_row);

    // Step-halving guard keeps the per-round training loss non-increasing.
    double scale = 1.0;
    double new_loss = loss;
    for (int attempt = 0; attempt < 40; ++attempt) {
      for (std::size_t i = 0; i < n; ++i) {
        candidate[i] = margin[i] + config.learning_rate * scale * tree.nodes[leaf_of_row[i]].value;
      }
      new_loss = weighted_loss(candidate, y, w, total_weight);
      if (new_loss <= loss) break;
      scale *= 0.5;
    }
    if (new_loss > loss) {
      scale = 0.0;
      new_loss = loss;
      candidate = margin;
    }
    if (scale != 1.0) {
      for (auto& node : tree.nodes) {
        if (node.is_leaf()) node.value *= scale;
      }
    }
    margin.swap(candidate);
    loss = new_loss;
    model.training_loss_.push_back(loss);
    model.trees_.push_back(std::move(tree));
  }
  return model;
}

nlohmann::json GbdtModel::to_json() const {
  nlohmann::json trees = nlohmann::json::array();
  for (const auto& t : trees_) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& nd : t.nodes) {
      if (nd.is_leaf()) {
        nodes.push_back({{"value", nd.value}, {"cover", nd.cover}});
      } else {
        nodes.push_back({{"feature", nd.feature},
                         {"threshold", nd.threshold},
                         {"left", nd.left},
                         {"right", nd.right},
                         {"gain", nd.gain},
                         {"cover", nd.cover}});
      }
    }
    trees.push_back(std::move(nodes));
  }
  return {{"type", "gbdt"},
          {"config", config_},
          {"base_score", base_score_},
          {"n_features", n_features_},
          {"training_loss", training_loss_},
          {"trees", trees}};
}

GbdtModel GbdtModel::from_json(const nlohmann::json& j) {
  GbdtModel m;
  try {
    m.config_ = j.at("config").get<GbdtConfig>();
    m.base_score_ = j.at("base_score").get<double>();
    m.n_features_ = j.at("n_features").get<std::size_t>();
    m.training_loss_ = j.value("training_loss", std::vector<double>{});
    for (const auto& tj : j.at("trees")) {
      RegressionTree t;
      for (const auto& nj : tj) {
        TreeNode nd;
        nd.cover = nj.value("cover", 0.0);
        if (nj.contains("feature")) {
          nd.feature = nj.at("feature").get<int>();
          nd.threshold = nj.at("threshold").get<double>();
          nd.left = nj.at("left").get<int>();
          nd.right = nj.at("right").get<int>();
          nd.gain = nj.value("gain", 0.0);
        } else {
          nd.value = nj.at("value").get<double>();
        }
        t.nodes.push_back(nd);
      }
      m.trees_.push_back(std::move(t));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed gbdt model: ") + e.what());
  }
  return m;
}

// ---------------------------------------------------------------------------

Model train_model(const LearnerSpec& spec, const Matrix& X, std::span<const Label> y) {
  return std::visit(
      [&](const auto& config) -> Model {
        using T = std::decay_t<decltype(config)>;
        if constexpr (std::is_same_v<T, LogisticConfig>) {
          return train_logistic(X, y, config);
        } else {
          return train_gbdt(X, y, config);
        }
      },
      spec);
}

double predict_proba(const Model& model, std::span<const double> x) {
  return std::visit([&](const auto& m) { return m.predict_proba(x); }, model);
}

std::vector<double> predict_proba(const Model& model, const Matrix& X) {
  std::vector<double> out(X.rows);
  for (std::size_t i = 0; i < X.rows; ++i) out[i] = predict_proba(model, X.row(i));
  return out;
}

std::size_t model_dimension(const Model& model) {
  if (const auto* lr = std::get_if<LogisticModel>(&model)) return lr->weights.size();
  return std::get<GbdtModel>(model).n_features();
}

nlohmann::json model_to_json(const Model& model, const std::string& schema_hash) {
  nlohmann::json j = std::visit([](const auto& m) { return m.to_json(); }, model);
  j["schema_hash"] = schema_hash;
  return j;
}

Model model_from_json(const nlohmann::json& j) {
  const auto type = j.value("type", std::string{});
  if (type == "logistic") return LogisticModel::from_json(j);
  if (type == "gbdt") return GbdtModel::from_json(j);
  throw DataError("unknown model type '" + type + "'");
}

std::string schema_hash(std::span<const std::string> feature_names) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& name : feature_names) {
    for (unsigned char c : name) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    h ^= 0x0a;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace leakaudit
