#include "leakaudit/tabular.hpp"

#include <cmath>
#include <algorithm>
#include <set>

#include "leakaudit/error.hpp"

namespace leakaudit {

TabularPipeline TabularPipeline::fit(std::span<const StructuredRow> train_rows) {
  std::set<std::string> names;
  for (const auto& row : train_rows) {
    for (const auto& [name, _] : row) names.insert(name);
  }
  return fit(train_rows, {names.begin(), names.end()});
}

TabularPipeline TabularPipeline::fit(std::span<const StructuredRow> train_rows,
                                     std::vector<std::string> column_order) {
  if (train_rows.empty()) throw DataError("fit_tabular: no training rows");
  TabularPipeline p;
  p.columns_ = std::move(column_order);
  const std::size_t n_cols = p.columns_.size();
  p.impute_means_.assign(n_cols, 0.0);
  p.scale_means_.assign(n_cols, 0.0);
  p.scale_stds_.assign(n_cols, 1.0);
  p.constant_.assign(n_cols, false);

  for (std::size_t c = 0; c < n_cols; ++c) {
    const auto& name = p.columns_[c];
    double sum = 0.0;
    std::size_t observed = 0;
    for (const auto& row : train_rows) {
      auto it = row.find(name);
      if (it == row.end() || !it->second) continue;
      if (!std::isfinite(*it->second)) throw DataError("column '" + name + "' has a non-finite value");
      sum += *it->second;
      ++observed;
    }
    if (observed == 0) throw DataError("column '" + name + "' is observed in no training row");
    p.impute_means_[c] = sum / static_cast<double>(observed);
  }

  // Statistics of the imputed training block.
  const double n = static_cast<double>(train_rows.size());
  for (std::size_t c = 0; c < n_cols; ++c) {
    const auto& name = p.columns_[c];
    auto value = [&](const StructuredRow& row) {
      auto it = row.find(name);
      return (it == row.end() || !it->second) ? p.impute_means_[c] : *it->second;
    };
    double mean = 0.0;
    for (const auto& row : train_rows) mean += value(row);
    mean /= n;
    double var = 0.0;
    for (const auto& row : train_rows) {
      const double d = value(row) - mean;
      var += d * d;
    }
    var /= n;
    const double std = std::sqrt(var);
    p.scale_means_[c] = mean;
    // Relative floor: rounding noise on a constant column must not look like variance.
    p.constant_[c] = !(std > 1e-12 * std::max(1.0, std::abs(mean)));
    p.scale_stds_[c] = p.constant_[c] ? 1.0 : std;
  }
  return p;
}

std::vector<double> TabularPipeline::transform(const StructuredRow& row) const {
  for (const auto& [name, _] : row) {
    if (std::find(columns_.begin(), columns_.end(), name) == columns_.end()) {
      throw DataError("unknown structured column '" + name + "'");
    }
  }
  std::vector<double> out(columns_.size());
  for (std::size_t c = 0; c < columns_.size(); ++c) {
    auto it = row.find(columns_[c]);
    double v = (it == row.end() || !it->second) ? impute_means_[c] : *it->second;
    if (!std::isfinite(v)) throw DataError("column '" + columns_[c] + "' has a non-finite value");
    out[c] = constant_[c] ? 0.0 : (v - scale_means_[c]) / scale_stds_[c];
  }
  return out;
}

nlohmann::json TabularPipeline::to_json() const {
  return {{"columns", columns_},
          {"impute_means", impute_means_},
          {"scale_means", scale_means_},
          {"scale_stds", scale_stds_},
          {"constant", constant_}};
}

TabularPipeline TabularPipeline::from_json(const nlohmann::json& j) {
  TabularPipeline p;
  try {
    p.columns_ = j.at("columns").get<std::vector<std::string>>();
    p.impute_means_ = j.at("impute_means").get<std::vector<double>>();
    p.scale_means_ = j.at("scale_means").get<std::vector<double>>();
    p.scale_stds_ = j.at("scale_stds").get<std::vector<double>>();
    p.constant_ = j.at("constant").get<std::vector<bool>>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed tabular pipeline: ") + e.what());
  }
  const auto n = p.columns_.size();
  if (p.impute_means_.size() != n || p.scale_means_.size() != n || p.scale_stds_.size() != n ||
      p.constant_.size() != n) {
    throw DataError("malformed tabular pipeline: column arrays differ in length");
  }
  return p;
}

Matrix Matrix::select_rows(std::span<const std::size_t> indices) const {
  Matrix out(indices.size(), cols);
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const auto src = row(indices[k]);
    std::copy(src.begin(), src.end(), out.row(k).begin());
  }
  return out;
}

std::vector<double> fuse(std::span<const double> structured, const DocVector& text, std::size_t expected_dimension) {
  const std::size_t dim = structured.size() + text.dimension;
  if (expected_dimension != 0 && dim != expected_dimension) {
    throw DataError("fused dimension " + std::to_string(dim) + " does not match dataset schema " +
                    std::to_string(expected_dimension));
  }
  std::vector<double> out(dim, 0.0);
  std::copy(structured.begin(), structured.end(), out.begin());
  for (const auto& [c, v] : text.entries) {
    if (c >= text.dimension) throw DataError("text column out of range");
    out[structured.size() + c] = v;
  }
  return out;
}

}  // namespace leakaudit
