#ifndef LEAKAUDIT_TABULAR_HPP
#define LEAKAUDIT_TABULAR_HPP

#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "leakaudit/cohort.hpp"
#include "leakaudit/textprep.hpp"

namespace leakaudit {

// Train-fitted mean imputation followed by z-score scaling (population std).
// Zero-variance columns keep scale_std = 1 and always map to 0.
class TabularPipeline {
 public:
  TabularPipeline() = default;

  // Column order is the sorted union of column names seen in `train_rows`.
  static TabularPipeline fit(std::span<const StructuredRow> train_rows);
  // Explicit column order; columns absent from every row are an error.
  static TabularPipeline fit(std::span<const StructuredRow> train_rows, std::vector<std::string> column_order);

  std::vector<double> transform(const StructuredRow& row) const;

  std::size_t size() const { return columns_.size(); }
  const std::vector<std::string>& columns() const { return columns_; }
  const std::vector<double>& impute_means() const { return impute_means_; }
  const std::vector<double>& scale_means() const { return scale_means_; }
  const std::vector<double>& scale_stds() const { return scale_stds_; }
  bool is_constant(std::size_t column) const { return constant_[column]; }

  nlohmann::json to_json() const;
  static TabularPipeline from_json(const nlohmann::json& j);

 private:
  std::vector<std::string> columns_;
  std::vector<double> impute_means_;
  std::vector<double> scale_means_;
  std::vector<double> scale_stds_;
  std::vector<bool> constant_;
};

// Dense row-major matrix of fused features.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
  std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }
  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

  Matrix select_rows(std::span<const std::size_t> indices) const;
};

// Structured block followed by the densified text block. When
// `expected_dimension` is non-zero the fused width must equal it.
std::vector<double> fuse(std::span<const double> structured, const DocVector& text,
                         std::size_t expected_dimension = 0);

}  // namespace leakaudit

#endif  // LEAKAUDIT_TABULAR_HPP
