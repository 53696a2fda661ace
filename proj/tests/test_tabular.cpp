#include <gtest/gtest.h>

#include <cmath>

#include "leakaudit/error.hpp"
#include "leakaudit/rng.hpp"
#include "leakaudit/tabular.hpp"

using namespace leakaudit;

namespace {

StructuredRow row(std::initializer_list<std::pair<const std::string, std::optional<double>>> values) {
  return StructuredRow(values);
}

}  // namespace

TEST(Tabular, ImputeMean) {
  const std::vector<StructuredRow> rows{row({{"x", 1.0}}), row({{"x", std::nullopt}}), row({{"x", 3.0}})};
  const auto t = TabularPipeline::fit(rows);
  EXPECT_DOUBLE_EQ(t.impute_means()[0], 2.0);
  EXPECT_DOUBLE_EQ(t.transform(row({{"x", std::nullopt}}))[0], 0.0);
}

TEST(Tabular, BooleanMean) {
  const std::vector<StructuredRow> rows{row({{"flag", 1.0}}), row({{"flag", 0.0}})};
  EXPECT_DOUBLE_EQ(TabularPipeline::fit(rows).impute_means()[0], 0.5);
}

TEST(Tabular, ConstantColumnMapsToZero) {
  const std::vector<StructuredRow> rows{row({{"c", 5.0}}), row({{"c", 5.0}}), row({{"c", 5.0}})};
  const auto t = TabularPipeline::fit(rows);
  EXPECT_TRUE(t.is_constant(0));
  EXPECT_DOUBLE_EQ(t.transform(row({{"c", 5.0}}))[0], 0.0);
  EXPECT_DOUBLE_EQ(t.transform(row({{"c", 9.0}}))[0], 0.0);
}

TEST(Tabular, ZScore) {
  // mean 2, population std 1
  const std::vector<StructuredRow> rows{row({{"x", 1.0}}), row({{"x", 3.0}})};
  const auto t = TabularPipeline::fit(rows);
  EXPECT_DOUBLE_EQ(t.scale_means()[0], 2.0);
  EXPECT_DOUBLE_EQ(t.scale_stds()[0], 1.0);
  EXPECT_DOUBLE_EQ(t.transform(row({{"x", 3.0}}))[0], 1.0);
}

TEST(Tabular, Errors) {
  const std::vector<StructuredRow> rows{row({{"x", 1.0}}), row({{"x", 2.0}})};
  const auto t = TabularPipeline::fit(rows);
  EXPECT_THROW(t.transform(row({{"x", 1.0}, {"y", 2.0}})), DataError);
  const std::vector<StructuredRow> missing{row({{"x", std::nullopt}}), row({{"x", std::nullopt}})};
  EXPECT_THROW(TabularPipeline::fit(missing), DataError);
  EXPECT_THROW(TabularPipeline::fit(rows, {"x", "never"}), DataError);
}

TEST(Tabular, ColumnOrder) {
  const std::vector<StructuredRow> rows{row({{"b", 1.0}, {"a", 2.0}}), row({{"b", 3.0}, {"a", 4.0}})};
  EXPECT_EQ(TabularPipeline::fit(rows).columns(), (std::vector<std::string>{"a", "b"}));
  const auto t = TabularPipeline::fit(rows, {"b", "a"});
  EXPECT_EQ(t.columns(), (std::vector<std::string>{"b", "a"}));
  EXPECT_DOUBLE_EQ(t.transform(row({{"b", 3.0}, {"a", 2.0}}))[0], 1.0);
}

TEST(Tabular, TrainColumnsStandardised) {
  Rng rng(3);
  std::vector<StructuredRow> rows;
  for (int i = 0; i < 400; ++i) {
    StructuredRow r;
    for (int c = 0; c < 5; ++c) {
      r["c" + std::to_string(c)] = rng.bernoulli(0.15) ? std::nullopt : std::optional<double>(rng.normal() * (c + 1) + c);
    }
    rows.push_back(r);
  }
  const auto t = TabularPipeline::fit(rows);
  for (std::size_t c = 0; c < t.size(); ++c) {
    std::vector<double> col;
    for (const auto& r : rows) col.push_back(t.transform(r)[c]);
    double mean = 0;
    for (double v : col) mean += v;
    mean /= col.size();
    double var = 0;
    for (double v : col) var += (v - mean) * (v - mean);
    var /= col.size();
    EXPECT_NEAR(mean, 0.0, 1e-9);
    EXPECT_NEAR(std::sqrt(var), 1.0, 1e-9);
  }
}

TEST(Tabular, SerializationRoundTrip) {
  const std::vector<StructuredRow> rows{row({{"x", 1.0}, {"y", 0.0}}), row({{"x", 4.0}, {"y", 1.0}})};
  const auto t = TabularPipeline::fit(rows);
  const auto back = TabularPipeline::from_json(t.to_json());
  EXPECT_EQ(back.to_json().dump(), t.to_json().dump());
  EXPECT_EQ(back.transform(rows[1]), t.transform(rows[1]));
}

TEST(Fuse, Dimensions) {
  const std::vector<double> s(627, 0.5);
  DocVector text;
  text.dimension = 10000;
  text.entries = {{3, 0.6}, {9999, 0.8}};
  const auto f = fuse(s, text, 10627);
  ASSERT_EQ(f.size(), 10627u);
  EXPECT_DOUBLE_EQ(f[627 + 3], 0.6);
  EXPECT_DOUBLE_EQ(f[10626], 0.8);
  EXPECT_THROW(fuse(s, text, 10000), DataError);

  const auto text_only = fuse({}, text);
  EXPECT_EQ(text_only, text.dense());
  const auto structured_only = fuse(s, DocVector{});
  EXPECT_EQ(structured_only, s);
}
