#include <gtest/gtest.h>

#include <filesystem>
#include <map>
#include <unistd.h>

#include "leakaudit/error.hpp"
#include "leakaudit/pipeline.hpp"

using namespace leakaudit;
namespace fs = std::filesystem;

namespace {

PipelineConfig small_config(const fs::path& out) {
  PipelineConfig c;
  c.synthetic.n_patients = 300;
  c.synthetic.note_horizon = 0;
  c.gbdt.n_trees = 20;
  c.stacking_folds = 3;
  c.output_dir = out;
  c.set_seed(42);
  return c;
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("leakaudit_test_" + std::to_string(::getpid()) + "_" + name);
  fs::remove_all(p);
  return p;
}

std::map<std::string, std::string> files_under(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).generic_string()] = read_file(e.path());
  }
  return out;
}

class SmallRun : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new fs::path(scratch("small_run"));
    report_ = new RunReport(run_pipeline(small_config(*dir_)));
  }
  static void TearDownTestSuite() {
    fs::remove_all(*dir_);
    delete report_;
    delete dir_;
  }
  static fs::path* dir_;
  static RunReport* report_;
};

fs::path* SmallRun::dir_ = nullptr;
RunReport* SmallRun::report_ = nullptr;

}  // namespace

TEST_F(SmallRun, WritesEveryTable) {
  for (const char* t : {"baseline_fusion", "audited_fusion", "calibrated_ensembles", "ablation", "final_test"}) {
    EXPECT_TRUE(fs::exists(*dir_ / "tables" / (std::string(t) + ".tsv"))) << t;
    EXPECT_FALSE(report_->tables.at(t).empty()) << t;
  }
  EXPECT_TRUE(fs::exists(*dir_ / "resolved_config.json"));
  EXPECT_TRUE(fs::exists(*dir_ / "split_manifest.json"));
  EXPECT_TRUE(fs::exists(*dir_ / "audit/audit_mask.json"));
  EXPECT_TRUE(fs::exists(*dir_ / "run_manifest.json"));
  ASSERT_TRUE(report_->audit_mask.has_value());
  EXPECT_FALSE(report_->audit_mask->terms.empty());
}

TEST_F(SmallRun, AblationDimensions) {
  EXPECT_EQ(report_->dimensions.at("ablation_structured"), 24u);
  EXPECT_EQ(report_->dimensions.at("structured"), 24u);
  EXPECT_EQ(report_->dimensions.at("fused_unaudited"), 24 + report_->dimensions.at("text_unaudited"));
  EXPECT_EQ(report_->dimensions.at("fused_audited"), 24 + report_->dimensions.at("text_audited"));
}

TEST_F(SmallRun, TableRowsReproducibleFromArtifacts) {
  for (const auto& [table, rows] : report_->tables) {
    for (const auto& row : rows) {
      const auto again = evaluate_artifact(*dir_, row.metrics.name, row.split);
      EXPECT_EQ(metrics_to_json(again).dump(), metrics_to_json(row.metrics).dump()) << table << "/" << row.metrics.name;
    }
  }
}

TEST_F(SmallRun, ResolvedConfigEchoesDefaults) {
  const auto j = nlohmann::json::parse(read_file(*dir_ / "resolved_config.json"));
  EXPECT_EQ(j.at("audit").at("quantile").get<double>(), 0.99);
  EXPECT_EQ(j.at("tfidf").at("min_df").get<int>(), 3);
  EXPECT_TRUE(j.at("corpus").at("synthetic").contains("negative_leak_rate"));
  // The echoed config loads back into an equivalent configuration.
  const auto back = PipelineConfig::from_json(j);
  EXPECT_EQ(back.to_json().dump(), j.dump());
}

TEST_F(SmallRun, ReportRerenderMatches) {
  const auto out = scratch("rerender");
  render_report(*dir_, out, false);
  for (const auto& [name, content] : files_under(out / "tables")) {
    EXPECT_EQ(content, read_file(*dir_ / "tables" / name)) << name;
  }
  fs::remove_all(out);
}

TEST_F(SmallRun, IdenticalRunsAreByteIdentical) {
  const auto other = scratch("small_run_repeat");
  run_pipeline(small_config(other));
  auto a = files_under(*dir_), b = files_under(other);
  a.erase("run_manifest.json");
  b.erase("run_manifest.json");
  ASSERT_EQ(a.size(), b.size());
  for (const auto& [name, content] : a) EXPECT_TRUE(b.count(name) && b[name] == content) << name;
  fs::remove_all(other);
}

TEST_F(SmallRun, PermutedTestLabelsLeaveFittedArtifactsUntouched) {
  const auto other = scratch("small_run_permuted");
  auto c = small_config(other);
  c.permute_test_labels = true;
  run_pipeline(c);
  const auto a = files_under(*dir_), b = files_under(other);
  for (const auto& [name, content] : a) {
    if (name.rfind("models/", 0) == 0 || name.rfind("audit/", 0) == 0) {
      ASSERT_TRUE(b.count(name)) << name;
      EXPECT_EQ(b.at(name), content) << name;
    }
  }
  EXPECT_NE(read_file(other / "tables/final_test.tsv"), read_file(*dir_ / "tables/final_test.tsv"));
  fs::remove_all(other);
}

TEST(PipelineConfigTest, Errors) {
  EXPECT_THROW(PipelineConfig::from_json(nlohmann::json{{"bogus", 1}}), ConfigError);
  EXPECT_THROW(
      PipelineConfig::from_json(nlohmann::json::parse(R"({"split":{"train":0.5,"val":0.1,"test":0.1}})")).validate(),
      ConfigError);
  EXPECT_THROW(PipelineConfig::from_json(nlohmann::json::parse(R"({"audit":{"mode":"both"}})")), ConfigError);
  EXPECT_THROW(PipelineConfig::load("/nonexistent/config.json"), ConfigError);
  EXPECT_THROW(
      PipelineConfig::from_json(nlohmann::json::parse(R"({"corpus":{"path":"/nonexistent/c.jsonl"}})")).validate(),
      ConfigError);
}

TEST(PipelineConfigTest, BundledConfigsLoad) {
  const fs::path root = LEAKAUDIT_SOURCE_DIR;
  EXPECT_NO_THROW(PipelineConfig::load(root / "configs/default.json"));
  EXPECT_NO_THROW(PipelineConfig::load(root / "configs/wide_schema.json"));
}

TEST(PipelineStages, FailureNamesTheStage) {
  const auto dir = scratch("bad_corpus");
  fs::create_directories(dir);
  // Every patient is positive, so the split cannot stratify.
  write_file(dir / "corpus.jsonl",
             R"({"patient_id":"a","los_days":1,"notes":[{"day_offset":0,"text":"ok"}],"structured":{"x":1}})"
             "\n"
             R"({"patient_id":"b","los_days":1,"notes":[{"day_offset":0,"text":"ok"}],"structured":{"x":2}})"
             "\n");
  PipelineConfig c;
  c.corpus_path = dir / "corpus.jsonl";
  c.output_dir = dir / "out";
  EXPECT_THROW(run_pipeline(c), DataError);
  const auto manifest = nlohmann::json::parse(read_file(dir / "out/run_manifest.json"));
  EXPECT_EQ(manifest.at("status"), "failed");
  EXPECT_FALSE(manifest.at("failed_stage").get<std::string>().empty());
  fs::remove_all(dir);
}

TEST(Scores, TsvRoundTrip) {
  const auto dir = scratch("scores");
  fs::create_directories(dir);
  const std::vector<ScoreRow> rows{{"a", 1, 0.25}, {"b", 0, 0.1 + 0.2}};
  write_file(dir / "s.tsv", scores_to_tsv(rows));
  const auto back = read_scores(dir / "s.tsv");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].prob, 0.1 + 0.2);
  write_file(dir / "bad.tsv", "a\t2\t0.5\n");
  EXPECT_THROW(read_scores(dir / "bad.tsv"), DataError);
  fs::remove_all(dir);
}
