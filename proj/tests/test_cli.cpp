#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <sys/wait.h>
#include <unistd.h>

#include "leakaudit/pipeline.hpp"

using namespace leakaudit;
namespace fs = std::filesystem;

namespace {

int run_cli(const std::string& args) {
  const std::string cmd = std::string(LEAKAUDIT_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("leakaudit_cli_" + std::to_string(::getpid()) + "_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST(Cli, UsageErrors) {
  EXPECT_EQ(run_cli(""), 2);
  EXPECT_EQ(run_cli("pipeline --no-such-flag"), 2);
  EXPECT_EQ(run_cli("filter --corpus /nonexistent.jsonl --out /tmp/x"), 2);
  EXPECT_EQ(run_cli("pipeline --mode sideways --out /tmp/x"), 2);
  EXPECT_EQ(run_cli("--help"), 0);
}

TEST(Cli, DataErrorExitCode) {
  const auto dir = scratch("data_error");
  write_file(dir / "broken.jsonl", "{not json\n");
  EXPECT_EQ(run_cli("filter --corpus " + (dir / "broken.jsonl").string() + " --out " + (dir / "out").string()), 3);
  fs::remove_all(dir);
}

TEST(Cli, GenerateFilterRoundTrip) {
  const auto dir = scratch("generate");
  ASSERT_EQ(run_cli("generate --seed 3 --out " + dir.string() + " --config " LEAKAUDIT_SOURCE_DIR "/configs/default.json"), 0);
  const auto recs = read_corpus(dir / "corpus.jsonl");
  EXPECT_EQ(recs.size(), 2000u);
  ASSERT_EQ(run_cli("filter --corpus " + (dir / "corpus.jsonl").string() + " --out " + (dir / "f").string()), 0);
  for (const auto& r : read_corpus(dir / "f/eligible_corpus.jsonl")) EXPECT_EQ(r.notes, eligible_notes(r));
  fs::remove_all(dir);
}

TEST(Cli, MaskWithoutMatchesIsIdentity) {
  const auto dir = scratch("mask");
  const std::string corpus =
      R"({"patient_id":"a","los_days":2,"notes":[{"day_offset":0,"text":"Pain well controlled."}],"structured":{"x":1.0}})"
      "\n"
      R"({"patient_id":"b","los_days":1,"notes":[{"day_offset":0,"text":"Follow-up MRI tomorrow."}],"structured":{"x":null}})"
      "\n";
  write_file(dir / "in.jsonl", corpus);
  ASSERT_EQ(run_cli("mask --corpus " + (dir / "in.jsonl").string() + " --out " + (dir / "out").string()), 0);
  EXPECT_EQ(read_file(dir / "out/masked_corpus.jsonl"), corpus);
  EXPECT_EQ(read_file(dir / "out/mask_diff.jsonl"), "");

  write_file(dir / "leaky.jsonl",
             R"({"patient_id":"c","los_days":1,"notes":[{"day_offset":0,"text":"Dispo home."}],"structured":{}})" "\n");
  ASSERT_EQ(run_cli("mask --corpus " + (dir / "leaky.jsonl").string() + " --out " + (dir / "out2").string()), 0);
  EXPECT_EQ(read_corpus(dir / "out2/masked_corpus.jsonl")[0].notes[0].text, "[MASK] home.");
  EXPECT_NE(read_file(dir / "out2/mask_diff.jsonl"), "");
  fs::remove_all(dir);
}

TEST(Cli, EvaluatePerfectScores) {
  const auto dir = scratch("evaluate");
  write_file(dir / "s.tsv", "patient_id\tlabel\tprob\na\t1\t1\nb\t0\t0\nc\t1\t1\n");
  ASSERT_EQ(run_cli("evaluate --scores " + (dir / "s.tsv").string() + " --out " + (dir / "m").string()), 0);
  const auto m = nlohmann::json::parse(read_file(dir / "m/metrics.json"));
  EXPECT_EQ(m.at("brier").get<double>(), 0.0);
  EXPECT_EQ(m.at("roc_auc").get<double>(), 1.0);
  fs::remove_all(dir);
}

TEST(Cli, AuditFromTermTable) {
  const auto dir = scratch("audit");
  std::string table = "column\tterm\tscore\tsupport\n";
  for (int i = 0; i < 200; ++i) {
    table += std::to_string(i) + "\tterm" + std::to_string(i) + "\t" + std::to_string((i + 1) / 200.0) + "\t3\n";
  }
  write_file(dir / "scores.tsv", table);
  ASSERT_EQ(run_cli("audit --term-scores " + (dir / "scores.tsv").string() + " --quantile 0.99 --out " +
                    (dir / "out").string()),
            0);
  const auto mask = nlohmann::json::parse(read_file(dir / "out/audit_mask.json"));
  EXPECT_DOUBLE_EQ(mask.at("threshold").get<double>(), 0.99);
  EXPECT_GE(mask.at("terms").size(), 2u);
  fs::remove_all(dir);
}
