#ifndef LEAKAUDIT_PIPELINE_HPP
#define LEAKAUDIT_PIPELINE_HPP

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "leakaudit/attribution.hpp"
#include "leakaudit/cohort.hpp"
#include "leakaudit/ensemble.hpp"
#include "leakaudit/evalcal.hpp"
#include "leakaudit/learners.hpp"
#include "leakaudit/tabular.hpp"
#include "leakaudit/textprep.hpp"

namespace leakaudit {

enum class CalibrationMode { kPaperReplication, kClean };

std::string to_string(CalibrationMode mode);
CalibrationMode calibration_mode_from_string(std::string_view s);

enum class LearnerKind { kLogistic, kGbdt };

struct AuditConfig {
  double quantile = 0.99;
  AuditMode mode = AuditMode::kUnion;
  std::filesystem::path lexicon_path;  // empty = bundled proxy lexicon
  int top_k = 20;
};

struct AblationConfig {
  LearnerKind structured_learner = LearnerKind::kGbdt;
  LearnerKind text_learner = LearnerKind::kLogistic;
};

enum class PipelineStop { kFeaturize, kTrain, kAudit, kFull };

struct PipelineConfig {
  std::filesystem::path corpus_path;  // empty = synthetic corpus
  SyntheticConfig synthetic;
  SplitFractions fractions;
  std::uint64_t split_seed = 42;
  std::filesystem::path mask_rules_path;  // empty = bundled rules
  TfidfConfig tfidf;
  std::vector<std::string> structured_columns;  // empty = sorted columns seen in training
  LogisticConfig logistic;
  GbdtConfig gbdt;
  LogisticConfig probe;
  AuditConfig audit;
  AblationConfig ablation;
  CalibrationMode calibration_mode = CalibrationMode::kPaperReplication;
  int stacking_folds = 5;
  std::uint64_t stacking_seed = 42;
  std::filesystem::path output_dir = "leakaudit_out";
  std::uint64_t seed = 42;
  bool write_plots = true;
  bool write_matrices = false;
  // Debug: shuffle test labels after the split. Only evaluation outputs may change.
  bool permute_test_labels = false;
  PipelineStop stop = PipelineStop::kFull;

  // Sets the global seed and every seed derived from it.
  void set_seed(std::uint64_t s);
  std::filesystem::path resolved_mask_rules() const;
  std::filesystem::path resolved_lexicon() const;
  void validate() const;

  static PipelineConfig load(const std::filesystem::path& path);
  static PipelineConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

// Labelled, split and normalized cohort.
struct PreparedCohort {
  std::vector<PatientRecord> records;
  std::vector<Label> labels;
  CohortSplit split;
  std::vector<std::size_t> train, val, test;  // indices into records
  std::vector<std::string> documents;         // normalized eligible-note documents
};

PreparedCohort prepare_cohort(std::vector<PatientRecord> records, const SplitFractions& fractions,
                              std::uint64_t split_seed);

std::vector<Label> gather(std::span<const Label> labels, std::span<const std::size_t> indices);

// Feature rows for the given records. Either block may be absent.
Matrix build_matrix(std::span<const std::size_t> indices, std::span<const std::string> documents,
                    std::span<const PatientRecord> records, const TfidfModel* text, const TabularPipeline* tabular);

std::vector<std::string> feature_names(const TfidfModel* text, const TabularPipeline* tabular);

struct TableRow {
  MetricsReport metrics;
  std::string model_file;  // artifact the row was scored from
  std::string split;       // "val" or "test"
};

struct RunReport {
  nlohmann::json resolved_config;
  CohortSplit split;
  std::optional<AuditMask> audit_mask;
  std::map<std::string, std::vector<TableRow>> tables;
  std::map<std::string, ReliabilityCurve> reliability;
  std::map<std::string, std::size_t> dimensions;
  std::vector<std::string> artifacts;  // relative to the output directory
  std::vector<std::string> stages;     // completed stages in order

  const TableRow& row(const std::string& table, const std::string& model) const;
  nlohmann::json to_json() const;
};

// Runs every stage in order and writes artifacts under config.output_dir.
// Stage failures are rethrown as StageError after writing run_manifest.json.
RunReport run_pipeline(const PipelineConfig& config);

// Score file rows: patient_id, label, probability.
struct ScoreRow {
  std::string patient_id;
  Label label = 0;
  double prob = 0.0;
};

std::string scores_to_tsv(std::span<const ScoreRow> rows);
std::vector<ScoreRow> read_scores(const std::filesystem::path& path);

// Reliability diagram as standalone SVG.
std::string reliability_svg(const std::map<std::string, ReliabilityCurve>& curves, const std::string& title);

// Re-scores a serialized model on a split of a finished run directory.
MetricsReport evaluate_artifact(const std::filesystem::path& run_dir, const std::string& model_name,
                                const std::string& split_name);

// Rewrites tables/ and plots/ of a run from its report.json.
void render_report(const std::filesystem::path& run_dir, const std::filesystem::path& out_dir, bool plots);

void write_file(const std::filesystem::path& path, const std::string& content);
std::string read_file(const std::filesystem::path& path);
std::string dump_json(const nlohmann::json& j);

}  // namespace leakaudit

#endif  // LEAKAUDIT_PIPELINE_HPP
