#ifndef LEAKAUDIT_COHORT_HPP
#define LEAKAUDIT_COHORT_HPP

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace leakaudit {

// A clinical note positioned by postoperative day (day 0 = day of surgery).
struct Note {
  int day_offset = 0;
  std::string text;

  bool operator==(const Note&) const = default;
};

// Structured covariates by column name; std::nullopt marks a missing value.
using StructuredRow = std::map<std::string, std::optional<double>>;

struct PatientRecord {
  std::string patient_id;
  int los_days = 1;  // discharge day offset D after surgery
  std::vector<Note> notes;
  StructuredRow structured;

  bool operator==(const PatientRecord&) const = default;
};

using Label = int;  // 0 or 1

// Next-day discharge outcome: 1 iff D == 1. Throws DataError for D < 1.
Label derive_outcome(const PatientRecord& record);

// Notes available before the discharge decision window:
// D == 1 keeps day-0 notes only, D >= 2 keeps day_offset <= D - 2.
std::vector<Note> eligible_notes(const PatientRecord& record);

// Patient-level document: eligible notes joined by a single newline.
std::string patient_document(const PatientRecord& record);

struct SplitFractions {
  double train = 0.64;
  double val = 0.16;
  double test = 0.20;
};

struct CohortSplit {
  std::vector<std::string> train_ids;
  std::vector<std::string> val_ids;
  std::vector<std::string> test_ids;
  SplitFractions fractions;
  std::uint64_t seed = 0;
};

// Largest-remainder allocation of `count` items over the three fractions.
// Ties in the remainder go to the earlier split (train, val, test).
std::array<std::size_t, 3> largest_remainder(std::size_t count, const SplitFractions& fractions);

// Per class: seeded shuffle of ids (in input order), then the first block goes
// to train, the next to val, the rest to test. Each id list is returned in
// input-record order.
CohortSplit stratified_split(std::span<const PatientRecord> records, const SplitFractions& fractions,
                             std::uint64_t seed);

struct SyntheticConfig {
  int n_patients = 2000;
  double positive_rate = 0.22;
  int n_numeric = 16;
  int n_boolean = 8;
  double missing_rate = 0.1;
  double leak_rate = 0.8;
  // Proxy phrases in notes of patients who were not discharged next day
  // (planned discharges that slipped). Negative = leak_rate / 10.
  double negative_leak_rate = -1.0;
  double signal_strength = 0.5;
  int max_los = 7;
  int note_horizon = 2;  // notes are written for days 0..min(los_days, note_horizon)
  std::uint64_t seed = 42;
  // Extra random filler words drawn per note from a pool of this many
  // pseudo-words; 0 disables. Used to reach a large vocabulary.
  int filler_vocab_size = 0;
  int filler_words = 8;  // filler tokens appended to each note when the filler vocabulary is non-empty
  std::filesystem::path templates_path;  // empty = bundled data/templates.json

  void validate() const;
};

// Phrase pools the generator composes notes from.
struct NoteTemplates {
  std::vector<std::string> recovery_good;
  std::vector<std::string> recovery_slow;
  std::vector<std::string> pain_good;
  std::vector<std::string> pain_poor;
  std::vector<std::string> neutral;
  std::vector<std::string> proxy_phrases;
  std::vector<std::string> late_stay_phrases;

  static NoteTemplates load(const std::filesystem::path& path);
};

std::filesystem::path default_data_dir();

// Deterministic synthetic cohort. Each patient draws from its own stream
// derived from (seed, patient index).
std::vector<PatientRecord> generate_corpus(const SyntheticConfig& config);
std::vector<PatientRecord> generate_corpus(const SyntheticConfig& config, const NoteTemplates& templates);

// JSON Lines corpus I/O. Outcomes are never written.
nlohmann::ordered_json record_to_json(const PatientRecord& record);
PatientRecord record_from_json(const nlohmann::json& j);
void write_corpus(const std::filesystem::path& path, std::span<const PatientRecord> records);
std::string corpus_to_jsonl(std::span<const PatientRecord> records);
std::vector<PatientRecord> read_corpus(const std::filesystem::path& path);

nlohmann::json split_to_json(const CohortSplit& split);
CohortSplit split_from_json(const nlohmann::json& j);

void to_json(nlohmann::json& j, const SyntheticConfig& c);
void from_json(const nlohmann::json& j, SyntheticConfig& c);

}  // namespace leakaudit

#endif  // LEAKAUDIT_COHORT_HPP
