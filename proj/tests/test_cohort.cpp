#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "leakaudit/cohort.hpp"
#include "leakaudit/error.hpp"
#include "leakaudit/rng.hpp"
#include "leakaudit/textprep.hpp"

using namespace leakaudit;

namespace {

PatientRecord record_with_days(int los, std::initializer_list<int> days) {
  PatientRecord r;
  r.patient_id = "P1";
  r.los_days = los;
  for (int d : days) r.notes.push_back({d, "note day " + std::to_string(d)});
  return r;
}

std::vector<int> days_of(const std::vector<Note>& notes) {
  std::vector<int> out;
  for (const auto& n : notes) out.push_back(n.day_offset);
  return out;
}

std::vector<PatientRecord> labelled(int n, int positives) {
  std::vector<PatientRecord> out;
  for (int i = 0; i < n; ++i) {
    PatientRecord r;
    r.patient_id = "P" + std::to_string(1000 + i);
    r.los_days = i < positives ? 1 : 3;
    out.push_back(r);
  }
  return out;
}

std::size_t count_label(const std::vector<std::string>& ids, const std::vector<PatientRecord>& recs, Label y) {
  std::size_t n = 0;
  for (const auto& id : ids) {
    auto it = std::find_if(recs.begin(), recs.end(), [&](const auto& r) { return r.patient_id == id; });
    if (derive_outcome(*it) == y) ++n;
  }
  return n;
}

}  // namespace

TEST(DeriveOutcome, NextDayIsPositive) {
  EXPECT_EQ(derive_outcome(record_with_days(1, {})), 1);
  EXPECT_EQ(derive_outcome(record_with_days(5, {})), 0);
  EXPECT_THROW(derive_outcome(record_with_days(0, {})), DataError);
}

TEST(EligibleNotes, Examples) {
  EXPECT_EQ(days_of(eligible_notes(record_with_days(1, {0, 1}))), (std::vector<int>{0}));
  EXPECT_EQ(days_of(eligible_notes(record_with_days(4, {0, 1, 2, 3, 4}))), (std::vector<int>{0, 1, 2}));
  EXPECT_EQ(days_of(eligible_notes(record_with_days(2, {0, 1}))), (std::vector<int>{0}));
}

TEST(EligibleNotes, FuzzNeverExposesLateNotes) {
  Rng rng(7);
  for (int trial = 0; trial < 2000; ++trial) {
    PatientRecord r;
    r.los_days = static_cast<int>(rng.between(1, 12));
    const int n = static_cast<int>(rng.between(0, 8));
    for (int k = 0; k < n; ++k) r.notes.push_back({static_cast<int>(rng.between(0, 14)), "x"});
    for (const auto& note : eligible_notes(r)) {
      if (r.los_days == 1) {
        EXPECT_EQ(note.day_offset, 0);
      } else {
        EXPECT_LT(note.day_offset, r.los_days - 1);
      }
    }
  }
}

TEST(Split, LargestRemainderExample) {
  const auto pos = largest_remainder(30, {0.64, 0.16, 0.20});
  const auto neg = largest_remainder(70, {0.64, 0.16, 0.20});
  EXPECT_EQ(pos, (std::array<std::size_t, 3>{19, 5, 6}));
  EXPECT_EQ(neg, (std::array<std::size_t, 3>{45, 11, 14}));

  const auto recs = labelled(100, 30);
  const auto split = stratified_split(recs, {0.64, 0.16, 0.20}, 42);
  EXPECT_EQ(count_label(split.train_ids, recs, 1), 19u);
  EXPECT_EQ(count_label(split.val_ids, recs, 1), 5u);
  EXPECT_EQ(count_label(split.test_ids, recs, 1), 6u);
  EXPECT_EQ(count_label(split.train_ids, recs, 0), 45u);
  EXPECT_EQ(count_label(split.val_ids, recs, 0), 11u);
  EXPECT_EQ(count_label(split.test_ids, recs, 0), 14u);
}

TEST(Split, DegenerateFractions) {
  const auto recs = labelled(10, 5);
  const auto split = stratified_split(recs, {1.0, 0.0, 0.0}, 3);
  EXPECT_EQ(split.train_ids.size(), 10u);
  EXPECT_TRUE(split.val_ids.empty());
  EXPECT_TRUE(split.test_ids.empty());
}

TEST(Split, Deterministic) {
  const auto recs = labelled(100, 30);
  const auto a = stratified_split(recs, {}, 9);
  const auto b = stratified_split(recs, {}, 9);
  EXPECT_EQ(a.train_ids, b.train_ids);
  EXPECT_EQ(a.val_ids, b.val_ids);
  EXPECT_EQ(a.test_ids, b.test_ids);
  EXPECT_EQ(split_to_json(a).dump(), split_to_json(b).dump());
}

TEST(Split, SingleClassIsAnError) { EXPECT_THROW(stratified_split(labelled(10, 0), {}, 1), DataError); }

TEST(Split, PartitionProperty) {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = static_cast<int>(rng.between(10, 300));
    const int pos = static_cast<int>(rng.between(1, n - 1));
    const auto recs = labelled(n, pos);
    const auto s = stratified_split(recs, {0.64, 0.16, 0.20}, rng.next());
    std::set<std::string> all;
    for (const auto* ids : {&s.train_ids, &s.val_ids, &s.test_ids}) {
      for (const auto& id : *ids) EXPECT_TRUE(all.insert(id).second) << "duplicate id " << id;
    }
    EXPECT_EQ(all.size(), static_cast<std::size_t>(n));
    const auto p = largest_remainder(static_cast<std::size_t>(pos), s.fractions);
    EXPECT_EQ(count_label(s.train_ids, recs, 1), p[0]);
    EXPECT_EQ(count_label(s.val_ids, recs, 1), p[1]);
    EXPECT_EQ(count_label(s.test_ids, recs, 1), p[2]);
  }
}

TEST(Generator, DeterministicUnderSeed) {
  SyntheticConfig cfg;
  cfg.n_patients = 200;
  EXPECT_EQ(corpus_to_jsonl(generate_corpus(cfg)), corpus_to_jsonl(generate_corpus(cfg)));
  auto other = cfg;
  other.seed = 43;
  EXPECT_NE(corpus_to_jsonl(generate_corpus(cfg)), corpus_to_jsonl(generate_corpus(other)));
}

TEST(Generator, NoProxiesWithoutLeakage) {
  SyntheticConfig cfg;
  cfg.n_patients = 500;
  cfg.leak_rate = 0.0;
  const auto lexicon = Lexicon::load(default_data_dir() / "proxy_lexicon.json");
  for (const auto& r : generate_corpus(cfg)) {
    for (const auto& n : eligible_notes(r)) {
      const auto doc = normalize_text(n.text);
      for (const auto& term : ngrams(doc, 1, 2)) {
        EXPECT_FALSE(lexicon.matches_term(term)) << r.patient_id << ": " << n.text;
      }
    }
  }
}

TEST(Generator, PrevalenceNearTarget) {
  SyntheticConfig cfg;
  const auto recs = generate_corpus(cfg);
  ASSERT_EQ(recs.size(), 2000u);
  double pos = 0;
  for (const auto& r : recs) pos += derive_outcome(r);
  EXPECT_NEAR(pos / 2000.0, 0.22, 0.02);
}

TEST(Generator, RecordShape) {
  SyntheticConfig cfg;
  cfg.n_patients = 300;
  for (const auto& r : generate_corpus(cfg)) {
    EXPECT_EQ(r.structured.size(), 24u);
    if (derive_outcome(r) == 1) {
      EXPECT_EQ(r.los_days, 1);
    } else {
      EXPECT_GE(r.los_days, 2);
      EXPECT_LE(r.los_days, cfg.max_los);
    }
    ASSERT_EQ(r.notes.size(), static_cast<std::size_t>(std::min(r.los_days, cfg.note_horizon) + 1));
    EXPECT_FALSE(eligible_notes(r).empty());
  }
}

TEST(Generator, InvalidConfig) {
  SyntheticConfig cfg;
  cfg.positive_rate = 1.5;
  EXPECT_THROW(generate_corpus(cfg), ConfigError);
  cfg = {};
  cfg.n_patients = 5;
  EXPECT_THROW(generate_corpus(cfg), ConfigError);
  cfg = {};
  cfg.max_los = 1;
  EXPECT_THROW(generate_corpus(cfg), ConfigError);
}

TEST(CorpusIo, JsonLinesRoundTrip) {
  SyntheticConfig cfg;
  cfg.n_patients = 50;
  const auto recs = generate_corpus(cfg);
  const auto path = std::filesystem::temp_directory_path() / "leakaudit_roundtrip.jsonl";
  write_corpus(path, recs);
  EXPECT_EQ(read_corpus(path), recs);
  std::filesystem::remove(path);
}

TEST(CorpusIo, MalformedRecord) {
  EXPECT_THROW(record_from_json(nlohmann::json{{"patient_id", "x"}}), DataError);
  EXPECT_THROW(record_from_json(nlohmann::json::parse(
                   R"({"patient_id":"x","los_days":2,"notes":[],"structured":{"a":"abc"}})")),
               DataError);
}
