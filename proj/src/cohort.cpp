#include "leakaudit/cohort.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "leakaudit/error.hpp"
#include "leakaudit/rng.hpp"

#ifndef LEAKAUDIT_DATA_DIR
#define LEAKAUDIT_DATA_DIR "data"
#endif

namespace leakaudit {

Label derive_outcome(const PatientRecord& record) {
  if (record.los_days < 1) {
    throw DataError("invalid record '" + record.patient_id + "': los_days " +
                    std::to_string(record.los_days) + " < 1");
  }
  return record.los_days == 1 ? 1 : 0;
}

std::vector<Note> eligible_notes(const PatientRecord& record) {
  const int d = record.los_days;
  derive_outcome(record);
  const int last_day = d == 1 ? 0 : d - 2;
  std::vector<Note> out;
  for (const auto& note : record.notes) {
    if (note.day_offset <= last_day) out.push_back(note);
  }
  return out;
}

std::string patient_document(const PatientRecord& record) {
  std::string doc;
  bool first = true;
  for (const auto& note : eligible_notes(record)) {
    if (!first) doc += '\n';
    doc += note.text;
    first = false;
  }
  return doc;
}

namespace {

void validate_fractions(const SplitFractions& f) {
  if (f.train < 0 || f.val < 0 || f.test < 0) {
    throw ConfigError("split fractions must be non-negative");
  }
  if (std::abs(f.train + f.val + f.test - 1.0) > 1e-9) {
    throw ConfigError("split fractions must sum to 1");
  }
}

}  // namespace

std::array<std::size_t, 3> largest_remainder(std::size_t count, const SplitFractions& fractions) {
  validate_fractions(fractions);
  const std::array<double, 3> f = {fractions.train, fractions.val, fractions.test};
  std::array<std::size_t, 3> seats{};
  std::array<double, 3> remainder{};
  std::size_t assigned = 0;
  for (std::size_t k = 0; k < 3; ++k) {
    const double quota = f[k] * static_cast<double>(count);
    // Absorb representation error such as 6.000000000000001 or 5.999999999999999.
    const double base = std::floor(quota + 1e-9);
    seats[k] = static_cast<std::size_t>(base);
    remainder[k] = std::max(0.0, quota - base);
    assigned += seats[k];
  }
  while (assigned > count) {
    // Only reachable through the epsilon above; take back from the last split.
    for (std::size_t k = 3; k-- > 0;) {
      if (seats[k] > 0) {
        --seats[k];
        --assigned;
        break;
      }
    }
  }
  std::array<std::size_t, 3> order = {0, 1, 2};
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b] + 1e-12; });
  for (std::size_t i = 0; assigned < count; i = (i + 1) % 3) {
    ++seats[order[i]];
    ++assigned;
  }
  return seats;
}

CohortSplit stratified_split(std::span<const PatientRecord> records, const SplitFractions& fractions,
                             std::uint64_t seed) {
  validate_fractions(fractions);
  std::vector<std::size_t> by_class[2];
  std::set<std::string> seen;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!seen.insert(records[i].patient_id).second) {
      throw DataError("duplicate patient_id '" + records[i].patient_id + "'");
    }
    by_class[derive_outcome(records[i])].push_back(i);
  }
  for (int c = 0; c < 2; ++c) {
    if (by_class[c].empty()) {
      throw DataError("cannot stratify: class " + std::to_string(c) + " has no members");
    }
  }

  Rng rng(seed);
  std::vector<int> assignment(records.size(), -1);
  for (int c = 1; c >= 0; --c) {
    auto& idx = by_class[c];
    rng.shuffle(std::span<std::size_t>(idx));
    const auto seats = largest_remainder(idx.size(), fractions);
    std::size_t pos = 0;
    for (int s = 0; s < 3; ++s) {
      for (std::size_t k = 0; k < seats[s]; ++k) assignment[idx[pos++]] = s;
    }
  }

  CohortSplit split;
  split.fractions = fractions;
  split.seed = seed;
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto& target = assignment[i] == 0 ? split.train_ids : assignment[i] == 1 ? split.val_ids : split.test_ids;
    target.push_back(records[i].patient_id);
  }
  return split;
}

void SyntheticConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError("synthetic config: " + what); };
  if (n_patients < 10) fail("n_patients must be >= 10");
  if (!(positive_rate > 0.0 && positive_rate < 1.0)) fail("positive_rate must be in (0,1)");
  if (n_numeric < 0 || n_boolean < 0) fail("column counts must be non-negative");
  if (!(missing_rate >= 0.0 && missing_rate < 1.0)) fail("missing_rate must be in [0,1)");
  if (!(leak_rate >= 0.0 && leak_rate <= 1.0)) fail("leak_rate must be in [0,1]");
  if (!(negative_leak_rate == -1.0 || (negative_leak_rate >= 0.0 && negative_leak_rate <= 1.0))) {
    fail("negative_leak_rate must be in [0,1] or -1");
  }
  if (!(signal_strength >= 0.0 && signal_strength <= 1.0)) fail("signal_strength must be in [0,1]");
  if (max_los < 2) fail("max_los must be >= 2");
  if (filler_vocab_size < 0) fail("filler_vocab_size must be non-negative");
  if (filler_words < 1) fail("filler_words must be positive");
  if (note_horizon < 0) fail("note_horizon must be >= 0");
}

std::filesystem::path default_data_dir() {
  if (const char* env = std::getenv("LEAKAUDIT_DATA_DIR"); env != nullptr && *env != '\0') {
    return env;
  }
  return LEAKAUDIT_DATA_DIR;
}

NoteTemplates NoteTemplates::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open templates file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("templates file " + path.string() + ": " + e.what());
  }
  NoteTemplates t;
  auto pool = [&](const char* key, std::vector<std::string>& out) {
    if (!j.contains(key) || !j[key].is_array() || j[key].empty()) {
      throw ConfigError("templates file " + path.string() + ": missing or empty pool '" + key + "'");
    }
    out = j[key].get<std::vector<std::string>>();
  };
  pool("recovery_good", t.recovery_good);
  pool("recovery_slow", t.recovery_slow);
  pool("pain_good", t.pain_good);
  pool("pain_poor", t.pain_poor);
  pool("neutral", t.neutral);
  pool("proxy_phrases", t.proxy_phrases);
  pool("late_stay_phrases", t.late_stay_phrases);
  return t;
}

namespace {

constexpr std::uint64_t kColumnStream = 0x5eedc0105eedULL;

struct ColumnProfile {
  double center;
  double scale;
  double loading;  // signed class separation, 0 for pure-noise columns
};

std::vector<ColumnProfile> column_profiles(std::uint64_t seed, int count, std::uint64_t salt) {
  std::vector<ColumnProfile> out;
  out.reserve(count);
  for (int c = 0; c < count; ++c) {
    Rng rng = Rng::derive(seed ^ kColumnStream ^ salt, static_cast<std::uint64_t>(c));
    ColumnProfile p;
    p.center = rng.uniform(-50.0, 150.0);
    p.scale = rng.uniform(0.5, 20.0);
    const double magnitude = rng.uniform(0.3, 1.0);
    const bool informative = c % 3 != 2;
    p.loading = informative ? (rng.bernoulli(0.5) ? magnitude : -magnitude) : 0.0;
    out.push_back(p);
  }
  return out;
}

std::string column_name(const char* prefix, int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%03d", prefix, index);
  return buf;
}

std::string capitalize(std::string s) {
  if (!s.empty() && s[0] >= 'a' && s[0] <= 'z') s[0] = static_cast<char>(s[0] - 'a' + 'A');
  return s;
}

std::string compose_note(Rng& rng, const NoteTemplates& t, const SyntheticConfig& config, bool positive,
                         bool eligible, bool leaker) {
  const double aligned = 0.5 + 0.25 * config.signal_strength;
  auto cue = [&](const std::vector<std::string>& good, const std::vector<std::string>& bad) {
    const bool favourable = rng.bernoulli(aligned) == positive;
    return rng.pick(favourable ? good : bad);
  };

  std::vector<std::string> sentences;
  sentences.push_back(rng.pick(t.neutral));
  sentences.push_back(cue(t.recovery_good, t.recovery_slow));
  sentences.push_back(cue(t.pain_good, t.pain_poor));
  sentences.push_back(cue(t.recovery_good, t.recovery_slow));
  sentences.push_back(rng.pick(t.neutral));
  if (config.filler_vocab_size > 0) {
    std::string filler;
    for (int k = 0; k < config.filler_words; ++k) {
      // Squared uniform gives a skewed (Zipf-like) word frequency profile.
      const double u = rng.uniform();
      const auto w = static_cast<int>(u * u * config.filler_vocab_size);
      if (k) filler += ' ';
      filler += "w" + std::to_string(w);
    }
    sentences.push_back(filler);
  }
  if (eligible && leaker) {
    const auto at = static_cast<std::size_t>(rng.below(sentences.size())) + 1;
    sentences.insert(sentences.begin() + static_cast<std::ptrdiff_t>(at), rng.pick(t.proxy_phrases));
  }
  if (!eligible) sentences.push_back(rng.pick(t.late_stay_phrases));

  std::string text;
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    if (i) text += ' ';
    text += capitalize(sentences[i]) + '.';
  }
  return text;
}

}  // namespace

std::vector<PatientRecord> generate_corpus(const SyntheticConfig& config) {
  config.validate();
  const auto path = config.templates_path.empty() ? default_data_dir() / "templates.json" : config.templates_path;
  return generate_corpus(config, NoteTemplates::load(path));
}

std::vector<PatientRecord> generate_corpus(const SyntheticConfig& config, const NoteTemplates& templates) {
  config.validate();
  const auto numeric = column_profiles(config.seed, config.n_numeric, 0x1);
  const auto boolean = column_profiles(config.seed, config.n_boolean, 0x2);

  std::vector<PatientRecord> records;
  records.reserve(static_cast<std::size_t>(config.n_patients));
  for (int i = 0; i < config.n_patients; ++i) {
    Rng rng = Rng::derive(config.seed, static_cast<std::uint64_t>(i));
    PatientRecord r;
    char id[32];
    std::snprintf(id, sizeof id, "P%06d", i + 1);
    r.patient_id = id;
    const bool positive = rng.bernoulli(config.positive_rate);
    r.los_days = positive ? 1 : static_cast<int>(rng.between(2, config.max_los));
    const double sign = positive ? 1.0 : -1.0;

    for (int c = 0; c < config.n_numeric; ++c) {
      const auto& p = numeric[c];
      const double z = rng.normal() + sign * 0.75 * config.signal_strength * p.loading;
      const bool missing = rng.bernoulli(config.missing_rate);
      r.structured[column_name("num", c)] =
          missing ? std::nullopt : std::optional<double>(std::round((p.center + p.scale * z) * 1e4) / 1e4);
    }
    for (int c = 0; c < config.n_boolean; ++c) {
      const double prob = 0.5 + sign * 0.3 * config.signal_strength * boolean[c].loading;
      const bool value = rng.bernoulli(prob);
      const bool missing = rng.bernoulli(config.missing_rate);
      r.structured[column_name("flag", c)] = missing ? std::nullopt : std::optional<double>(value ? 1.0 : 0.0);
    }

    const double leak_prob = positive ? config.leak_rate
                                     : config.negative_leak_rate >= 0.0 ? config.negative_leak_rate
                                                                        : config.leak_rate / 10.0;
    const bool leaker = rng.bernoulli(leak_prob);
    const int last_eligible = r.los_days == 1 ? 0 : r.los_days - 2;
    for (int day = 0; day <= std::min(r.los_days, config.note_horizon); ++day) {
      const bool eligible = day <= last_eligible;
      r.notes.push_back({day, compose_note(rng, templates, config, positive, eligible, leaker)});
    }
    records.push_back(std::move(r));
  }
  return records;
}

nlohmann::ordered_json record_to_json(const PatientRecord& record) {
  nlohmann::ordered_json j;
  j["patient_id"] = record.patient_id;
  j["los_days"] = record.los_days;
  j["notes"] = nlohmann::ordered_json::array();
  for (const auto& n : record.notes) {
    nlohmann::ordered_json nj;
    nj["day_offset"] = n.day_offset;
    nj["text"] = n.text;
    j["notes"].push_back(std::move(nj));
  }
  j["structured"] = nlohmann::ordered_json::object();
  for (const auto& [name, value] : record.structured) {
    j["structured"][name] = value ? nlohmann::ordered_json(*value) : nlohmann::ordered_json(nullptr);
  }
  return j;
}

PatientRecord record_from_json(const nlohmann::json& j) {
  PatientRecord r;
  try {
    r.patient_id = j.at("patient_id").get<std::string>();
    r.los_days = j.at("los_days").get<int>();
    for (const auto& nj : j.at("notes")) {
      Note n{nj.at("day_offset").get<int>(), nj.at("text").get<std::string>()};
      if (n.day_offset < 0) throw DataError("note day_offset < 0");
      r.notes.push_back(std::move(n));
    }
    if (j.contains("structured")) {
      for (const auto& [name, value] : j.at("structured").items()) {
        if (value.is_null()) {
          r.structured[name] = std::nullopt;
        } else if (value.is_boolean()) {
          r.structured[name] = value.get<bool>() ? 1.0 : 0.0;
        } else if (value.is_number()) {
          r.structured[name] = value.get<double>();
        } else if (value.is_string()) {
          // Numeric strings are coerced; anything else is a data error.
          const auto s = value.get<std::string>();
          std::size_t used = 0;
          double v = 0;
          try {
            v = std::stod(s, &used);
          } catch (const std::exception&) {
            used = 0;
          }
          if (used != s.size() || s.empty()) throw DataError("column '" + name + "' is not numeric: " + s);
          r.structured[name] = v;
        } else {
          throw DataError("column '" + name + "' has unsupported type");
        }
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed corpus record: ") + e.what());
  }
  return r;
}

std::string corpus_to_jsonl(std::span<const PatientRecord> records) {
  std::string out;
  for (const auto& r : records) {
    out += record_to_json(r).dump();
    out += '\n';
  }
  return out;
}

void write_corpus(const std::filesystem::path& path, std::span<const PatientRecord> records) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write corpus " + path.string());
  out << corpus_to_jsonl(records);
}

std::vector<PatientRecord> read_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open corpus " + path.string());
  std::vector<PatientRecord> records;
  std::set<std::string> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto r = record_from_json(nlohmann::json::parse(line));
      if (!ids.insert(r.patient_id).second) throw DataError("duplicate patient_id '" + r.patient_id + "'");
      records.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return records;
}

nlohmann::json split_to_json(const CohortSplit& split) {
  nlohmann::json j;
  j["fractions"] = {{"train", split.fractions.train}, {"val", split.fractions.val}, {"test", split.fractions.test}};
  j["seed"] = split.seed;
  j["train_ids"] = split.train_ids;
  j["val_ids"] = split.val_ids;
  j["test_ids"] = split.test_ids;
  return j;
}

CohortSplit split_from_json(const nlohmann::json& j) {
  CohortSplit s;
  try {
    s.fractions.train = j.at("fractions").at("train").get<double>();
    s.fractions.val = j.at("fractions").at("val").get<double>();
    s.fractions.test = j.at("fractions").at("test").get<double>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.train_ids = j.at("train_ids").get<std::vector<std::string>>();
    s.val_ids = j.at("val_ids").get<std::vector<std::string>>();
    s.test_ids = j.at("test_ids").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed split manifest: ") + e.what());
  }
  return s;
}

void to_json(nlohmann::json& j, const SyntheticConfig& c) {
  j = {{"n_patients", c.n_patients},
       {"positive_rate", c.positive_rate},
       {"n_numeric", c.n_numeric},
       {"n_boolean", c.n_boolean},
       {"missing_rate", c.missing_rate},
       {"leak_rate", c.leak_rate},
       {"negative_leak_rate", c.negative_leak_rate >= 0.0 ? c.negative_leak_rate : c.leak_rate / 10.0},
       {"signal_strength", c.signal_strength},
       {"max_los", c.max_los},
       {"seed", c.seed},
       {"filler_vocab_size", c.filler_vocab_size},
       {"filler_words", c.filler_words},
       {"note_horizon", c.note_horizon},
       {"templates_path", c.templates_path.string()}};
}

void from_json(const nlohmann::json& j, SyntheticConfig& c) {
  c.n_patients = j.value("n_patients", c.n_patients);
  c.positive_rate = j.value("positive_rate", c.positive_rate);
  c.n_numeric = j.value("n_numeric", c.n_numeric);
  c.n_boolean = j.value("n_boolean", c.n_boolean);
  c.missing_rate = j.value("missing_rate", c.missing_rate);
  c.leak_rate = j.value("leak_rate", c.leak_rate);
  c.negative_leak_rate = j.value("negative_leak_rate", c.negative_leak_rate);
  c.signal_strength = j.value("signal_strength", c.signal_strength);
  c.max_los = j.value("max_los", c.max_los);
  c.seed = j.value("seed", c.seed);
  c.filler_vocab_size = j.value("filler_vocab_size", c.filler_vocab_size);
  c.filler_words = j.value("filler_words", c.filler_words);
  c.note_horizon = j.value("note_horizon", c.note_horizon);
  c.templates_path = j.value("templates_path", c.templates_path.string());
}

}  // namespace leakaudit
