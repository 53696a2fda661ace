#include "leakaudit/textprep.hpp"

#include <unicode/normalizer2.h>
#include <unicode/unistr.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include "leakaudit/error.hpp"

namespace leakaudit {

std::string normalize_text(std::string_view text) {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* nfkd = icu::Normalizer2::getNFKDInstance(status);
  if (U_FAILURE(status)) throw Error("ICU NFKD normalizer unavailable");
  const icu::UnicodeString source =
      icu::UnicodeString::fromUTF8(icu::StringPiece(text.data(), static_cast<int32_t>(text.size())));
  const icu::UnicodeString decomposed = nfkd->normalize(source, status);
  if (U_FAILURE(status)) throw Error("NFKD normalization failed");

  std::string out;
  out.reserve(text.size());
  for (int32_t i = 0; i < decomposed.length();) {
    const UChar32 cp = decomposed.char32At(i);
    if (cp >= 0 && cp < 0x80) out.push_back(static_cast<char>(cp));
    i += U16_LENGTH(cp);
  }
  return out;
}

namespace {

bool is_alnum(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9');
}

char lower(char c) { return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c; }

bool iequals_at(std::string_view text, std::size_t pos, std::string_view needle) {
  if (needle.empty() || pos + needle.size() > text.size()) return false;
  for (std::size_t k = 0; k < needle.size(); ++k) {
    if (lower(text[pos + k]) != lower(needle[k])) return false;
  }
  return true;
}

bool is_alpha_token(std::string_view token) {
  return !token.empty() && std::all_of(token.begin(), token.end(), [](char c) { return c >= 'a' && c <= 'z'; });
}

bool stem_match(std::string_view stem, std::string_view token) {
  return is_alpha_token(token) && token.starts_with(stem);
}

void require_lowercase_ascii(const std::vector<std::string>& entries, const char* what) {
  for (const auto& e : entries) {
    if (e.empty()) throw ConfigError(std::string("empty entry in ") + what);
    for (char c : e) {
      if (static_cast<unsigned char>(c) >= 0x80 || (c >= 'A' && c <= 'Z')) {
        throw ConfigError(std::string(what) + " entry '" + e + "' must be lowercase ASCII");
      }
    }
  }
}

nlohmann::json read_json_file(const std::filesystem::path& path, const char* what) {
  std::ifstream in(path);
  if (!in) throw ConfigError(std::string("cannot open ") + what + " " + path.string());
  try {
    nlohmann::json j;
    in >> j;
    return j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string(what) + " " + path.string() + ": " + e.what());
  }
}

}  // namespace

std::vector<TokenSpan> scan_tokens(std::string_view text, std::string_view mask_token) {
  std::vector<TokenSpan> out;
  int segment = 0;
  int sentence = 0;
  std::size_t i = 0;
  while (i < text.size()) {
    if (iequals_at(text, i, mask_token)) {
      ++segment;
      i += mask_token.size();
      continue;
    }
    const char c = text[i];
    if (is_alnum(c)) {
      TokenSpan span;
      span.begin = i;
      while (i < text.size() && is_alnum(text[i])) span.lower.push_back(lower(text[i++]));
      span.end = i;
      span.segment = segment;
      span.sentence = sentence;
      out.push_back(std::move(span));
      continue;
    }
    if (c == '.' || c == '!' || c == '?' || c == '\n') ++sentence;
    ++i;
  }
  return out;
}

std::vector<std::string> phrase_tokens(std::string_view phrase) {
  std::vector<std::string> out;
  for (auto& span : scan_tokens(phrase, {})) out.push_back(std::move(span.lower));
  return out;
}

bool Lexicon::matches_token(std::string_view token) const {
  for (const auto& s : stems) {
    if (stem_match(s, token)) return true;
  }
  return std::find(exact_tokens.begin(), exact_tokens.end(), token) != exact_tokens.end();
}

bool Lexicon::matches_term(std::string_view term) const {
  const auto tokens = phrase_tokens(term);
  for (const auto& t : tokens) {
    if (matches_token(t)) return true;
  }
  for (const auto& p : phrases) {
    const auto pt = phrase_tokens(p);
    if (pt.empty() || pt.size() > tokens.size()) continue;
    for (std::size_t i = 0; i + pt.size() <= tokens.size(); ++i) {
      if (std::equal(pt.begin(), pt.end(), tokens.begin() + static_cast<std::ptrdiff_t>(i))) return true;
    }
  }
  return false;
}

Lexicon Lexicon::load(const std::filesystem::path& path) {
  return read_json_file(path, "lexicon file").get<Lexicon>();
}

void to_json(nlohmann::json& j, const Lexicon& l) {
  j = {{"stems", l.stems}, {"exact_tokens", l.exact_tokens}, {"phrases", l.phrases}};
}

void from_json(const nlohmann::json& j, Lexicon& l) {
  try {
    l.stems = j.value("stems", std::vector<std::string>{});
    l.exact_tokens = j.value("exact_tokens", std::vector<std::string>{});
    l.phrases = j.value("phrases", std::vector<std::string>{});
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed lexicon: ") + e.what());
  }
  require_lowercase_ascii(l.stems, "lexicon stems");
  require_lowercase_ascii(l.exact_tokens, "lexicon exact_tokens");
  require_lowercase_ascii(l.phrases, "lexicon phrases");
}

void MaskRuleSet::validate() const {
  require_lowercase_ascii(stems, "stems");
  require_lowercase_ascii(exact_tokens, "exact_tokens");
  require_lowercase_ascii(phrases, "phrases");
  for (const auto& c : conditional_terms) {
    require_lowercase_ascii({c.term}, "conditional term");
    require_lowercase_ascii(c.triggers, "conditional triggers");
    if (c.triggers.empty()) throw ConfigError("conditional term '" + c.term + "' has no triggers");
  }
  // The mask token is recognised by literal match; if it began or ended with
  // a word character it could fuse with adjacent tokens.
  if (mask_token.empty() || is_alnum(mask_token.front()) || is_alnum(mask_token.back())) {
    throw ConfigError("mask_token must be non-empty and start and end with a non-word character");
  }
}

MaskRuleSet MaskRuleSet::load(const std::filesystem::path& path) {
  return read_json_file(path, "rules file").get<MaskRuleSet>();
}

void to_json(nlohmann::json& j, const MaskRuleSet& r) {
  nlohmann::json cond = nlohmann::json::array();
  for (const auto& c : r.conditional_terms) cond.push_back({{"term", c.term}, {"triggers", c.triggers}});
  j = {{"stems", r.stems},
       {"exact_tokens", r.exact_tokens},
       {"phrases", r.phrases},
       {"conditional_terms", cond},
       {"mask_token", r.mask_token}};
}

void from_json(const nlohmann::json& j, MaskRuleSet& r) {
  try {
    r.stems = j.value("stems", r.stems);
    r.exact_tokens = j.value("exact_tokens", r.exact_tokens);
    r.phrases = j.value("phrases", r.phrases);
    if (j.contains("conditional_terms")) {
      r.conditional_terms.clear();
      for (const auto& c : j.at("conditional_terms")) {
        r.conditional_terms.push_back(
            {c.at("term").get<std::string>(), c.at("triggers").get<std::vector<std::string>>()});
      }
    }
    r.mask_token = j.value("mask_token", r.mask_token);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed rules: ") + e.what());
  }
  r.validate();
}

namespace {

// Matches `pattern` at token i. Tokens must share segment and sentence.
// Pattern tokens listed in `stems` match by prefix, the rest exactly.
bool match_at(const std::vector<TokenSpan>& tokens, std::size_t i, const std::vector<std::string>& pattern,
              const std::vector<std::string>* stems) {
  if (pattern.empty() || i + pattern.size() > tokens.size()) return false;
  for (std::size_t k = 0; k < pattern.size(); ++k) {
    const auto& t = tokens[i + k];
    if (k > 0 && (t.segment != tokens[i].segment || t.sentence != tokens[i].sentence)) return false;
    const bool is_stem = stems != nullptr && std::find(stems->begin(), stems->end(), pattern[k]) != stems->end();
    if (is_stem ? !stem_match(pattern[k], t.lower) : t.lower != pattern[k]) return false;
  }
  return true;
}

}  // namespace

std::vector<MaskedSpan> rule_mask_spans(std::string_view text, const MaskRuleSet& rules) {
  const auto tokens = scan_tokens(text, rules.mask_token);
  std::vector<char> covered(tokens.size(), 0);
  std::vector<std::pair<std::size_t, std::size_t>> token_ranges;  // [first, last] token index

  std::vector<std::vector<std::string>> phrases;
  for (const auto& p : rules.phrases) phrases.push_back(phrase_tokens(p));
  std::stable_sort(phrases.begin(), phrases.end(), [](const auto& a, const auto& b) { return a.size() > b.size(); });

  auto claim = [&](std::size_t first, std::size_t count) {
    for (std::size_t k = first; k < first + count; ++k) {
      if (covered[k]) return false;
    }
    for (std::size_t k = first; k < first + count; ++k) covered[k] = 1;
    token_ranges.emplace_back(first, first + count - 1);
    return true;
  };

  for (std::size_t i = 0; i < tokens.size(); ++i) {
    for (const auto& p : phrases) {
      if (match_at(tokens, i, p, nullptr) && claim(i, p.size())) break;
    }
  }

  Lexicon words{rules.stems, rules.exact_tokens, {}};
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (!covered[i] && words.matches_token(tokens[i].lower)) claim(i, 1);
  }

  for (const auto& cond : rules.conditional_terms) {
    const auto term = phrase_tokens(cond.term);
    std::vector<std::vector<std::string>> triggers;
    for (const auto& t : cond.triggers) triggers.push_back(phrase_tokens(t));
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      if (!match_at(tokens, i, term, nullptr)) continue;
      bool triggered = false;
      for (std::size_t j = 0; j < tokens.size() && !triggered; ++j) {
        if (tokens[j].sentence != tokens[i].sentence) continue;
        for (const auto& trig : triggers) {
          if (match_at(tokens, j, trig, &rules.stems)) {
            triggered = true;
            break;
          }
        }
      }
      if (triggered) claim(i, term.size());
    }
  }

  std::sort(token_ranges.begin(), token_ranges.end());
  std::vector<MaskedSpan> spans;
  for (const auto& [first, last] : token_ranges) {
    MaskedSpan s;
    s.begin = tokens[first].begin;
    s.end = tokens[last].end;
    s.original = std::string(text.substr(s.begin, s.end - s.begin));
    spans.push_back(std::move(s));
  }
  return spans;
}

std::string replace_spans(std::string_view text, std::span<const MaskedSpan> spans, std::string_view mask_token) {
  std::string out;
  out.reserve(text.size());
  std::size_t pos = 0;
  for (const auto& s : spans) {
    out.append(text.substr(pos, s.begin - pos));
    out.append(mask_token);
    pos = s.end;
  }
  out.append(text.substr(pos));
  return out;
}

std::string apply_rule_mask(std::string_view text, const MaskRuleSet& rules) {
  const auto spans = rule_mask_spans(text, rules);
  return replace_spans(text, spans, rules.mask_token);
}

std::vector<std::string> ngrams(std::string_view text, int ngram_min, int ngram_max, std::string_view mask_token) {
  const auto tokens = scan_tokens(text, mask_token);
  std::vector<std::string> out;
  std::size_t seg_begin = 0;
  while (seg_begin < tokens.size()) {
    std::size_t seg_end = seg_begin;
    while (seg_end < tokens.size() && tokens[seg_end].segment == tokens[seg_begin].segment) ++seg_end;
    for (int n = ngram_min; n <= ngram_max; ++n) {
      const auto len = static_cast<std::size_t>(n);
      for (std::size_t i = seg_begin; i + len <= seg_end; ++i) {
        std::string gram = tokens[i].lower;
        for (std::size_t k = 1; k < len; ++k) {
          gram += ' ';
          gram += tokens[i + k].lower;
        }
        out.push_back(std::move(gram));
      }
    }
    seg_begin = seg_end;
  }
  return out;
}

TokenStream tokenize(std::string_view text, std::string_view mask_token) {
  TokenStream ts;
  const auto tokens = scan_tokens(text, mask_token);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    ts.unigrams.push_back(tokens[i].lower);
    if (i + 1 < tokens.size() && tokens[i + 1].segment == tokens[i].segment) {
      ts.bigrams.push_back(tokens[i].lower + ' ' + tokens[i + 1].lower);
    }
  }
  return ts;
}

void TfidfConfig::validate() const {
  if (ngram_min < 1 || ngram_min > ngram_max) throw ConfigError("tfidf: require 1 <= ngram_min <= ngram_max");
  if (max_features < 1) throw ConfigError("tfidf: max_features must be >= 1");
  if (min_df < 1) throw ConfigError("tfidf: min_df must be >= 1");
}

void to_json(nlohmann::json& j, const TfidfConfig& c) {
  j = {{"ngram_min", c.ngram_min}, {"ngram_max", c.ngram_max},       {"max_features", c.max_features},
       {"min_df", c.min_df},       {"l2_normalize", c.l2_normalize}, {"mask_token", c.mask_token}};
}

void from_json(const nlohmann::json& j, TfidfConfig& c) {
  try {
    c.ngram_min = j.value("ngram_min", c.ngram_min);
    c.ngram_max = j.value("ngram_max", c.ngram_max);
    c.max_features = j.value("max_features", c.max_features);
    c.min_df = j.value("min_df", c.min_df);
    c.l2_normalize = j.value("l2_normalize", c.l2_normalize);
    c.mask_token = j.value("mask_token", c.mask_token);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed tfidf config: ") + e.what());
  }
  c.validate();
}

double DocVector::l2_norm() const {
  double s = 0.0;
  for (const auto& [_, v] : entries) s += v * v;
  return std::sqrt(s);
}

std::vector<double> DocVector::dense() const {
  std::vector<double> out(dimension, 0.0);
  for (const auto& [c, v] : entries) out[c] = v;
  return out;
}

double DocVector::at(std::size_t column) const {
  auto it = std::lower_bound(entries.begin(), entries.end(), column,
                             [](const auto& e, std::size_t c) { return e.first < c; });
  return it != entries.end() && it->first == column ? it->second : 0.0;
}

TfidfModel TfidfModel::fit(std::span<const std::string> train_docs, const TfidfConfig& config) {
  config.validate();
  if (train_docs.empty()) throw DataError("fit_tfidf: empty training corpus");

  // The mask token's own word form never enters the vocabulary.
  const auto mask_words = phrase_tokens(config.mask_token);
  auto contains_mask_word = [&](const std::string& term) {
    for (const auto& t : phrase_tokens(term)) {
      if (std::find(mask_words.begin(), mask_words.end(), t) != mask_words.end()) return true;
    }
    return false;
  };

  std::map<std::string, int> df;
  for (const auto& doc : train_docs) {
    auto grams = ngrams(doc, config.ngram_min, config.ngram_max, config.mask_token);
    std::sort(grams.begin(), grams.end());
    grams.erase(std::unique(grams.begin(), grams.end()), grams.end());
    for (auto& g : grams) ++df[std::move(g)];
  }

  std::vector<std::pair<std::string, int>> candidates;
  for (auto& [term, count] : df) {
    if (count >= config.min_df && !contains_mask_word(term)) candidates.emplace_back(term, count);
  }
  if (candidates.size() > static_cast<std::size_t>(config.max_features)) {
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    candidates.resize(static_cast<std::size_t>(config.max_features));
    std::sort(candidates.begin(), candidates.end());
  }

  TfidfModel m;
  m.config_ = config;
  m.n_docs_ = train_docs.size();
  const double n = static_cast<double>(m.n_docs_);
  for (auto& [term, count] : candidates) {
    m.terms_.push_back(term);
    m.doc_freq_.push_back(count);
    m.idf_.push_back(std::log((1.0 + n) / (1.0 + count)) + 1.0);
  }
  m.build_index();
  return m;
}

void TfidfModel::build_index() {
  index_.clear();
  for (std::size_t i = 0; i < terms_.size(); ++i) index_.emplace(terms_[i], i);
}

long TfidfModel::index_of(std::string_view term) const {
  auto it = index_.find(std::string(term));
  return it == index_.end() ? -1 : static_cast<long>(it->second);
}

DocVector TfidfModel::transform(std::string_view doc) const {
  std::map<std::size_t, double> counts;
  for (const auto& g : ngrams(doc, config_.ngram_min, config_.ngram_max, config_.mask_token)) {
    auto it = index_.find(g);
    if (it != index_.end()) counts[it->second] += 1.0;
  }
  DocVector v;
  v.dimension = terms_.size();
  v.entries.reserve(counts.size());
  for (const auto& [col, count] : counts) v.entries.emplace_back(col, count * idf_[col]);
  if (config_.l2_normalize) {
    const double norm = v.l2_norm();
    if (norm > 0.0) {
      for (auto& [_, w] : v.entries) w /= norm;
    }
  }
  return v;
}

nlohmann::json TfidfModel::to_json() const {
  nlohmann::json j;
  j["config"] = config_;
  j["n_docs"] = n_docs_;
  j["terms"] = terms_;
  j["doc_freq"] = doc_freq_;
  j["idf"] = idf_;
  return j;
}

TfidfModel TfidfModel::from_json(const nlohmann::json& j) {
  TfidfModel m;
  try {
    m.config_ = j.at("config").get<TfidfConfig>();
    m.n_docs_ = j.at("n_docs").get<std::size_t>();
    m.terms_ = j.at("terms").get<std::vector<std::string>>();
    m.doc_freq_ = j.at("doc_freq").get<std::vector<int>>();
    m.idf_ = j.at("idf").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed tfidf model: ") + e.what());
  }
  if (m.doc_freq_.size() != m.terms_.size() || m.idf_.size() != m.terms_.size()) {
    throw DataError("malformed tfidf model: column arrays differ in length");
  }
  m.build_index();
  return m;
}

}  // namespace leakaudit
