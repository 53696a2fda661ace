#ifndef LEAKAUDIT_TEXTPREP_HPP
#define LEAKAUDIT_TEXTPREP_HPP

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "json.hpp"

namespace leakaudit {

inline constexpr std::string_view kDefaultMaskToken = "[MASK]";

// NFKD decomposition followed by dropping every non-ASCII code point.
// Invalid UTF-8 sequences are dropped as well.
std::string normalize_text(std::string_view text);

// One word of the text: a maximal run of [A-Za-z0-9]. `segment` increments at
// every mask-token occurrence, `sentence` at every '.', '!', '?' or newline.
struct TokenSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::string lower;
  int segment = 0;
  int sentence = 0;
};

std::vector<TokenSpan> scan_tokens(std::string_view text, std::string_view mask_token = kDefaultMaskToken);

// Splits a lowercase phrase such as "go home" into its tokens.
std::vector<std::string> phrase_tokens(std::string_view phrase);

// Stem / exact-token / phrase matching shared by the rule masker and the
// audit lexicon. Stems match alphabetic tokens by prefix ("dispo" matches
// "disposition" but not "disco"); exact tokens match whole tokens only.
struct Lexicon {
  std::vector<std::string> stems;
  std::vector<std::string> exact_tokens;
  std::vector<std::string> phrases;

  bool matches_token(std::string_view token) const;
  // A unigram/bigram term matches if any of its tokens matches a stem or
  // exact entry, or a lexicon phrase occurs as a contiguous run of its tokens.
  bool matches_term(std::string_view term) const;

  static Lexicon load(const std::filesystem::path& path);
};

void to_json(nlohmann::json& j, const Lexicon& l);
void from_json(const nlohmann::json& j, Lexicon& l);

struct ConditionalTerm {
  std::string term;
  std::vector<std::string> triggers;
};

struct MaskRuleSet {
  std::vector<std::string> stems{"discharge", "dispo"};
  std::vector<std::string> exact_tokens{"dc"};
  std::vector<std::string> phrases{"next day", "within 24 hours", "by morning", "overnight"};
  std::vector<ConditionalTerm> conditional_terms{{"tomorrow", {"discharge", "dc", "go home", "leave"}}};
  std::string mask_token{kDefaultMaskToken};

  void validate() const;
  static MaskRuleSet load(const std::filesystem::path& path);
};

void to_json(nlohmann::json& j, const MaskRuleSet& r);
void from_json(const nlohmann::json& j, MaskRuleSet& r);

// Replaces stem, exact-token and phrase matches with the mask token, and
// conditional terms only when a trigger occurs in the same sentence.
// Case-insensitive, word-bounded, idempotent.
std::string apply_rule_mask(std::string_view text, const MaskRuleSet& rules);

// Byte range of the input that a masker replaced.
struct MaskedSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::string original;
};

std::vector<MaskedSpan> rule_mask_spans(std::string_view text, const MaskRuleSet& rules);

// Replaces the given non-overlapping spans, sorted by position.
std::string replace_spans(std::string_view text, std::span<const MaskedSpan> spans, std::string_view mask_token);

struct TokenStream {
  std::vector<std::string> unigrams;
  std::vector<std::string> bigrams;
};

// Lowercased [a-z0-9]+ tokens; mask-token occurrences end a segment and no
// bigram spans two segments.
TokenStream tokenize(std::string_view text, std::string_view mask_token = kDefaultMaskToken);

// Every n-gram with ngram_min <= n <= ngram_max, in document order.
std::vector<std::string> ngrams(std::string_view text, int ngram_min, int ngram_max,
                                std::string_view mask_token = kDefaultMaskToken);

struct TfidfConfig {
  int ngram_min = 1;
  int ngram_max = 2;
  int max_features = 10000;
  int min_df = 3;
  bool l2_normalize = true;
  std::string mask_token{kDefaultMaskToken};

  void validate() const;
};

void to_json(nlohmann::json& j, const TfidfConfig& c);
void from_json(const nlohmann::json& j, TfidfConfig& c);

// Sparse document vector: (column, weight) pairs sorted by column.
struct DocVector {
  std::size_t dimension = 0;
  std::vector<std::pair<std::size_t, double>> entries;

  double l2_norm() const;
  std::vector<double> dense() const;
  double at(std::size_t column) const;
};

class TfidfModel {
 public:
  TfidfModel() = default;

  // Terms with document frequency >= min_df; when more than max_features
  // survive the highest-df ones are kept (lexicographic tie-break). Columns
  // follow lexicographic term order. idf(t) = ln((1 + N) / (1 + df(t))) + 1.
  static TfidfModel fit(std::span<const std::string> train_docs, const TfidfConfig& config);

  DocVector transform(std::string_view doc) const;

  std::size_t size() const { return terms_.size(); }
  const std::vector<std::string>& terms() const { return terms_; }
  const std::vector<int>& doc_freq() const { return doc_freq_; }
  const std::vector<double>& idf() const { return idf_; }
  std::size_t n_docs() const { return n_docs_; }
  const TfidfConfig& config() const { return config_; }
  // Column of `term`, or -1 when out of vocabulary.
  long index_of(std::string_view term) const;

  nlohmann::json to_json() const;
  static TfidfModel from_json(const nlohmann::json& j);

 private:
  void build_index();

  TfidfConfig config_;
  std::vector<std::string> terms_;
  std::vector<int> doc_freq_;
  std::vector<double> idf_;
  std::size_t n_docs_ = 0;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace leakaudit

#endif  // LEAKAUDIT_TEXTPREP_HPP
