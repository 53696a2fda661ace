#ifndef LEAKAUDIT_ATTRIBUTION_HPP
#define LEAKAUDIT_ATTRIBUTION_HPP

#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"
#include "leakaudit/learners.hpp"
#include "leakaudit/textprep.hpp"

namespace leakaudit {

// Exact Shapley values of a linear logit under an independent-feature
// baseline at the training means: phi_j = w_j * (x_j - mu_j). They sum to
// decision(x) - decision(mu).
std::vector<double> linear_shapley(const LogisticModel& probe, std::span<const double> x, std::span<const double> mu);
std::vector<double> linear_shapley(const LogisticModel& probe, const DocVector& x, std::span<const double> mu);

// Logit of the probe evaluated at the baseline point.
double logit_at(const LogisticModel& probe, std::span<const double> mu);

// Column means of the training document vectors.
std::vector<double> feature_means(std::span<const DocVector> docs, std::size_t dimension);

// Margin (log-odds) of any trained model.
double model_logit(const Model& model, std::span<const double> x);

// A text-only classifier: featurizer plus model over its columns.
struct TextClassifier {
  const TfidfModel* featurizer = nullptr;
  const Model* model = nullptr;

  double logit(std::string_view doc) const;
};

struct OcclusionResult {
  double value = 0.0;
  bool absent = false;  // term out of vocabulary or not present in the document
};

// logit(doc) - logit(doc with every occurrence of `term` mask-replaced).
OcclusionResult occlusion_attribution(const TextClassifier& classifier, std::string_view doc, std::string_view term);

// Attribution of one document restricted to its nonzero features.
using DocAttribution = std::vector<std::pair<std::size_t, double>>;

// phi restricted to the columns where x is nonzero.
DocAttribution nonzero_attribution(const DocVector& x, std::span<const double> phi);

struct TermScore {
  std::string term;
  std::size_t column = 0;
  double score = 0.0;  // mean |phi| over supporting documents
  std::size_t support = 0;
};

struct TermScoreTable {
  std::vector<TermScore> rows;  // ascending column order; unsupported terms omitted
};

TermScoreTable aggregate_term_scores(std::span<const DocAttribution> attributions,
                                     std::span<const std::string> vocabulary);

enum class AuditMode { kUnion, kIntersection };
enum class MaskReason { kQuantile, kLexicon, kBoth };

std::string to_string(AuditMode mode);
AuditMode audit_mode_from_string(std::string_view s);
std::string to_string(MaskReason reason);

struct MaskedTerm {
  std::string term;
  double score = 0.0;
  std::size_t support = 0;
  MaskReason reason = MaskReason::kQuantile;
};

struct AuditMask {
  std::vector<MaskedTerm> terms;  // sorted by term
  double threshold_value = 0.0;
  double quantile_q = 0.99;
  AuditMode mode = AuditMode::kUnion;

  bool contains(std::string_view term) const;
  std::vector<std::string> term_list() const;

  nlohmann::ordered_json to_json() const;
  static AuditMask from_json(const nlohmann::json& j);
};

// Nearest-rank empirical quantile: the ceil(q*n)-th smallest value.
double nearest_rank_quantile(std::vector<double> values, double q);

// Terms with score >= the q-quantile, combined with lexicon matches by union
// or intersection.
AuditMask derive_audit_mask(const TermScoreTable& table, const Lexicon& lexicon, double q = 0.99,
                            AuditMode mode = AuditMode::kUnion);

// Masks every occurrence of the listed terms at word boundaries, longer
// (multi-word) terms first. Case-insensitive and idempotent.
std::string apply_term_mask(std::string_view text, std::span<const std::string> terms,
                            std::string_view mask_token = kDefaultMaskToken);
std::string apply_audit_mask(std::string_view text, const AuditMask& mask,
                             std::string_view mask_token = kDefaultMaskToken);

}  // namespace leakaudit

#endif  // LEAKAUDIT_ATTRIBUTION_HPP
