#include "leakaudit/attribution.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "leakaudit/error.hpp"

namespace leakaudit {

std::vector<double> linear_shapley(const LogisticModel& probe, std::span<const double> x, std::span<const double> mu) {
  const std::size_t d = probe.weights.size();
  if (x.size() != d || mu.size() != d) throw DataError("linear_shapley: dimension mismatch");
  std::vector<double> phi(d);
  for (std::size_t j = 0; j < d; ++j) phi[j] = probe.weights[j] * (x[j] - mu[j]);
  return phi;
}

std::vector<double> linear_shapley(const LogisticModel& probe, const DocVector& x, std::span<const double> mu) {
  if (x.dimension != probe.weights.size()) throw DataError("linear_shapley: dimension mismatch");
  return linear_shapley(probe, x.dense(), mu);
}

double logit_at(const LogisticModel& probe, std::span<const double> mu) { return probe.decision(mu); }

std::vector<double> feature_means(std::span<const DocVector> docs, std::size_t dimension) {
  std::vector<double> mu(dimension, 0.0);
  if (docs.empty()) return mu;
  for (const auto& d : docs) {
    if (d.dimension != dimension) throw DataError("feature_means: dimension mismatch");
    for (const auto& [c, v] : d.entries) mu[c] += v;
  }
  for (double& m : mu) m /= static_cast<double>(docs.size());
  return mu;
}

double model_logit(const Model& model, std::span<const double> x) {
  if (const auto* lr = std::get_if<LogisticModel>(&model)) return lr->decision(x);
  return std::get<GbdtModel>(model).margin(x);
}

double TextClassifier::logit(std::string_view doc) const {
  return model_logit(*model, featurizer->transform(doc).dense());
}

OcclusionResult occlusion_attribution(const TextClassifier& classifier, std::string_view doc, std::string_view term) {
  const auto& tfidf = *classifier.featurizer;
  if (tfidf.index_of(term) < 0) return {0.0, true};
  const auto& cfg = tfidf.config();
  const auto grams = ngrams(doc, cfg.ngram_min, cfg.ngram_max, cfg.mask_token);
  if (std::find(grams.begin(), grams.end(), term) == grams.end()) return {0.0, true};
  const std::string terms[] = {std::string(term)};
  const std::string occluded = apply_term_mask(doc, terms, cfg.mask_token);
  return {classifier.logit(doc) - classifier.logit(occluded), false};
}

DocAttribution nonzero_attribution(const DocVector& x, std::span<const double> phi) {
  DocAttribution out;
  out.reserve(x.entries.size());
  for (const auto& [c, v] : x.entries) {
    if (v != 0.0) out.emplace_back(c, phi[c]);
  }
  return out;
}

TermScoreTable aggregate_term_scores(std::span<const DocAttribution> attributions,
                                     std::span<const std::string> vocabulary) {
  std::vector<double> sum(vocabulary.size(), 0.0);
  std::vector<std::size_t> support(vocabulary.size(), 0);
  for (const auto& doc : attributions) {
    for (const auto& [c, phi] : doc) {
      if (c >= vocabulary.size()) throw DataError("attribution column out of vocabulary range");
      sum[c] += std::abs(phi);
      ++support[c];
    }
  }
  TermScoreTable table;
  for (std::size_t c = 0; c < vocabulary.size(); ++c) {
    if (support[c] == 0) continue;
    table.rows.push_back({vocabulary[c], c, sum[c] / static_cast<double>(support[c]), support[c]});
  }
  return table;
}

std::string to_string(AuditMode mode) { return mode == AuditMode::kUnion ? "union" : "intersection"; }

AuditMode audit_mode_from_string(std::string_view s) {
  if (s == "union") return AuditMode::kUnion;
  if (s == "intersection") return AuditMode::kIntersection;
  throw ConfigError("audit mode must be 'union' or 'intersection', got '" + std::string(s) + "'");
}

std::string to_string(MaskReason reason) {
  switch (reason) {
    case MaskReason::kQuantile:
      return "quantile";
    case MaskReason::kLexicon:
      return "lexicon";
    case MaskReason::kBoth:
      return "both";
  }
  return "quantile";
}

namespace {

MaskReason reason_from_string(const std::string& s) {
  if (s == "quantile") return MaskReason::kQuantile;
  if (s == "lexicon") return MaskReason::kLexicon;
  if (s == "both") return MaskReason::kBoth;
  throw DataError("unknown mask reason '" + s + "'");
}

}  // namespace

bool AuditMask::contains(std::string_view term) const {
  return std::any_of(terms.begin(), terms.end(), [&](const MaskedTerm& t) { return t.term == term; });
}

std::vector<std::string> AuditMask::term_list() const {
  std::vector<std::string> out;
  for (const auto& t : terms) out.push_back(t.term);
  return out;
}

nlohmann::ordered_json AuditMask::to_json() const {
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const auto& t : terms) {
    rows.push_back({{"reason", to_string(t.reason)},
                    {"score", std::round(t.score * 1e6) / 1e6},
                    {"score_exact", t.score},
                    {"support", t.support},
                    {"term", t.term}});
  }
  return {{"mode", to_string(mode)},
          {"quantile", quantile_q},
          {"terms", rows},
          {"threshold", std::round(threshold_value * 1e6) / 1e6},
          {"threshold_exact", threshold_value}};
}

AuditMask AuditMask::from_json(const nlohmann::json& j) {
  AuditMask m;
  try {
    m.mode = audit_mode_from_string(j.at("mode").get<std::string>());
    m.quantile_q = j.at("quantile").get<double>();
    m.threshold_value = j.value("threshold_exact", j.value("threshold", 0.0));
    for (const auto& t : j.at("terms")) {
      MaskedTerm mt;
      mt.term = t.at("term").get<std::string>();
      mt.score = t.value("score_exact", t.value("score", 0.0));
      mt.support = t.value("support", std::size_t{0});
      mt.reason = reason_from_string(t.value("reason", std::string("quantile")));
      m.terms.push_back(std::move(mt));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed audit mask: ") + e.what());
  }
  std::sort(m.terms.begin(), m.terms.end(), [](const auto& a, const auto& b) { return a.term < b.term; });
  return m;
}

double nearest_rank_quantile(std::vector<double> values, double q) {
  if (values.empty()) throw DataError("quantile of an empty set");
  if (!(q > 0.0 && q < 1.0)) throw ConfigError("quantile must be in (0,1)");
  std::sort(values.begin(), values.end());
  const double n = static_cast<double>(values.size());
  // 0.99 * 200 evaluates to 198.00000000000003; trim representation noise before ceil.
  auto rank = static_cast<std::size_t>(std::ceil(q * n - 1e-9));
  rank = std::clamp<std::size_t>(rank, 1, values.size());
  return values[rank - 1];
}

AuditMask derive_audit_mask(const TermScoreTable& table, const Lexicon& lexicon, double q, AuditMode mode) {
  if (table.rows.empty()) throw DataError("derive_audit_mask: empty term score table");
  std::vector<double> scores;
  scores.reserve(table.rows.size());
  for (const auto& r : table.rows) scores.push_back(r.score);

  AuditMask mask;
  mask.quantile_q = q;
  mask.mode = mode;
  mask.threshold_value = nearest_rank_quantile(scores, q);
  for (const auto& r : table.rows) {
    const bool extreme = r.score >= mask.threshold_value;
    const bool listed = lexicon.matches_term(r.term);
    const bool keep = mode == AuditMode::kUnion ? (extreme || listed) : (extreme && listed);
    if (!keep) continue;
    const MaskReason reason = extreme && listed ? MaskReason::kBoth : extreme ? MaskReason::kQuantile : MaskReason::kLexicon;
    mask.terms.push_back({r.term, r.score, r.support, reason});
  }
  std::sort(mask.terms.begin(), mask.terms.end(), [](const auto& a, const auto& b) { return a.term < b.term; });
  return mask;
}

std::string apply_term_mask(std::string_view text, std::span<const std::string> terms, std::string_view mask_token) {
  if (terms.empty()) return std::string(text);
  std::map<std::size_t, std::set<std::string>, std::greater<>> by_length;
  for (const auto& t : terms) {
    const auto tokens = phrase_tokens(t);
    if (tokens.empty()) continue;
    std::string joined = tokens[0];
    for (std::size_t k = 1; k < tokens.size(); ++k) joined += ' ' + tokens[k];
    by_length[tokens.size()].insert(std::move(joined));
  }

  const auto tokens = scan_tokens(text, mask_token);
  std::vector<char> covered(tokens.size(), 0);
  std::vector<std::pair<std::size_t, std::size_t>> ranges;
  for (const auto& [len, set] : by_length) {
    for (std::size_t i = 0; i + len <= tokens.size(); ++i) {
      bool ok = true;
      std::string joined;
      for (std::size_t k = 0; k < len && ok; ++k) {
        const auto& t = tokens[i + k];
        ok = !covered[i + k] && t.segment == tokens[i].segment;
        if (k) joined += ' ';
        joined += t.lower;
      }
      if (!ok || !set.contains(joined)) continue;
      for (std::size_t k = 0; k < len; ++k) covered[i + k] = 1;
      ranges.emplace_back(i, i + len - 1);
    }
  }
  std::sort(ranges.begin(), ranges.end());
  std::vector<MaskedSpan> spans;
  for (const auto& [first, last] : ranges) spans.push_back({tokens[first].begin, tokens[last].end, {}});
  return replace_spans(text, spans, mask_token);
}

std::string apply_audit_mask(std::string_view text, const AuditMask& mask, std::string_view mask_token) {
  const auto terms = mask.term_list();
  return apply_term_mask(text, terms, mask_token);
}

}  // namespace leakaudit
