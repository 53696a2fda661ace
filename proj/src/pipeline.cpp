#include "leakaudit/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "leakaudit/error.hpp"
#include "leakaudit/rng.hpp"

namespace leakaudit {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(CalibrationMode mode) {
  return mode == CalibrationMode::kClean ? "clean" : "paper-replication";
}

CalibrationMode calibration_mode_from_string(std::string_view s) {
  if (s == "paper-replication") return CalibrationMode::kPaperReplication;
  if (s == "clean") return CalibrationMode::kClean;
  throw ConfigError("calibration mode must be 'paper-replication' or 'clean', got '" + std::string(s) + "'");
}

namespace {

std::string to_string(LearnerKind k) { return k == LearnerKind::kGbdt ? "gbdt" : "logistic"; }

LearnerKind learner_from_string(const std::string& s) {
  if (s == "gbdt") return LearnerKind::kGbdt;
  if (s == "logistic") return LearnerKind::kLogistic;
  throw ConfigError("learner must be 'logistic' or 'gbdt', got '" + s + "'");
}

std::string to_string(PipelineStop s) {
  switch (s) {
    case PipelineStop::kFeaturize:
      return "featurize";
    case PipelineStop::kTrain:
      return "train";
    case PipelineStop::kAudit:
      return "audit";
    case PipelineStop::kFull:
      return "full";
  }
  return "full";
}

fs::path resolve_against(const fs::path& base, const fs::path& p) {
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  return base / p;
}

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, _] : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
      throw ConfigError("unknown key '" + key + "' in " + where);
    }
  }
}

}  // namespace

void PipelineConfig::set_seed(std::uint64_t s) {
  seed = s;
  synthetic.seed = s;
  split_seed = s;
  stacking_seed = s;
}

fs::path PipelineConfig::resolved_mask_rules() const {
  return mask_rules_path.empty() ? default_data_dir() / "mask_rules.json" : mask_rules_path;
}

fs::path PipelineConfig::resolved_lexicon() const {
  return audit.lexicon_path.empty() ? default_data_dir() / "proxy_lexicon.json" : audit.lexicon_path;
}

void PipelineConfig::validate() const {
  if (!corpus_path.empty() && !fs::exists(corpus_path)) {
    throw ConfigError("corpus file not found: " + corpus_path.string());
  }
  if (corpus_path.empty()) synthetic.validate();
  for (double f : {fractions.train, fractions.val, fractions.test}) {
    if (!(f > 0.0 && f < 1.0)) throw ConfigError("split fractions must lie in (0,1)");
  }
  if (std::abs(fractions.train + fractions.val + fractions.test - 1.0) > 1e-9) {
    throw ConfigError("split fractions must sum to 1");
  }
  for (const auto& p : {resolved_mask_rules(), resolved_lexicon()}) {
    if (!fs::exists(p)) throw ConfigError("file not found: " + p.string());
  }
  if (!synthetic.templates_path.empty() && !fs::exists(synthetic.templates_path)) {
    throw ConfigError("templates file not found: " + synthetic.templates_path.string());
  }
  tfidf.validate();
  if (!(audit.quantile > 0.0 && audit.quantile < 1.0)) throw ConfigError("audit quantile must lie in (0,1)");
  if (audit.top_k < 1) throw ConfigError("audit top_k must be positive");
  if (stacking_folds < 2) throw ConfigError("stacking folds must be >= 2");
  for (const auto* lc : {&logistic, &probe}) {
    if (!(lc->l2_lambda >= 0.0) || lc->max_iters < 1) throw ConfigError("invalid logistic configuration");
  }
  if (gbdt.n_trees < 1 || gbdt.max_depth < 1 || !(gbdt.learning_rate > 0.0) || gbdt.min_child_weight < 0.0 ||
      gbdt.leaf_l2 < 0.0) {
    throw ConfigError("invalid gbdt configuration");
  }
}

PipelineConfig PipelineConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  auto cfg = from_json(j);
  const fs::path base = path.parent_path();
  cfg.corpus_path = resolve_against(base, cfg.corpus_path);
  cfg.mask_rules_path = resolve_against(base, cfg.mask_rules_path);
  cfg.audit.lexicon_path = resolve_against(base, cfg.audit.lexicon_path);
  cfg.synthetic.templates_path = resolve_against(base, cfg.synthetic.templates_path);
  if (j.contains("output") && j["output"].contains("dir")) cfg.output_dir = resolve_against(base, cfg.output_dir);
  cfg.validate();
  return cfg;
}

PipelineConfig PipelineConfig::from_json(const json& j) {
  PipelineConfig c;
  try {
    check_keys(j,
               {"seed", "corpus", "split", "mask_rules", "tfidf", "tabular", "learners", "audit", "ablation",
                "calibration", "stacking", "output", "debug", "stop_after"},
               "config");
    c.set_seed(j.value("seed", c.seed));
    if (j.contains("corpus")) {
      const auto& cj = j["corpus"];
      check_keys(cj, {"path", "synthetic"}, "corpus");
      if (cj.contains("path") && !cj["path"].is_null()) c.corpus_path = cj["path"].get<std::string>();
      if (cj.contains("synthetic") && !cj["synthetic"].is_null()) {
        leakaudit::from_json(cj["synthetic"], c.synthetic);
        if (!cj["synthetic"].contains("seed")) c.synthetic.seed = c.seed;
      }
    }
    if (j.contains("split")) {
      const auto& s = j["split"];
      check_keys(s, {"train", "val", "test", "seed"}, "split");
      c.fractions.train = s.value("train", c.fractions.train);
      c.fractions.val = s.value("val", c.fractions.val);
      c.fractions.test = s.value("test", c.fractions.test);
      c.split_seed = s.value("seed", c.seed);
    }
    if (j.contains("mask_rules") && !j["mask_rules"].is_null()) c.mask_rules_path = j["mask_rules"].get<std::string>();
    if (j.contains("tfidf")) c.tfidf = j["tfidf"].get<TfidfConfig>();
    if (j.contains("tabular")) {
      check_keys(j["tabular"], {"columns"}, "tabular");
      c.structured_columns = j["tabular"].value("columns", std::vector<std::string>{});
    }
    if (j.contains("learners")) {
      const auto& l = j["learners"];
      check_keys(l, {"logistic", "gbdt", "probe"}, "learners");
      if (l.contains("logistic")) c.logistic = l["logistic"].get<LogisticConfig>();
      if (l.contains("gbdt")) c.gbdt = l["gbdt"].get<GbdtConfig>();
      if (l.contains("probe")) c.probe = l["probe"].get<LogisticConfig>();
    }
    if (j.contains("audit")) {
      const auto& a = j["audit"];
      check_keys(a, {"quantile", "mode", "lexicon", "top_k"}, "audit");
      c.audit.quantile = a.value("quantile", c.audit.quantile);
      if (a.contains("mode")) c.audit.mode = audit_mode_from_string(a["mode"].get<std::string>());
      if (a.contains("lexicon") && !a["lexicon"].is_null()) c.audit.lexicon_path = a["lexicon"].get<std::string>();
      c.audit.top_k = a.value("top_k", c.audit.top_k);
    }
    if (j.contains("ablation")) {
      const auto& a = j["ablation"];
      check_keys(a, {"structured_learner", "text_learner"}, "ablation");
      if (a.contains("structured_learner")) c.ablation.structured_learner = learner_from_string(a["structured_learner"]);
      if (a.contains("text_learner")) c.ablation.text_learner = learner_from_string(a["text_learner"]);
    }
    if (j.contains("calibration")) {
      check_keys(j["calibration"], {"mode"}, "calibration");
      if (j["calibration"].contains("mode")) {
        c.calibration_mode = calibration_mode_from_string(j["calibration"]["mode"].get<std::string>());
      }
    }
    if (j.contains("stacking")) {
      check_keys(j["stacking"], {"folds", "seed"}, "stacking");
      c.stacking_folds = j["stacking"].value("folds", c.stacking_folds);
      c.stacking_seed = j["stacking"].value("seed", c.seed);
    }
    if (j.contains("output")) {
      const auto& o = j["output"];
      check_keys(o, {"dir", "plots", "matrices"}, "output");
      if (o.contains("dir")) c.output_dir = o["dir"].get<std::string>();
      c.write_plots = o.value("plots", c.write_plots);
      c.write_matrices = o.value("matrices", c.write_matrices);
    }
    if (j.contains("debug")) {
      check_keys(j["debug"], {"permute_test_labels"}, "debug");
      c.permute_test_labels = j["debug"].value("permute_test_labels", false);
    }
    if (j.contains("stop_after")) {
      const auto stop = j["stop_after"].get<std::string>();
      const std::pair<const char*, PipelineStop> stops[] = {{"featurize", PipelineStop::kFeaturize},
                                                            {"train", PipelineStop::kTrain},
                                                            {"audit", PipelineStop::kAudit},
                                                            {"full", PipelineStop::kFull}};
      const auto it = std::find_if(std::begin(stops), std::end(stops), [&](const auto& e) { return stop == e.first; });
      if (it == std::end(stops)) throw ConfigError("stop_after must be featurize, train, audit or full");
      c.stop = it->second;
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  }
  return c;
}

json PipelineConfig::to_json() const {
  json j;
  j["seed"] = seed;
  json synth;
  leakaudit::to_json(synth, synthetic);
  if (synthetic.templates_path.empty()) synth["templates_path"] = (default_data_dir() / "templates.json").string();
  j["corpus"] = {{"path", corpus_path.empty() ? json(nullptr) : json(corpus_path.string())},
                 {"synthetic", corpus_path.empty() ? synth : json(nullptr)}};
  j["split"] = {{"train", fractions.train}, {"val", fractions.val}, {"test", fractions.test}, {"seed", split_seed}};
  j["mask_rules"] = resolved_mask_rules().string();
  j["tfidf"] = tfidf;
  j["tabular"] = {{"columns", structured_columns}};
  j["learners"] = {{"logistic", logistic}, {"gbdt", gbdt}, {"probe", probe}};
  j["audit"] = {{"quantile", audit.quantile},
                {"mode", leakaudit::to_string(audit.mode)},
                {"lexicon", resolved_lexicon().string()},
                {"top_k", audit.top_k}};
  j["ablation"] = {{"structured_learner", to_string(ablation.structured_learner)},
                   {"text_learner", to_string(ablation.text_learner)}};
  j["calibration"] = {{"mode", leakaudit::to_string(calibration_mode)}};
  j["stacking"] = {{"folds", stacking_folds}, {"seed", stacking_seed}};
  j["output"] = {{"plots", write_plots}, {"matrices", write_matrices}};
  j["debug"] = {{"permute_test_labels", permute_test_labels}};
  j["stop_after"] = to_string(stop);
  return j;
}

PreparedCohort prepare_cohort(std::vector<PatientRecord> records, const SplitFractions& fractions,
                              std::uint64_t split_seed) {
  PreparedCohort c;
  c.records = std::move(records);
  c.labels.reserve(c.records.size());
  for (const auto& r : c.records) c.labels.push_back(derive_outcome(r));
  c.split = stratified_split(c.records, fractions, split_seed);

  std::map<std::string, std::size_t> where;
  for (std::size_t i = 0; i < c.records.size(); ++i) where[c.records[i].patient_id] = i;
  auto indices = [&](const std::vector<std::string>& ids) {
    std::vector<std::size_t> out;
    out.reserve(ids.size());
    for (const auto& id : ids) out.push_back(where.at(id));
    std::sort(out.begin(), out.end());
    return out;
  };
  c.train = indices(c.split.train_ids);
  c.val = indices(c.split.val_ids);
  c.test = indices(c.split.test_ids);

  c.documents.reserve(c.records.size());
  for (const auto& r : c.records) c.documents.push_back(normalize_text(patient_document(r)));
  return c;
}

namespace {

void permute_labels(PreparedCohort& c, std::uint64_t seed) {
  std::vector<Label> y = gather(c.labels, c.test);
  Rng rng = Rng::derive(seed, 0x7e57);
  rng.shuffle(std::span<Label>(y));
  for (std::size_t k = 0; k < c.test.size(); ++k) c.labels[c.test[k]] = y[k];
}

}  // namespace

std::vector<Label> gather(std::span<const Label> labels, std::span<const std::size_t> indices) {
  std::vector<Label> out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(labels[i]);
  return out;
}

Matrix build_matrix(std::span<const std::size_t> indices, std::span<const std::string> documents,
                    std::span<const PatientRecord> records, const TfidfModel* text, const TabularPipeline* tabular) {
  const std::size_t ds = tabular ? tabular->size() : 0;
  const std::size_t dt = text ? text->size() : 0;
  if (ds + dt == 0) throw DataError("feature matrix has no columns");
  Matrix X(indices.size(), ds + dt);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const auto i = indices[r];
    std::vector<double> row;
    if (tabular && text) {
      row = fuse(tabular->transform(records[i].structured), text->transform(documents[i]), ds + dt);
    } else if (tabular) {
      row = tabular->transform(records[i].structured);
    } else {
      row = text->transform(documents[i]).dense();
    }
    std::copy(row.begin(), row.end(), X.row(r).begin());
  }
  return X;
}

std::vector<std::string> feature_names(const TfidfModel* text, const TabularPipeline* tabular) {
  std::vector<std::string> names;
  if (tabular) {
    for (const auto& c : tabular->columns()) names.push_back("s:" + c);
  }
  if (text) {
    for (const auto& t : text->terms()) names.push_back("t:" + t);
  }
  return names;
}

const TableRow& RunReport::row(const std::string& table, const std::string& model) const {
  const auto& rows = tables.at(table);
  for (const auto& r : rows) {
    if (r.metrics.name == model) return r;
  }
  throw DataError("no row '" + model + "' in table '" + table + "'");
}

json RunReport::to_json() const {
  json j;
  j["resolved_config"] = resolved_config;
  j["split"] = {{"n_train", split.train_ids.size()}, {"n_val", split.val_ids.size()}, {"n_test", split.test_ids.size()}};
  j["dimensions"] = dimensions;
  j["stages"] = stages;
  j["artifacts"] = artifacts;
  if (audit_mask) j["audit_mask"] = audit_mask->to_json();
  json tj = json::object();
  for (const auto& [name, rows] : tables) {
    json arr = json::array();
    for (const auto& r : rows) {
      json m = metrics_to_json(r.metrics);
      m["model_file"] = r.model_file;
      m["split"] = r.split;
      arr.push_back(m);
    }
    tj[name] = arr;
  }
  j["tables"] = tj;
  json rj = json::object();
  for (const auto& [name, curve] : reliability) rj[name] = reliability_to_json(curve);
  j["reliability"] = rj;
  return j;
}

void write_file(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << content;
  if (!out) throw DataError("write failed: " + path.string());
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string dump_json(const json& j) { return j.dump(2) + "\n"; }

std::string scores_to_tsv(std::span<const ScoreRow> rows) {
  std::string out = "patient_id\tlabel\tprob\n";
  char buf[64];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.17g", r.prob);
    out += r.patient_id + '\t' + std::to_string(r.label) + '\t' + buf + '\n';
  }
  return out;
}

std::vector<ScoreRow> read_scores(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read score file " + path.string());
  std::vector<ScoreRow> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (lineno == 1 && line.rfind("patient_id", 0) == 0) continue;
    std::istringstream ls(line);
    std::string id, label, prob;
    if (!std::getline(ls, id, '\t') || !std::getline(ls, label, '\t') || !std::getline(ls, prob, '\t')) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected 3 tab-separated fields");
    }
    ScoreRow r;
    r.patient_id = id;
    try {
      r.label = std::stoi(label);
      r.prob = std::stod(prob);
    } catch (const std::exception&) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": non-numeric label or probability");
    }
    if (r.label != 0 && r.label != 1) throw DataError(path.string() + ":" + std::to_string(lineno) + ": label must be 0 or 1");
    if (!(r.prob >= 0.0 && r.prob <= 1.0)) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": probability outside [0,1]");
    }
    rows.push_back(std::move(r));
  }
  if (rows.empty()) throw DataError("score file " + path.string() + " has no rows");
  return rows;
}

std::string reliability_svg(const std::map<std::string, ReliabilityCurve>& curves, const std::string& title) {
  const double W = 480, H = 480, m = 60, side = W - 2 * m;
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b"};
  auto px = [&](double v) { return m + v * side; };
  auto py = [&](double v) { return H - m - v * side; };
  char buf[256];
  std::string s;
  std::snprintf(buf, sizeof buf,
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\" "
                "font-family=\"sans-serif\" font-size=\"12\">\n",
                W, H + 20.0 * static_cast<double>(curves.size()));
  s += buf;
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s += "<text x=\"" + format_fixed(W / 2, 1) + "\" y=\"24\" text-anchor=\"middle\">" + title + "</text>\n";
  std::snprintf(buf, sizeof buf, "<rect x=\"%.1f\" y=\"%.1f\" width=\"%.1f\" height=\"%.1f\" fill=\"none\" stroke=\"black\"/>\n",
                m, m, side, side);
  s += buf;
  std::snprintf(buf, sizeof buf,
                "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"gray\" stroke-dasharray=\"4 4\"/>\n",
                px(0), py(0), px(1), py(1));
  s += buf;
  for (int t = 0; t <= 10; t += 2) {
    const double v = t / 10.0;
    std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"middle\">%.1f</text>\n", px(v),
                  H - m + 16, v);
    s += buf;
    std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"end\">%.1f</text>\n", m - 6,
                  py(v) + 4, v);
    s += buf;
  }
  s += "<text x=\"" + format_fixed(W / 2, 1) + "\" y=\"" + format_fixed(H - m + 36, 1) +
       "\" text-anchor=\"middle\">mean predicted probability</text>\n";
  std::size_t k = 0;
  for (const auto& [name, curve] : curves) {
    const char* col = colors[k % 7];
    std::string pts;
    for (const auto& b : curve.bins) {
      if (!b.mean_predicted) continue;
      std::snprintf(buf, sizeof buf, "%.2f,%.2f ", px(*b.mean_predicted), py(*b.event_rate));
      pts += buf;
    }
    s += std::string("<polyline fill=\"none\" stroke=\"") + col + "\" stroke-width=\"2\" points=\"" + pts + "\"/>\n";
    std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\" fill=\"%s\">%s</text>\n", m,
                  H + 20.0 * static_cast<double>(k), col, name.c_str());
    s += buf;
    ++k;
  }
  s += "</svg>\n";
  return s;
}

namespace {

LearnerSpec spec_for(LearnerKind kind, const PipelineConfig& c) {
  if (kind == LearnerKind::kGbdt) return c.gbdt;
  return c.logistic;
}

struct ModelEntry {
  std::string file;
  std::string text;  // none | raw | rule | audited
  std::string tfidf;
  bool structured = false;
  std::string calibrator;
};

json entry_to_json(const ModelEntry& e) {
  return {{"file", e.file},
          {"text", e.text},
          {"tfidf", e.tfidf.empty() ? json(nullptr) : json(e.tfidf)},
          {"structured", e.structured},
          {"calibrator", e.calibrator.empty() ? json(nullptr) : json(e.calibrator)}};
}

class Run {
 public:
  explicit Run(const PipelineConfig& c) : cfg_(c), out_(c.output_dir) {}

  RunReport execute();

 private:
  void stage(const std::string& name, const std::function<void()>& fn);
  void emit(const std::string& rel, const std::string& content);
  void emit_json(const std::string& rel, const json& j) { emit(rel, dump_json(j)); }
  void write_manifest(const std::string& status, const std::string& failed_stage, const std::string& message);

  std::vector<double> score(const Model& m, const Matrix& X, const std::optional<PlattModel>& cal = {}) const;
  void save_scores(const std::string& name, const std::string& split, std::span<const std::size_t> idx,
                   std::span<const double> probs);
  TableRow evaluate(const std::string& table, const std::string& name, const std::string& model_file,
                    const std::string& split, std::span<const std::size_t> idx, std::span<const double> probs);
  void save_model(const std::string& name, const ModelEntry& entry, const json& body);
  TermScoreTable probe_scores(const std::vector<std::string>& docs, TfidfModel& tfidf_out, LogisticModel& probe_out,
                              const std::string& tag);

  const PipelineConfig& cfg_;
  fs::path out_;
  RunReport report_;
  PreparedCohort cohort_;
  MaskRuleSet rules_;
  Lexicon lexicon_;
  std::vector<std::string> rule_docs_, audited_docs_;
  TfidfModel tfidf_rule_, tfidf_audited_;
  TabularPipeline tabular_;
  std::vector<Label> y_train_, y_val_, y_test_;
  std::map<std::string, ModelEntry> index_;
  std::map<std::string, Model> models_;
  std::map<std::string, PlattModel> calibrators_;
  std::map<std::string, Matrix> matrices_;
  std::vector<std::string> warnings_;
};

void Run::stage(const std::string& name, const std::function<void()>& fn) {
  try {
    fn();
  } catch (const ConfigError& e) {
    write_manifest("failed", name, e.what());
    throw;
  } catch (const DataError& e) {
    write_manifest("failed", name, e.what());
    throw;
  } catch (const StageError& e) {
    write_manifest("failed", name, e.what());
    throw;
  } catch (const std::exception& e) {
    write_manifest("failed", name, e.what());
    throw StageError(name, e.what());
  }
  report_.stages.push_back(name);
}

void Run::emit(const std::string& rel, const std::string& content) {
  write_file(out_ / rel, content);
  if (std::find(report_.artifacts.begin(), report_.artifacts.end(), rel) == report_.artifacts.end()) {
    report_.artifacts.push_back(rel);
  }
}

void Run::write_manifest(const std::string& status, const std::string& failed_stage, const std::string& message) {
  const auto now = std::chrono::system_clock::now();
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(now.time_since_epoch()).count();
  json j = {{"status", status},
            {"completed_stages", report_.stages},
            {"artifacts", report_.artifacts},
            {"timestamp_unix", secs},
            {"warnings", warnings_}};
  if (!failed_stage.empty()) {
    j["failed_stage"] = failed_stage;
    j["error"] = message;
  }
  try {
    write_file(out_ / "run_manifest.json", dump_json(j));
  } catch (const std::exception&) {
    // The original failure is more informative than a manifest write error.
  }
}

std::vector<double> Run::score(const Model& m, const Matrix& X, const std::optional<PlattModel>& cal) const {
  auto p = predict_proba(m, X);
  if (cal) p = cal->apply(p);
  return p;
}

void Run::save_scores(const std::string& name, const std::string& split, std::span<const std::size_t> idx,
                      std::span<const double> probs) {
  std::vector<ScoreRow> rows;
  rows.reserve(idx.size());
  for (std::size_t k = 0; k < idx.size(); ++k) {
    rows.push_back({cohort_.records[idx[k]].patient_id, cohort_.labels[idx[k]], probs[k]});
  }
  emit("scores/" + name + "_" + split + ".tsv", scores_to_tsv(rows));
}

TableRow Run::evaluate(const std::string& table, const std::string& name, const std::string& model_file,
                       const std::string& split, std::span<const std::size_t> idx, std::span<const double> probs) {
  const auto y = gather(cohort_.labels, idx);
  TableRow row{evaluate_scores(name, probs, y), model_file, split};
  report_.tables[table].push_back(row);
  save_scores(name, split, idx, probs);
  return row;
}

void Run::save_model(const std::string& name, const ModelEntry& entry, const json& body) {
  emit(entry.file, dump_json(body));
  index_[name] = entry;
}

TermScoreTable Run::probe_scores(const std::vector<std::string>& docs, TfidfModel& tfidf_out,
                                 LogisticModel& probe_out, const std::string& tag) {
  std::vector<std::string> train_docs;
  for (auto i : cohort_.train) train_docs.push_back(docs[i]);
  tfidf_out = TfidfModel::fit(train_docs, cfg_.tfidf);
  std::vector<DocVector> vecs;
  vecs.reserve(train_docs.size());
  for (const auto& d : train_docs) vecs.push_back(tfidf_out.transform(d));
  Matrix X(vecs.size(), tfidf_out.size());
  for (std::size_t r = 0; r < vecs.size(); ++r) {
    for (const auto& [c, v] : vecs[r].entries) X(r, c) = v;
  }
  probe_out = train_logistic(X, y_train_, cfg_.probe);
  const auto mu = feature_means(vecs, tfidf_out.size());
  std::vector<DocAttribution> attributions;
  attributions.reserve(vecs.size());
  for (const auto& v : vecs) attributions.push_back(nonzero_attribution(v, linear_shapley(probe_out, v, mu)));
  report_.dimensions["probe_text_" + tag] = tfidf_out.size();
  return aggregate_term_scores(attributions, tfidf_out.terms());
}

std::string top_terms_tsv(const TermScoreTable& before, const TermScoreTable& after, int k) {
  auto ranked = [](const TermScoreTable& t) {
    auto rows = t.rows;
    std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
      if (a.score != b.score) return a.score > b.score;
      return a.term < b.term;
    });
    return rows;
  };
  const auto b = ranked(before), a = ranked(after);
  std::string out = "rank\tbefore_term\tbefore_score\tafter_term\tafter_score\n";
  for (int r = 0; r < k; ++r) {
    const auto i = static_cast<std::size_t>(r);
    out += std::to_string(r + 1) + '\t';
    out += i < b.size() ? b[i].term + '\t' + format_fixed(b[i].score) : std::string("\t");
    out += '\t';
    out += i < a.size() ? a[i].term + '\t' + format_fixed(a[i].score) : std::string("\t");
    out += '\n';
  }
  return out;
}

std::string term_scores_tsv(const TermScoreTable& t) {
  std::string out = "column\tterm\tscore\tsupport\n";
  for (const auto& r : t.rows) {
    out += std::to_string(r.column) + '\t' + r.term + '\t' + format_fixed(r.score) + '\t' + std::to_string(r.support) + '\n';
  }
  return out;
}

std::string matrix_tsv(const Matrix& X, std::span<const std::string> names, std::span<const std::size_t> idx,
                       const PreparedCohort& c) {
  std::string out = "patient_id\tlabel";
  for (const auto& n : names) out += '\t' + n;
  out += '\n';
  char buf[64];
  for (std::size_t r = 0; r < X.rows; ++r) {
    out += c.records[idx[r]].patient_id + '\t' + std::to_string(c.labels[idx[r]]);
    for (std::size_t k = 0; k < X.cols; ++k) {
      std::snprintf(buf, sizeof buf, "\t%.17g", X(r, k));
      out += buf;
    }
    out += '\n';
  }
  return out;
}

RunReport Run::execute() {
  cfg_.validate();
  fs::create_directories(out_);
  fs::remove(out_ / "run_manifest.json");
  report_.resolved_config = cfg_.to_json();
  emit_json("resolved_config.json", report_.resolved_config);

  std::vector<PatientRecord> records;
  stage("load_corpus", [&] {
    if (cfg_.corpus_path.empty()) {
      records = generate_corpus(cfg_.synthetic);
      emit("data/corpus.jsonl", corpus_to_jsonl(records));
    } else {
      records = read_corpus(cfg_.corpus_path);
    }
    if (records.empty()) throw DataError("corpus is empty");
  });

  stage("split", [&] {
    cohort_ = prepare_cohort(std::move(records), cfg_.fractions, cfg_.split_seed);
    if (cfg_.permute_test_labels) permute_labels(cohort_, cfg_.seed);
    y_train_ = gather(cohort_.labels, cohort_.train);
    y_val_ = gather(cohort_.labels, cohort_.val);
    y_test_ = gather(cohort_.labels, cohort_.test);
    emit_json("split_manifest.json", split_to_json(cohort_.split));
    json eligibility = json::object();
    std::size_t notes = 0, eligible = 0;
    for (const auto& r : cohort_.records) {
      notes += r.notes.size();
      eligible += eligible_notes(r).size();
    }
    eligibility["n_patients"] = cohort_.records.size();
    eligibility["n_notes"] = notes;
    eligibility["n_eligible_notes"] = eligible;
    eligibility["n_positive"] = std::count(cohort_.labels.begin(), cohort_.labels.end(), 1);
    emit_json("data/eligibility.json", eligibility);
  });

  stage("rule_mask", [&] {
    rules_ = MaskRuleSet::load(cfg_.resolved_mask_rules());
    rule_docs_.reserve(cohort_.documents.size());
    for (const auto& d : cohort_.documents) rule_docs_.push_back(apply_rule_mask(d, rules_));
  });

  stage("tfidf", [&] {
    std::vector<std::string> train_docs;
    for (auto i : cohort_.train) train_docs.push_back(rule_docs_[i]);
    tfidf_rule_ = TfidfModel::fit(train_docs, cfg_.tfidf);
    emit_json("models/tfidf_rule.json", tfidf_rule_.to_json());
    report_.dimensions["text_unaudited"] = tfidf_rule_.size();
  });

  stage("tabular", [&] {
    std::vector<StructuredRow> rows;
    for (auto i : cohort_.train) rows.push_back(cohort_.records[i].structured);
    tabular_ = cfg_.structured_columns.empty() ? TabularPipeline::fit(rows)
                                               : TabularPipeline::fit(rows, cfg_.structured_columns);
    emit_json("models/tabular.json", tabular_.to_json());
    report_.dimensions["structured"] = tabular_.size();
  });

  const auto docs_rule = std::span<const std::string>(rule_docs_);
  stage("fuse", [&] {
    for (const auto& [name, idx] : {std::pair{"train", &cohort_.train}, {"val", &cohort_.val}, {"test", &cohort_.test}}) {
      matrices_[std::string("fused_") + name] = build_matrix(*idx, docs_rule, cohort_.records, &tfidf_rule_, &tabular_);
    }
    report_.dimensions["fused_unaudited"] = matrices_["fused_train"].cols;
    if (cfg_.write_matrices) {
      const auto names = feature_names(&tfidf_rule_, &tabular_);
      for (const auto& [name, idx] : {std::pair{"train", &cohort_.train}, {"val", &cohort_.val}, {"test", &cohort_.test}}) {
        emit(std::string("matrices/fused_") + name + ".tsv", matrix_tsv(matrices_[std::string("fused_") + name], names, *idx, cohort_));
      }
    }
  });

  const std::string fused_hash = schema_hash(feature_names(&tfidf_rule_, &tabular_));
  if (cfg_.stop != PipelineStop::kFeaturize && cfg_.stop != PipelineStop::kAudit) {
    stage("baselines", [&] {
      for (auto kind : {LearnerKind::kLogistic, LearnerKind::kGbdt}) {
        const std::string name = "baseline_" + to_string(kind);
        models_[name] = train_model(spec_for(kind, cfg_), matrices_["fused_train"], y_train_);
        save_model(name, {"models/" + name + ".json", "rule", "models/tfidf_rule.json", true, ""},
                   model_to_json(models_[name], fused_hash));
      }
    });

    stage("evaluate_baselines", [&] {
      for (const std::string name : {"baseline_logistic", "baseline_gbdt"}) {
        const auto p = score(models_[name], matrices_["fused_val"]);
        evaluate("baseline_fusion", name, index_[name].file, "val", cohort_.val, p);
        report_.reliability[name + "@val"] = reliability_curve(p, y_val_);
      }
    });
  }

  if (cfg_.stop == PipelineStop::kFeaturize || cfg_.stop == PipelineStop::kTrain) {
    emit_json("models/index.json", [&] {
      json j = json::object();
      for (const auto& [n, e] : index_) j[n] = entry_to_json(e);
      return j;
    }());
    emit_json("report.json", report_.to_json());
    write_manifest("ok", "", "");
    return report_;
  }

  TermScoreTable before;
  stage("probe", [&] {
    TfidfModel probe_tfidf;
    LogisticModel probe;
    before = probe_scores(cohort_.documents, probe_tfidf, probe, "raw");
    emit_json("models/tfidf_probe.json", probe_tfidf.to_json());
    const auto hash = schema_hash(feature_names(&probe_tfidf, nullptr));
    models_["probe"] = probe;
    save_model("probe", {"models/probe.json", "raw", "models/tfidf_probe.json", false, ""}, model_to_json(probe, hash));
    emit("audit/term_scores.tsv", term_scores_tsv(before));
  });

  stage("audit_mask", [&] {
    lexicon_ = Lexicon::load(cfg_.resolved_lexicon());
    report_.audit_mask = derive_audit_mask(before, lexicon_, cfg_.audit.quantile, cfg_.audit.mode);
    emit_json("audit/audit_mask.json", report_.audit_mask->to_json());
    audited_docs_.reserve(rule_docs_.size());
    for (const auto& d : rule_docs_) audited_docs_.push_back(apply_audit_mask(d, *report_.audit_mask, rules_.mask_token));

    std::vector<std::string> raw_audited;
    raw_audited.reserve(cohort_.documents.size());
    for (const auto& d : cohort_.documents) raw_audited.push_back(apply_audit_mask(d, *report_.audit_mask, rules_.mask_token));
    TfidfModel t;
    LogisticModel p;
    const auto after = probe_scores(raw_audited, t, p, "audited");
    emit("audit/top_terms.tsv", top_terms_tsv(before, after, cfg_.audit.top_k));
  });

  if (cfg_.stop == PipelineStop::kAudit) {
    emit_json("models/index.json", [&] {
      json j = json::object();
      for (const auto& [n, e] : index_) j[n] = entry_to_json(e);
      return j;
    }());
    emit_json("report.json", report_.to_json());
    write_manifest("ok", "", "");
    return report_;
  }

  const auto docs_audited = std::span<const std::string>(audited_docs_);
  stage("audited_retrain", [&] {
    std::vector<std::string> train_docs;
    for (auto i : cohort_.train) train_docs.push_back(audited_docs_[i]);
    tfidf_audited_ = TfidfModel::fit(train_docs, cfg_.tfidf);
    emit_json("models/tfidf_audited.json", tfidf_audited_.to_json());
    report_.dimensions["text_audited"] = tfidf_audited_.size();
    for (const auto& [name, idx] : {std::pair{"train", &cohort_.train}, {"val", &cohort_.val}, {"test", &cohort_.test}}) {
      matrices_[std::string("audited_") + name] =
          build_matrix(*idx, docs_audited, cohort_.records, &tfidf_audited_, &tabular_);
    }
    report_.dimensions["fused_audited"] = matrices_["audited_train"].cols;
    const auto hash = schema_hash(feature_names(&tfidf_audited_, &tabular_));
    for (auto kind : {LearnerKind::kLogistic, LearnerKind::kGbdt}) {
      const std::string name = "audited_" + to_string(kind);
      models_[name] = train_model(spec_for(kind, cfg_), matrices_["audited_train"], y_train_);
      save_model(name, {"models/" + name + ".json", "audited", "models/tfidf_audited.json", true, ""},
                 model_to_json(models_[name], hash));
    }
  });

  stage("evaluate_audited", [&] {
    for (const std::string name : {"audited_logistic", "audited_gbdt"}) {
      const auto p = score(models_[name], matrices_["audited_val"]);
      evaluate("audited_fusion", name, index_[name].file, "val", cohort_.val, p);
      report_.reliability[name + "@val"] = reliability_curve(p, y_val_);
    }
  });

  const bool clean = cfg_.calibration_mode == CalibrationMode::kClean;
  const std::string eval_split = clean ? "test" : "val";
  const auto& eval_idx = clean ? cohort_.test : cohort_.val;
  const auto& eval_y = clean ? y_test_ : y_val_;
  const std::string eval_matrix = clean ? "fused_test" : "fused_val";

  stage("calibration", [&] {
    for (const std::string base : {"baseline_logistic", "baseline_gbdt"}) {
      const auto p_val = score(models_[base], matrices_["fused_val"]);
      const auto cal = fit_platt(p_val, y_val_);
      if (cal.a < 0.0) warnings_.push_back(base + ": calibration slope is negative (reversed score ordering)");
      const std::string name = base + "_calibrated";
      calibrators_[name] = cal;
      emit_json("models/" + name + "_platt.json", cal.to_json());
      index_[name] = {index_[base].file, "rule", "models/tfidf_rule.json", true, "models/" + name + "_platt.json"};
      const auto p = score(models_[base], matrices_[eval_matrix], cal);
      evaluate("calibrated_ensembles", name, index_[name].calibrator, eval_split, eval_idx, p);
      report_.reliability[name + "@" + eval_split] = reliability_curve(p, eval_y);
    }
  });

  stage("ensembles", [&] {
    const auto& X = matrices_[eval_matrix];
    const auto p_lr = score(models_["baseline_logistic"], X, calibrators_["baseline_logistic_calibrated"]);
    const auto p_gb = score(models_["baseline_gbdt"], X, calibrators_["baseline_gbdt_calibrated"]);
    std::vector<double> vote(X.rows);
    for (std::size_t i = 0; i < X.rows; ++i) {
      const double members[] = {p_lr[i], p_gb[i]};
      vote[i] = soft_vote(members);
    }
    emit_json("models/voting.json", {{"type", "soft_vote"},
                                     {"members", {"baseline_logistic_calibrated", "baseline_gbdt_calibrated"}}});
    index_["voting"] = {"models/voting.json", "rule", "models/tfidf_rule.json", true, ""};
    evaluate("calibrated_ensembles", "voting", "models/voting.json", eval_split, eval_idx, vote);
    report_.reliability["voting@" + eval_split] = reliability_curve(vote, eval_y);

    const StackMember members[] = {{"logistic", cfg_.logistic, true}, {"gbdt", cfg_.gbdt, true}};
    const auto stack = train_stacker(members, matrices_["fused_train"], y_train_, cfg_.stacking_folds, cfg_.stacking_seed);
    emit_json("models/stacking.json", stacker_to_json(stack, fused_hash));
    index_["stacking"] = {"models/stacking.json", "rule", "models/tfidf_rule.json", true, ""};
    const auto p = stack.predict_proba(X);
    evaluate("calibrated_ensembles", "stacking", "models/stacking.json", eval_split, eval_idx, p);
    report_.reliability["stacking@" + eval_split] = reliability_curve(p, eval_y);
    models_.erase("stacking");
    const auto p_test = stack.predict_proba(matrices_["fused_test"]);
    matrices_["stacking_test_scores"] = Matrix(p_test.size(), 1);
    std::copy(p_test.begin(), p_test.end(), matrices_["stacking_test_scores"].data.begin());
  });

  stage("ablations", [&] {
    // Structured only.
    {
      const std::string name = "structured_only_" + to_string(cfg_.ablation.structured_learner);
      const auto Xtr = build_matrix(cohort_.train, docs_rule, cohort_.records, nullptr, &tabular_);
      report_.dimensions["ablation_structured"] = Xtr.cols;
      models_[name] = train_model(spec_for(cfg_.ablation.structured_learner, cfg_), Xtr, y_train_);
      save_model(name, {"models/" + name + ".json", "none", "", true, ""},
                 model_to_json(models_[name], schema_hash(feature_names(nullptr, &tabular_))));
      matrices_[name + "_val"] = build_matrix(cohort_.val, docs_rule, cohort_.records, nullptr, &tabular_);
      matrices_[name + "_test"] = build_matrix(cohort_.test, docs_rule, cohort_.records, nullptr, &tabular_);
    }
    // Text only, before and after the audit mask.
    for (const auto& [variant, tfidf, docs, tfidf_file] :
         {std::tuple{"unaudited", &tfidf_rule_, docs_rule, "models/tfidf_rule.json"},
          std::tuple{"audited", &tfidf_audited_, docs_audited, "models/tfidf_audited.json"}}) {
      const std::string name = std::string("text_only_") + variant + "_" + to_string(cfg_.ablation.text_learner);
      const auto Xtr = build_matrix(cohort_.train, docs, cohort_.records, tfidf, nullptr);
      models_[name] = train_model(spec_for(cfg_.ablation.text_learner, cfg_), Xtr, y_train_);
      save_model(name, {"models/" + name + ".json", variant == std::string("audited") ? "audited" : "rule", tfidf_file, false, ""},
                 model_to_json(models_[name], schema_hash(feature_names(tfidf, nullptr))));
      matrices_[name + "_val"] = build_matrix(cohort_.val, docs, cohort_.records, tfidf, nullptr);
      matrices_[name + "_test"] = build_matrix(cohort_.test, docs, cohort_.records, tfidf, nullptr);
    }
    for (const auto& name : {"structured_only_" + to_string(cfg_.ablation.structured_learner),
                             "text_only_unaudited_" + to_string(cfg_.ablation.text_learner),
                             "text_only_audited_" + to_string(cfg_.ablation.text_learner)}) {
      const auto p = score(models_[name], matrices_[name + "_val"]);
      evaluate("ablation", name, index_[name].file, "val", cohort_.val, p);
      report_.reliability[name + "@val"] = reliability_curve(p, y_val_);
    }
  });

  stage("final_test", [&] {
    auto add = [&](const std::string& name, const std::string& file, const std::vector<double>& p) {
      evaluate("final_test", name, file, "test", cohort_.test, p);
    };
    for (const std::string name : {"baseline_logistic", "baseline_gbdt"}) {
      add(name, index_[name].file, score(models_[name], matrices_["fused_test"]));
    }
    std::vector<double> cal_lr, cal_gb;
    for (const std::string name : {"baseline_logistic_calibrated", "baseline_gbdt_calibrated"}) {
      const std::string base = name.substr(0, name.size() - std::string("_calibrated").size());
      auto p = score(models_[base], matrices_["fused_test"], calibrators_[name]);
      (base == "baseline_logistic" ? cal_lr : cal_gb) = p;
      if (!clean) add(name, index_[name].calibrator, p);
    }
    if (!clean) {
      std::vector<double> vote(cal_lr.size());
      for (std::size_t i = 0; i < vote.size(); ++i) {
        const double members[] = {cal_lr[i], cal_gb[i]};
        vote[i] = soft_vote(members);
      }
      add("voting", "models/voting.json", vote);
      const auto& s = matrices_["stacking_test_scores"].data;
      add("stacking", "models/stacking.json", s);
    }
    for (const std::string name : {"audited_logistic", "audited_gbdt"}) {
      add(name, index_[name].file, score(models_[name], matrices_["audited_test"]));
    }
    for (const auto& name : {"structured_only_" + to_string(cfg_.ablation.structured_learner),
                             "text_only_unaudited_" + to_string(cfg_.ablation.text_learner),
                             "text_only_audited_" + to_string(cfg_.ablation.text_learner)}) {
      add(name, index_[name].file, score(models_[name], matrices_[name + "_test"]));
    }
  });

  stage("report", [&] {
    json idx = json::object();
    for (const auto& [n, e] : index_) idx[n] = entry_to_json(e);
    emit_json("models/index.json", idx);
    for (const auto& [table, rows] : report_.tables) {
      std::vector<MetricsReport> ms;
      json arr = json::array();
      for (const auto& r : rows) {
        ms.push_back(r.metrics);
        json m = metrics_to_json(r.metrics);
        m["model_file"] = r.model_file;
        m["split"] = r.split;
        arr.push_back(m);
      }
      emit("tables/" + table + ".tsv", metrics_table(ms));
      emit_json("metrics/" + table + ".json", arr);
    }
    for (const auto& [name, curve] : report_.reliability) {
      std::string file = name;
      std::replace(file.begin(), file.end(), '@', '_');
      emit("reliability/" + file + ".tsv", reliability_table(curve));
    }
    if (cfg_.write_plots) {
      std::map<std::string, ReliabilityCurve> base, cal;
      for (const auto& [name, curve] : report_.reliability) {
        if (name.rfind("baseline_", 0) == 0 && name.find("_calibrated") == std::string::npos) base[name] = curve;
        if (name.find("_calibrated") != std::string::npos || name.rfind("voting", 0) == 0 ||
            name.rfind("stacking", 0) == 0) {
          cal[name] = curve;
        }
      }
      emit("plots/reliability_baseline.svg", reliability_svg(base, "Baseline fusion"));
      emit("plots/reliability_calibrated.svg", reliability_svg(cal, "Calibrated and ensembles"));
    }
    emit_json("warnings.json", warnings_);
    report_.artifacts.push_back("report.json");
    write_file(out_ / "report.json", dump_json(report_.to_json()));
  });

  write_manifest("ok", "", "");
  return report_;
}

}  // namespace

RunReport run_pipeline(const PipelineConfig& config) {
  Run run(config);
  return run.execute();
}

namespace {

MetricsReport metrics_from_json(const json& j) {
  MetricsReport m;
  auto cls = [](const json& c) {
    ClassMetrics k;
    k.precision = c.at("precision").get<double>();
    k.recall = c.at("recall").get<double>();
    k.f1 = c.at("f1").get<double>();
    k.degenerate = c.value("degenerate", false);
    return k;
  };
  m.name = j.at("name").get<std::string>();
  m.n = j.at("n").get<std::size_t>();
  m.accuracy = j.at("accuracy").get<double>();
  m.class0 = cls(j.at("class0"));
  m.class1 = cls(j.at("class1"));
  m.roc_auc = j.at("roc_auc").get<double>();
  m.brier = j.at("brier").get<double>();
  const auto& c = j.at("confusion");
  m.confusion = {c.at("tn").get<std::size_t>(), c.at("fp").get<std::size_t>(), c.at("fn").get<std::size_t>(),
                 c.at("tp").get<std::size_t>(), c.at("threshold").get<double>()};
  return m;
}

ReliabilityCurve reliability_from_json(const json& j) {
  ReliabilityCurve c;
  for (const auto& b : j.at("bins")) {
    ReliabilityBin bin;
    bin.low = b.at("low").get<double>();
    bin.high = b.at("high").get<double>();
    bin.count = b.at("count").get<std::size_t>();
    if (!b.at("mean_predicted").is_null()) bin.mean_predicted = b["mean_predicted"].get<double>();
    if (!b.at("event_rate").is_null()) bin.event_rate = b["event_rate"].get<double>();
    c.bins.push_back(bin);
  }
  return c;
}

json load_json(const fs::path& p) {
  try {
    return json::parse(read_file(p));
  } catch (const json::exception& e) {
    throw DataError("malformed JSON in " + p.string() + ": " + e.what());
  }
}

}  // namespace

MetricsReport evaluate_artifact(const fs::path& run_dir, const std::string& model_name, const std::string& split_name) {
  const json index = load_json(run_dir / "models" / "index.json");

  const json resolved = load_json(run_dir / "resolved_config.json");
  const bool permuted = resolved.at("debug").at("permute_test_labels").get<bool>();
  const auto seed = resolved.at("seed").get<std::uint64_t>();

  std::vector<PatientRecord> records;
  if (resolved.at("corpus").at("path").is_null()) {
    records = read_corpus(run_dir / "data" / "corpus.jsonl");
  } else {
    records = read_corpus(resolved["corpus"]["path"].get<std::string>());
  }
  const CohortSplit split = split_from_json(load_json(run_dir / "split_manifest.json"));
  PreparedCohort c = prepare_cohort(std::move(records), split.fractions, split.seed);
  if (permuted) permute_labels(c, seed);

  const std::vector<std::size_t>* idx = nullptr;
  if (split_name == "train") idx = &c.train;
  else if (split_name == "val") idx = &c.val;
  else if (split_name == "test") idx = &c.test;
  else throw ConfigError("split must be train, val or test");

  std::map<std::string, std::vector<std::string>> docs_by_text;
  std::function<std::vector<double>(const std::string&)> probs_of = [&](const std::string& name) {
    if (!index.contains(name)) throw DataError("model '" + name + "' not found in run index");
    const auto& e = index[name];
    const std::string text = e.at("text").get<std::string>();
    if (!docs_by_text.contains(text)) {
      std::vector<std::string> docs = c.documents;
      if (text == "rule" || text == "audited") {
        const auto rules = MaskRuleSet::load(resolved.at("mask_rules").get<std::string>());
        for (auto& d : docs) d = apply_rule_mask(d, rules);
        if (text == "audited") {
          const auto mask = AuditMask::from_json(load_json(run_dir / "audit" / "audit_mask.json"));
          for (auto& d : docs) d = apply_audit_mask(d, mask, rules.mask_token);
        }
      }
      docs_by_text[text] = std::move(docs);
    }
    const auto& docs = docs_by_text[text];
    const json body = load_json(run_dir / e.at("file").get<std::string>());
    if (body.value("type", "") == "soft_vote") {
      std::vector<std::vector<double>> member_probs;
      for (const auto& m : body.at("members")) member_probs.push_back(probs_of(m.get<std::string>()));
      std::vector<double> out(idx->size());
      std::vector<double> row(member_probs.size());
      for (std::size_t i = 0; i < out.size(); ++i) {
        for (std::size_t m = 0; m < member_probs.size(); ++m) row[m] = member_probs[m][i];
        out[i] = soft_vote(row);
      }
      return out;
    }
    std::optional<TfidfModel> tfidf;
    if (!e.at("tfidf").is_null()) tfidf = TfidfModel::from_json(load_json(run_dir / e["tfidf"].get<std::string>()));
    std::optional<TabularPipeline> tab;
    if (e.at("structured").get<bool>()) tab = TabularPipeline::from_json(load_json(run_dir / "models" / "tabular.json"));
    const Matrix X = build_matrix(*idx, docs, c.records, tfidf ? &*tfidf : nullptr, tab ? &*tab : nullptr);
    if (body.value("type", "") == "stacked") return stacker_from_json(body).predict_proba(X);
    auto p = predict_proba(model_from_json(body), X);
    if (!e.at("calibrator").is_null()) {
      p = PlattModel::from_json(load_json(run_dir / e["calibrator"].get<std::string>())).apply(p);
    }
    return p;
  };
  const auto p = probs_of(model_name);
  return evaluate_scores(model_name, p, gather(c.labels, *idx));
}

void render_report(const fs::path& run_dir, const fs::path& out_dir, bool plots) {
  const json report = load_json(run_dir / "report.json");
  try {
    for (const auto& [table, rows] : report.at("tables").items()) {
      std::vector<MetricsReport> ms;
      for (const auto& r : rows) ms.push_back(metrics_from_json(r));
      write_file(out_dir / "tables" / (table + ".tsv"), metrics_table(ms));
    }
    std::map<std::string, ReliabilityCurve> curves;
    for (const auto& [name, cj] : report.at("reliability").items()) {
      curves[name] = reliability_from_json(cj);
      std::string file = name;
      std::replace(file.begin(), file.end(), '@', '_');
      write_file(out_dir / "reliability" / (file + ".tsv"), reliability_table(curves[name]));
    }
    if (plots) write_file(out_dir / "plots" / "reliability_all.svg", reliability_svg(curves, "Reliability"));
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed report.json: ") + e.what());
  }
}

}  // namespace leakaudit
