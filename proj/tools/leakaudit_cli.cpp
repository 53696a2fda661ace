// leakaudit command-line interface.

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "leakaudit/error.hpp"
#include "leakaudit/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace leakaudit;

namespace {

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string mode;
  std::string audit_mode;
  std::optional<double> quantile;
  std::string lexicon;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config, "Pipeline config (JSON)")->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "Global seed, overrides the config");
  cmd->add_option("--out", o.out, "Output directory");
  cmd->add_option("--mode", o.mode, "Calibration mode")->check(CLI::IsMember({"paper-replication", "clean"}));
  cmd->add_option("--audit-mode", o.audit_mode, "Audit mask combination")->check(CLI::IsMember({"union", "intersection"}));
  cmd->add_option("--quantile", o.quantile, "Attribution quantile for the audit mask");
}

PipelineConfig resolve_config(const CommonOptions& o) {
  PipelineConfig c = o.config.empty() ? PipelineConfig{} : PipelineConfig::load(o.config);
  if (o.seed) c.set_seed(*o.seed);
  if (!o.out.empty()) c.output_dir = o.out;
  if (!o.mode.empty()) c.calibration_mode = calibration_mode_from_string(o.mode);
  if (!o.audit_mode.empty()) c.audit.mode = audit_mode_from_string(o.audit_mode);
  if (o.quantile) c.audit.quantile = *o.quantile;
  if (!o.lexicon.empty()) c.audit.lexicon_path = o.lexicon;
  return c;
}

fs::path require_out(const CommonOptions& o, const PipelineConfig& c) {
  return o.out.empty() ? c.output_dir : fs::path(o.out);
}

void print_tables(const RunReport& r) {
  for (const auto& [name, rows] : r.tables) {
    std::vector<MetricsReport> ms;
    for (const auto& row : rows) ms.push_back(row.metrics);
    std::cout << "== " << name << " ==\n" << metrics_table(ms);
  }
}

int cmd_generate(const CommonOptions& o) {
  const auto c = resolve_config(o);
  const auto out = require_out(o, c);
  const auto records = generate_corpus(c.synthetic);
  write_corpus(out / "corpus.jsonl", records);
  json sc;
  to_json(sc, c.synthetic);
  write_file(out / "synthetic_config.json", dump_json(sc));
  std::size_t pos = 0;
  for (const auto& r : records) pos += static_cast<std::size_t>(derive_outcome(r));
  std::cout << "wrote " << records.size() << " patients (" << pos << " positive) to " << (out / "corpus.jsonl").string()
            << "\n";
  return 0;
}

int cmd_filter(const std::string& corpus, const fs::path& out) {
  const auto records = read_corpus(corpus);
  json patients = json::array();
  std::vector<PatientRecord> filtered;
  std::size_t notes = 0, kept = 0;
  for (const auto& r : records) {
    PatientRecord f = r;
    f.notes = eligible_notes(r);
    std::vector<int> days;
    for (const auto& n : f.notes) days.push_back(n.day_offset);
    patients.push_back({{"patient_id", r.patient_id},
                        {"los_days", r.los_days},
                        {"label", derive_outcome(r)},
                        {"n_notes", r.notes.size()},
                        {"n_eligible", f.notes.size()},
                        {"eligible_days", days}});
    notes += r.notes.size();
    kept += f.notes.size();
    filtered.push_back(std::move(f));
  }
  write_file(out / "eligibility.json",
             dump_json({{"n_patients", records.size()}, {"n_notes", notes}, {"n_eligible", kept}, {"patients", patients}}));
  write_corpus(out / "eligible_corpus.jsonl", filtered);
  std::cout << kept << " of " << notes << " notes eligible across " << records.size() << " patients\n";
  return 0;
}

int cmd_mask(const std::string& corpus, const std::string& rules_path, bool no_rules, const std::string& audit_path,
             bool normalize, const fs::path& out) {
  auto records = read_corpus(corpus);
  const MaskRuleSet rules = rules_path.empty() ? MaskRuleSet::load(default_data_dir() / "mask_rules.json")
                                               : MaskRuleSet::load(rules_path);
  std::optional<AuditMask> audit;
  if (!audit_path.empty()) audit = AuditMask::from_json(json::parse(read_file(audit_path)));
  std::string diff;
  std::size_t changed = 0;
  for (auto& r : records) {
    for (auto& n : r.notes) {
      std::string text = normalize ? normalize_text(n.text) : n.text;
      if (!no_rules) text = apply_rule_mask(text, rules);
      if (audit) text = apply_audit_mask(text, *audit, rules.mask_token);
      if (text == n.text) continue;
      json d = {{"patient_id", r.patient_id}, {"day_offset", n.day_offset}, {"before", n.text}, {"after", text}};
      diff += d.dump() + "\n";
      n.text = std::move(text);
      ++changed;
    }
  }
  write_corpus(out / "masked_corpus.jsonl", records);
  write_file(out / "mask_diff.jsonl", diff);
  std::cout << changed << " notes changed\n";
  return 0;
}

TermScoreTable read_term_scores(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read term score table " + path);
  TermScoreTable t;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || (lineno == 1 && line.rfind("column", 0) == 0)) continue;
    std::istringstream ls(line);
    std::string col, term, score, support;
    if (!std::getline(ls, col, '\t') || !std::getline(ls, term, '\t') || !std::getline(ls, score, '\t') ||
        !std::getline(ls, support, '\t')) {
      throw DataError(path + ":" + std::to_string(lineno) + ": expected column, term, score, support");
    }
    try {
      t.rows.push_back({term, std::stoul(col), std::stod(score), std::stoul(support)});
    } catch (const std::exception&) {
      throw DataError(path + ":" + std::to_string(lineno) + ": malformed number");
    }
  }
  return t;
}

int cmd_audit_table(const CommonOptions& o, const std::string& term_scores) {
  const auto c = resolve_config(o);
  const auto out = require_out(o, c);
  const auto table = read_term_scores(term_scores);
  const auto lexicon = Lexicon::load(c.resolved_lexicon());
  const auto mask = derive_audit_mask(table, lexicon, c.audit.quantile, c.audit.mode);
  write_file(out / "audit_mask.json", dump_json(mask.to_json()));
  std::cout << "threshold " << format_fixed(mask.threshold_value) << ", " << mask.terms.size() << " terms masked\n";
  return 0;
}

int run_stage(const CommonOptions& o, PipelineStop stop, bool matrices) {
  auto c = resolve_config(o);
  c.stop = stop;
  if (matrices) c.write_matrices = true;
  const auto report = run_pipeline(c);
  print_tables(report);
  if (report.audit_mask) {
    std::cout << "audit mask: " << report.audit_mask->terms.size() << " terms, threshold "
              << format_fixed(report.audit_mask->threshold_value) << "\n";
  }
  std::cout << "artifacts in " << c.output_dir.string() << "\n";
  return 0;
}

int cmd_evaluate(const std::string& scores, const std::string& name, const std::string& run, const std::string& model,
                 const std::string& split, const fs::path& out) {
  MetricsReport m;
  std::optional<ReliabilityCurve> curve;
  if (!scores.empty()) {
    const auto rows = read_scores(scores);
    std::vector<double> p;
    std::vector<Label> y;
    for (const auto& r : rows) {
      p.push_back(r.prob);
      y.push_back(r.label);
    }
    m = evaluate_scores(name, p, y);
    curve = reliability_curve(p, y);
  } else {
    if (run.empty() || model.empty()) throw ConfigError("evaluate needs --scores, or --run with --model");
    m = evaluate_artifact(run, model, split);
  }
  const MetricsReport rows[] = {m};
  const std::string table = metrics_table(rows);
  std::cout << table;
  if (!out.empty()) {
    write_file(out / "metrics.json", dump_json(metrics_to_json(m)));
    write_file(out / "metrics.tsv", table);
    if (curve) write_file(out / "reliability.tsv", reliability_table(*curve));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Leakage-aware clinical text and tabular prediction"};
  app.require_subcommand(1);

  CommonOptions common;
  std::string corpus, rules, audit_mask, term_scores, scores, name = "scores", run, model, split = "val";
  bool no_rules = false, normalize = false, no_plots = false;

  auto* generate = app.add_subcommand("generate", "Write a synthetic corpus");
  add_common(generate, common);

  auto* filter = app.add_subcommand("filter", "Temporal eligibility report");
  filter->add_option("--corpus", corpus, "Corpus JSONL")->required()->check(CLI::ExistingFile);
  filter->add_option("--out", common.out, "Output directory")->required();

  auto* mask = app.add_subcommand("mask", "Apply rule and/or audit masks to a corpus");
  mask->add_option("--corpus", corpus, "Corpus JSONL")->required()->check(CLI::ExistingFile);
  mask->add_option("--rules", rules, "Mask rule file")->check(CLI::ExistingFile);
  mask->add_flag("--no-rules", no_rules, "Skip the rule mask");
  mask->add_option("--audit-mask", audit_mask, "Audit mask JSON")->check(CLI::ExistingFile);
  mask->add_flag("--normalize", normalize, "Normalize text before masking");
  mask->add_option("--out", common.out, "Output directory")->required();

  auto* featurize = app.add_subcommand("featurize", "Emit fused feature matrices");
  add_common(featurize, common);
  auto* train = app.add_subcommand("train", "Train and validate baseline fused models");
  add_common(train, common);

  auto* audit = app.add_subcommand("audit", "Probe attribution and audit-mask derivation");
  add_common(audit, common);
  audit->add_option("--term-scores", term_scores, "Derive the mask from an existing term score table")
      ->check(CLI::ExistingFile);
  audit->add_option("--lexicon", common.lexicon, "Proxy lexicon")->check(CLI::ExistingFile);

  auto* evaluate = app.add_subcommand("evaluate", "Score files or run artifacts to metrics");
  evaluate->add_option("--scores", scores, "Score TSV (patient_id, label, prob)")->check(CLI::ExistingFile);
  evaluate->add_option("--name", name, "Row name");
  evaluate->add_option("--run", run, "Run directory")->check(CLI::ExistingDirectory);
  evaluate->add_option("--model", model, "Model name in the run index");
  evaluate->add_option("--split", split, "train, val or test")->check(CLI::IsMember({"train", "val", "test"}));
  evaluate->add_option("--out", common.out, "Output directory");

  auto* pipeline = app.add_subcommand("pipeline", "Run the full pipeline");
  add_common(pipeline, common);

  auto* report = app.add_subcommand("report", "Re-render tables and plots from a run");
  report->add_option("--run", run, "Run directory")->required()->check(CLI::ExistingDirectory);
  report->add_option("--out", common.out, "Output directory (default: the run directory)");
  report->add_flag("--no-plots", no_plots, "Skip SVG plots");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return e.get_exit_code() == 0 ? 0 : 2;
  }

  try {
    if (generate->parsed()) return cmd_generate(common);
    if (filter->parsed()) return cmd_filter(corpus, common.out);
    if (mask->parsed()) return cmd_mask(corpus, rules, no_rules, audit_mask, normalize, common.out);
    if (featurize->parsed()) return run_stage(common, PipelineStop::kFeaturize, true);
    if (train->parsed()) return run_stage(common, PipelineStop::kTrain, false);
    if (audit->parsed()) {
      if (!term_scores.empty()) return cmd_audit_table(common, term_scores);
      return run_stage(common, PipelineStop::kAudit, false);
    }
    if (evaluate->parsed()) return cmd_evaluate(scores, name, run, model, split, common.out);
    if (pipeline->parsed()) return run_stage(common, PipelineStop::kFull, false);
    if (report->parsed()) {
      render_report(run, common.out.empty() ? fs::path(run) : fs::path(common.out), !no_plots);
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const StageError& e) {
    std::cerr << "stage '" << e.stage() << "' failed: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
