// Command-line front end: generate data, train probes, calibrate and
// evaluate delegation policies.
//
// Exit codes: 0 success, 1 invalid input or arguments, 2 runtime failure.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "ctd/ctd.hpp"

namespace fs = std::filesystem;
using namespace ctd;

namespace {

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "out";
};

// Inputs shared by every command that works on a scored dataset.
struct ModelInputs {
  std::string data;
  std::string probe;
  std::string dv;
};

Config load_config(const Globals& g) {
  Config c = g.config_path.empty() ? Config{} : Config::load(g.config_path);
  if (g.seed) {
    c.set("seed", std::to_string(*g.seed));
    c.set("split.seed", std::to_string(*g.seed));
  }
  return c;
}

std::string out_path(const Globals& g, const std::string& name) {
  fs::create_directories(g.out_dir);
  return (fs::path(g.out_dir) / name).string();
}

std::string or_default(const std::string& value, const Globals& g, const std::string& name) {
  return value.empty() ? (fs::path(g.out_dir) / name).string() : value;
}

void add_model_inputs(CLI::App* cmd, ModelInputs& in, bool with_dv = true) {
  cmd->add_option("--data", in.data, "Dataset JSONL (default <out-dir>/data.jsonl)");
  cmd->add_option("--probe", in.probe, "Safety probe JSON (default <out-dir>/probe.json)");
  if (with_dv) cmd->add_option("--dv", in.dv, "DV probe JSON (default <out-dir>/dv.json)");
}

Partition<ScoredExample> load_scored(const Globals& g, const ModelInputs& in, const Config& c) {
  const auto pool = load_jsonl(or_default(in.data, g, "data.jsonl"));
  const auto probe = load_model(or_default(in.probe, g, "probe.json"));
  const auto dv = load_model(or_default(in.dv, g, "dv.json"));
  return score_partition(pool, probe, dv, split_spec_from_config(c));
}

template <class T>
T pick(const std::optional<T>& cli, T from_config) {
  return cli ? *cli : from_config;
}

// ---------------------------------------------------------------------------

int cmd_generate(const Globals& g, const std::optional<std::string>& preset_name) {
  Config c = load_config(g);
  if (preset_name) c.set("preset", *preset_name);
  if (!c.contains("preset") && !c.contains("dim")) c.set("preset", "strong_expert");
  const auto cfg = synth::from_config(c);
  const auto data = synth::generate(cfg);
  const auto train = synth::generate_probe_training(cfg);
  const auto data_path = out_path(g, "data.jsonl");
  const auto train_path = out_path(g, "probe_train.jsonl");
  write_jsonl(data_path, data);
  write_jsonl(train_path, train);
  std::printf("wrote %zu examples to %s\nwrote %zu examples to %s\n", data.size(), data_path.c_str(), train.size(),
              train_path.c_str());
  return 0;
}

int cmd_train_probe(const Globals& g, const std::string& train_path) {
  const Config c = load_config(g);
  const auto train = load_jsonl(or_default(train_path, g, "probe_train.jsonl"));
  const auto fit = train_logistic(train, train_config_from_config(c, "probe", TrainConfig::logistic_defaults()));
  std::vector<double> scores;
  std::vector<int> labels;
  for (const auto& x : train) {
    scores.push_back(sigmoid(fit.model.linear(x.features)));
    labels.push_back(x.label);
  }
  const auto path = out_path(g, "probe.json");
  save_model(path, fit.model);
  std::printf("iterations %zu converged %s grad_norm %.3g train_accuracy %.4f\nwrote %s\n", fit.iterations,
              fit.converged ? "yes" : "no", fit.gradient_norm, 1.0 - accuracy_error(scores, labels), path.c_str());
  return 0;
}

int cmd_train_dv(const Globals& g, const ModelInputs& in, const std::optional<std::string>& target) {
  Config c = load_config(g);
  if (target) c.set("dv.target", *target);
  const auto pipe = pipeline_from_config(c);
  const auto pool = load_jsonl(or_default(in.data, g, "data.jsonl"));
  const auto probe = load_model(or_default(in.probe, g, "probe.json"));
  const auto parts = split(pool, pipe.split);
  require(!parts.dev.empty(), "dev split is empty; set split.dev > 0");
  const auto dv = train_dv_probe(parts.dev, probe, pipe.dv_target, pipe.dv_train);
  const auto path = out_path(g, "dv.json");
  save_model(path, dv);
  std::printf("trained DV probe on %zu dev examples (target %s)\nwrote %s\n", parts.dev.size(),
              pipe.dv_target == DvTarget::continuous ? "continuous" : "binary", path.c_str());
  return 0;
}

struct CalibrateArgs {
  std::optional<double> alpha, delta;
  std::optional<std::string> signal, variant, loss;
};

int cmd_calibrate(const Globals& g, const ModelInputs& in, const CalibrateArgs& a) {
  const Config c = load_config(g);
  const auto s = load_scored(g, in, c);
  CalibrationOptions opts;
  opts.alpha = pick(a.alpha, c.get_double("alpha", opts.alpha));
  opts.delta = pick(a.delta, c.get_double("delta", opts.delta));
  opts.variant = variant_from_string(pick(a.variant, c.get_string("variant", "pareto")));
  opts.loss_kind = loss_kind_from_string(pick(a.loss, c.get_string("loss_kind", "accuracy_error")));
  opts.grid_size = static_cast<std::size_t>(c.get_int("grid_size", 100));
  const Signal signal = signal_from_string(pick(a.signal, c.get_string("signal", "dv")));
  require(signal != Signal::oracle, "the oracle signal cannot be calibrated");

  const auto res = calibrate_signal(s, signal, opts);
  ThresholdPolicyArtifact art;
  art.policy = res.policy(signal);
  art.dv_model = or_default(in.dv, g, "dv.json");
  if (signal == Signal::uncertainty) art.reference_scores = sorted_probe_scores(s.cal);

  const auto audit_path = out_path(g, "calibration.json");
  const auto policy_path = out_path(g, "policy.json");
  write_text(audit_path, to_json(res).dump(2) + "\n");
  write_text(policy_path, to_json(art).dump(2) + "\n");

  const auto eval_signal = signal_values(s.eval, signal, art.reference_scores);
  const auto decisions = apply_threshold(s.eval, eval_signal, art.policy);
  const auto labels = labels_of(s.eval);
  const auto scores = cascade_scores(decisions);
  std::printf("lambda %s%s certified %zu/%zu\n", format_number(res.selected).c_str(),
              res.fallback ? " (fallback: never delegate)" : "", res.certified.size(), res.p_values.size());
  std::printf("eval delegation_rate %.4f accuracy %.4f auroc %.4f\nwrote %s\nwrote %s\n", budget_risk(decisions),
              1.0 - accuracy_error(scores, labels), auroc(scores, labels), audit_path.c_str(), policy_path.c_str());
  return 0;
}

int cmd_sweep(const Globals& g, const ModelInputs& in, const std::optional<std::string>& format) {
  const Config c = load_config(g);
  const auto s = load_scored(g, in, c);
  const auto report = run_sweep(s, sweep_config_from_config(c));
  const auto fmt = report_format_from_string(pick(format, c.get_string("format", "csv")));
  const auto json_path = out_path(g, "sweep.json");
  emit_report(report, ReportFormat::json, json_path);
  std::printf("wrote %s\n", json_path.c_str());
  if (fmt == ReportFormat::csv) {
    const auto csv_path = out_path(g, "sweep.csv");
    emit_report(report, ReportFormat::csv, csv_path);
    std::printf("wrote %s\n", csv_path.c_str());
  }
  std::size_t failed = 0;
  for (const auto& cell : report.cells) failed += !cell.error.empty();
  std::printf("%zu cells, %zu failed, effective capacity %.4f\n", report.cells.size(), failed,
              report.effective_capacity);
  return 0;
}

struct CoverageArgs {
  std::optional<double> alpha, delta;
  std::optional<std::size_t> trials;
  std::optional<std::string> variant;
};

int cmd_coverage(const Globals& g, const ModelInputs& in, const CoverageArgs& a) {
  const Config c = load_config(g);
  const auto s = load_scored(g, in, c);
  ScoredDataset test;
  for (const auto* part : {&s.est, &s.cal, &s.eval}) test.insert(test.end(), part->begin(), part->end());

  CoverageConfig cc = coverage_config_from_config(c);
  cc.alpha = pick(a.alpha, cc.alpha);
  cc.delta = pick(a.delta, cc.delta);
  cc.trials = pick(a.trials, cc.trials);
  const auto which = pick(a.variant, c.get_string("coverage.variant", "both"));

  std::vector<CalibrationVariant> variants;
  if (which == "both") {
    variants = {CalibrationVariant::budget_only, CalibrationVariant::pareto};
  } else {
    variants = {variant_from_string(which)};
  }
  nlohmann::ordered_json out = nlohmann::ordered_json::array();
  for (auto v : variants) {
    cc.variant = v;
    const auto rep = run_coverage(test, cc);
    std::printf("%-11s violations %zu/%zu rate %.4f\n", rep.variant.c_str(), rep.violations, rep.trials,
                rep.violation_rate);
    out.push_back(to_json(rep));
  }
  const auto path = out_path(g, "coverage.json");
  write_text(path, out.dump(2) + "\n");
  std::printf("wrote %s\n", path.c_str());
  return 0;
}

struct GroupArgs {
  std::optional<double> alpha, delta;
  std::optional<std::size_t> batch_size;
  std::optional<std::string> format;
};

int cmd_group_analysis(const Globals& g, const ModelInputs& in, const GroupArgs& a) {
  const Config c = load_config(g);
  const auto s = load_scored(g, in, c);
  const double alpha = pick(a.alpha, c.get_double("alpha", 0.3));
  const double delta = pick(a.delta, c.get_double("delta", 0.1));
  const auto batch = pick(a.batch_size, static_cast<std::size_t>(c.get_int("batch_size", 128)));
  const auto loss = loss_kind_from_string(c.get_string("loss_kind", "accuracy_error"));

  std::vector<std::pair<std::string, std::vector<PolicyDecision>>> decisions;
  for (auto st : kAllStrategies) {
    decisions.emplace_back(to_string(st), run_strategy(s, st, alpha, batch, delta, loss).decisions);
  }
  const auto report = run_group_analysis(s.eval, decisions, alpha);
  const auto fmt = report_format_from_string(pick(a.format, c.get_string("format", "csv")));
  const auto path = out_path(g, fmt == ReportFormat::csv ? "groups.csv" : "groups.json");
  emit_report(report, fmt, path);
  std::printf("wrote %s\n", path.c_str());
  return 0;
}

int cmd_report(const Globals& g, const std::string& input, const std::string& format, const std::string& output) {
  const auto report = load_sweep_report(or_default(input, g, "sweep.json"));
  const auto fmt = report_format_from_string(format);
  const auto path = output.empty() ? out_path(g, fmt == ReportFormat::csv ? "report.csv" : "report.json") : output;
  emit_report(report, fmt, path);
  std::printf("wrote %s\n", path.c_str());
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Calibrated delegation of safety-probe decisions to an expert model"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_path, "Configuration file (key = value)")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Overrides the generator and split seeds");
  app.add_option("--out-dir", g.out_dir, "Directory for outputs and default inputs")->capture_default_str();

  std::optional<std::string> preset;
  auto* generate = app.add_subcommand("generate", "Generate a synthetic pool and a probe-training pool");
  generate->add_option("--preset", preset, "strong_expert or weak_expert");

  std::string train_path;
  auto* train_probe = app.add_subcommand("train-probe", "Fit the logistic safety probe");
  train_probe->add_option("--train", train_path, "Training JSONL (default <out-dir>/probe_train.jsonl)");

  ModelInputs dv_in;
  std::optional<std::string> target;
  auto* train_dv = app.add_subcommand("train-dv", "Fit the delegation-value probe on the dev split");
  add_model_inputs(train_dv, dv_in, false);
  train_dv->add_option("--target", target, "continuous or binary");

  ModelInputs cal_in;
  CalibrateArgs cal_args;
  auto* calibrate = app.add_subcommand("calibrate", "Certify a delegation threshold");
  add_model_inputs(calibrate, cal_in);
  calibrate->add_option("--alpha", cal_args.alpha, "Delegation budget");
  calibrate->add_option("--delta", cal_args.delta, "Failure probability");
  calibrate->add_option("--signal", cal_args.signal, "dv or uncertainty");
  calibrate->add_option("--variant", cal_args.variant, "pareto or budget_only");
  calibrate->add_option("--loss", cal_args.loss, "accuracy_error or auroc_error");

  ModelInputs sweep_in;
  std::optional<std::string> sweep_format;
  auto* sweep = app.add_subcommand("sweep", "Evaluate every strategy over a budget grid");
  add_model_inputs(sweep, sweep_in);
  sweep->add_option("--format", sweep_format, "csv or json");

  ModelInputs cov_in;
  CoverageArgs cov_args;
  auto* coverage = app.add_subcommand("coverage", "Repeated re-split budget-violation study");
  add_model_inputs(coverage, cov_in);
  coverage->add_option("--alpha", cov_args.alpha, "Delegation budget");
  coverage->add_option("--delta", cov_args.delta, "Failure probability");
  coverage->add_option("--trials", cov_args.trials, "Number of re-splits");
  coverage->add_option("--variant", cov_args.variant, "pareto, budget_only or both");

  ModelInputs grp_in;
  GroupArgs grp_args;
  auto* groups = app.add_subcommand("group-analysis", "Per-group delegation statistics");
  add_model_inputs(groups, grp_in);
  groups->add_option("--alpha", grp_args.alpha, "Delegation budget");
  groups->add_option("--delta", grp_args.delta, "Failure probability");
  groups->add_option("--batch-size", grp_args.batch_size, "Batch size for top-k strategies");
  groups->add_option("--format", grp_args.format, "csv or json");

  std::string report_in, report_format = "csv", report_out;
  auto* report = app.add_subcommand("report", "Re-emit a saved sweep report");
  report->add_option("--input", report_in, "Sweep JSON (default <out-dir>/sweep.json)");
  report->add_option("--format", report_format, "csv or json")->capture_default_str();
  report->add_option("--output", report_out, "Output path (default <out-dir>/report.<format>)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*generate) return cmd_generate(g, preset);
    if (*train_probe) return cmd_train_probe(g, train_path);
    if (*train_dv) return cmd_train_dv(g, dv_in, target);
    if (*calibrate) return cmd_calibrate(g, cal_in, cal_args);
    if (*sweep) return cmd_sweep(g, sweep_in, sweep_format);
    if (*coverage) return cmd_coverage(g, cov_in, cov_args);
    if (*groups) return cmd_group_analysis(g, grp_in, grp_args);
    if (*report) return cmd_report(g, report_in, report_format, report_out);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: malformed JSON: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
