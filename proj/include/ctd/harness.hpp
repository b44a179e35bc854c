#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ctd/calibration.hpp"
#include "ctd/common.hpp"
#include "ctd/config.hpp"
#include "ctd/dataset.hpp"
#include "ctd/delegation.hpp"
#include "ctd/probes.hpp"
#include "ctd/risk.hpp"

namespace ctd {

// ---------------------------------------------------------------------------
// Strategies

enum class Strategy { ctd, unc_calibrated, dv_topk, unc_topk, oracle_topk };

inline constexpr Strategy kAllStrategies[] = {Strategy::ctd, Strategy::unc_calibrated, Strategy::dv_topk,
                                              Strategy::unc_topk, Strategy::oracle_topk};

inline std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::ctd: return "ctd";
    case Strategy::unc_calibrated: return "unc_calibrated";
    case Strategy::dv_topk: return "dv_topk";
    case Strategy::unc_topk: return "unc_topk";
    case Strategy::oracle_topk: return "oracle_topk";
  }
  return "?";
}

inline Strategy strategy_from_string(const std::string& s) {
  for (Strategy st : kAllStrategies) {
    if (to_string(st) == s) return st;
  }
  throw ValidationError("unknown strategy '" + s + "'");
}

inline bool is_calibrated(Strategy s) { return s == Strategy::ctd || s == Strategy::unc_calibrated; }

inline Signal signal_of(Strategy s) {
  switch (s) {
    case Strategy::ctd:
    case Strategy::dv_topk: return Signal::dv;
    case Strategy::unc_calibrated:
    case Strategy::unc_topk: return Signal::uncertainty;
    case Strategy::oracle_topk: return Signal::oracle;
  }
  return Signal::dv;
}

// ---------------------------------------------------------------------------
// Pipeline preparation

inline ScoredExample score_example(const Example& x, const LinearModel& probe, const LinearModel& dv) {
  ScoredExample s;
  s.id = x.id;
  s.group = x.group;
  s.label = x.label;
  s.probe = score_probe(probe, x);
  s.expert = expert_score_of(x);
  s.dv = score_dv(dv, x);
  s.value = delegation_value(s.probe, s.expert, s.label);
  return s;
}

inline ScoredDataset score_all(std::span<const Example> xs, const LinearModel& probe, const LinearModel& dv) {
  ScoredDataset out;
  out.reserve(xs.size());
  for (const auto& x : xs) out.push_back(score_example(x, probe, dv));
  return out;
}

/// Scored est/cal/eval splits plus the trained models.
struct Prepared {
  LinearModel probe;
  LinearModel dv;
  Partition<ScoredExample> splits;
};

struct PipelineConfig {
  SplitSpec split;
  TrainConfig probe_train = TrainConfig::logistic_defaults();
  TrainConfig dv_train = TrainConfig::ridge_defaults();
  DvTarget dv_target = DvTarget::continuous;
};

/// Splits the pool, fits the DV probe on dev and scores every split.
inline Prepared prepare_with_probe(std::span<const Example> pool, const LinearModel& probe, const PipelineConfig& cfg) {
  const auto parts = split(pool, cfg.split);
  require(!parts.dev.empty(), "dev split is empty; the DV probe needs training data");
  Prepared p;
  p.probe = probe;
  p.dv = train_dv_probe(parts.dev, probe, cfg.dv_target, cfg.dv_train);
  p.splits.dev = score_all(parts.dev, p.probe, p.dv);
  p.splits.est = score_all(parts.est, p.probe, p.dv);
  p.splits.cal = score_all(parts.cal, p.probe, p.dv);
  p.splits.eval = score_all(parts.eval, p.probe, p.dv);
  return p;
}

/// Splits the pool and scores every split with already-trained models.
inline Partition<ScoredExample> score_partition(std::span<const Example> pool, const LinearModel& probe,
                                                const LinearModel& dv, const SplitSpec& spec) {
  const auto parts = split(pool, spec);
  return {score_all(parts.dev, probe, dv), score_all(parts.est, probe, dv), score_all(parts.cal, probe, dv),
          score_all(parts.eval, probe, dv)};
}

/// Trains the safety probe on its own training pool, then prepares.
inline Prepared prepare(std::span<const Example> probe_train, std::span<const Example> pool,
                        const PipelineConfig& cfg) {
  const auto fit = train_logistic(probe_train, cfg.probe_train);
  return prepare_with_probe(pool, fit.model, cfg);
}

inline std::vector<double> sorted_probe_scores(std::span<const ScoredExample> xs) {
  std::vector<double> out;
  out.reserve(xs.size());
  for (const auto& x : xs) out.push_back(x.probe);
  std::sort(out.begin(), out.end());
  return out;
}

inline std::vector<double> signal_values(std::span<const ScoredExample> xs, Signal signal,
                                         std::span<const double> sorted_refs = {}) {
  std::vector<double> out;
  out.reserve(xs.size());
  for (const auto& x : xs) {
    switch (signal) {
      case Signal::dv: out.push_back(x.dv); break;
      case Signal::uncertainty: out.push_back(uncertainty_signal(x.probe, sorted_refs)); break;
      case Signal::oracle: out.push_back(oracle_signal(x.probe, x.expert, x.label)); break;
    }
  }
  return out;
}

inline std::vector<int> labels_of(std::span<const ScoredExample> xs) {
  std::vector<int> out;
  out.reserve(xs.size());
  for (const auto& x : xs) out.push_back(x.label);
  return out;
}

inline std::vector<double> values_of(std::span<const ScoredExample> xs) {
  std::vector<double> out;
  out.reserve(xs.size());
  for (const auto& x : xs) out.push_back(x.value);
  return out;
}

inline std::vector<double> cascade_scores(std::span<const PolicyDecision> ds) {
  std::vector<double> out;
  out.reserve(ds.size());
  for (const auto& d : ds) out.push_back(d.cascade_score);
  return out;
}

// ---------------------------------------------------------------------------
// Strategy evaluation

struct StrategyOutcome {
  std::vector<PolicyDecision> decisions; // on the evaluation split, in order
  std::optional<CalibrationResult> calibration;
};

/// Calibrates a threshold policy on est/cal with the given signal (the
/// uncertainty reference set is the D_cal probe scores).
inline CalibrationResult calibrate_signal(const Partition<ScoredExample>& s, Signal signal,
                                          const CalibrationOptions& opts) {
  const auto refs = sorted_probe_scores(s.cal);
  const auto est_signal = signal_values(s.est, signal, refs);
  const auto cal_signal = signal_values(s.cal, signal, refs);
  return calibrate_ctd(s.est, est_signal, s.cal, cal_signal, opts);
}

inline std::vector<PolicyDecision> apply_threshold(std::span<const ScoredExample> xs,
                                                   std::span<const double> signal, const ThresholdPolicy& policy) {
  std::vector<PolicyDecision> out;
  out.reserve(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    out.push_back(decide_threshold(policy, signal[i], xs[i].probe, xs[i].expert));
  }
  return out;
}

inline std::vector<PolicyDecision> apply_topk(std::span<const ScoredExample> xs, std::span<const double> signal,
                                              const TopKPolicy& policy) {
  std::vector<BatchEntry> stream;
  stream.reserve(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) stream.push_back({signal[i], xs[i].probe, xs[i].expert});
  return decide_topk_stream(policy, stream);
}

inline StrategyOutcome run_strategy(const Partition<ScoredExample>& s, Strategy strategy, double alpha,
                                    std::size_t batch_size, double delta, LossKind loss_kind,
                                    std::size_t grid_size = 100) {
  const Signal signal = signal_of(strategy);
  const auto refs = sorted_probe_scores(s.cal);
  const auto eval_signal = signal_values(s.eval, signal, refs);
  StrategyOutcome out;
  if (is_calibrated(strategy)) {
    CalibrationOptions opts{alpha, delta, loss_kind, CalibrationVariant::pareto, grid_size};
    out.calibration = calibrate_signal(s, signal, opts);
    out.decisions = apply_threshold(s.eval, eval_signal, out.calibration->policy(signal));
  } else {
    out.decisions = apply_topk(s.eval, eval_signal, TopKPolicy{batch_size, alpha, signal});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Sweep

struct SweepConfig {
  std::vector<double> budgets;
  double delta = 0.1;
  std::vector<std::size_t> batch_sizes{32, 64, 128};
  std::vector<Strategy> strategies{std::begin(kAllStrategies), std::end(kAllStrategies)};
  LossKind loss_kind = LossKind::accuracy_error;
  std::size_t grid_size = 100;
  std::uint64_t seed = 0;

  /// `levels` uniform budgets from lo to hi inclusive.
  static std::vector<double> uniform_budgets(std::size_t levels = 20, double lo = 0.05, double hi = 0.95) {
    std::vector<double> out;
    if (levels == 1) return {lo};
    for (std::size_t i = 0; i < levels; ++i) {
      out.push_back(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(levels - 1));
    }
    return out;
  }

  SweepConfig() : budgets(uniform_budgets()) {}

  void validate() const {
    require(!budgets.empty(), "sweep needs at least one budget");
    for (double b : budgets) require(b > 0.0 && b < 1.0, "budgets must lie in (0,1)");
    require(delta > 0.0 && delta < 1.0, "delta must be in (0,1)");
    require(!batch_sizes.empty(), "sweep needs at least one batch size");
    for (auto b : batch_sizes) require(b >= 1, "batch sizes must be >= 1");
    require(!strategies.empty(), "sweep needs at least one strategy");
  }
};

struct SweepCell {
  std::string strategy;
  double budget = 0.0;
  std::size_t batch_size = 0; // 0 for calibrated strategies
  double delegation_rate = 0.0;
  double accuracy = 0.0;
  double auroc = 0.0;
  std::optional<double> lambda;
  bool fallback = false;
  std::string error;

  bool operator==(const SweepCell&) const = default;
};

struct Baseline {
  std::string name;
  double delegation_rate = 0.0;
  double accuracy = 0.0;
  double auroc = 0.0;

  bool operator==(const Baseline&) const = default;
};

struct SweepReport {
  std::vector<SweepCell> cells;
  std::vector<Baseline> baselines;
  double effective_capacity = 0.0;
  std::size_t n_eval = 0;

  bool operator==(const SweepReport&) const = default;

  const SweepCell* find(const std::string& strategy, double budget, std::size_t batch_size = 0) const {
    for (const auto& c : cells) {
      if (c.strategy == strategy && std::abs(c.budget - budget) < 1e-12 && c.batch_size == batch_size) return &c;
    }
    return nullptr;
  }

  const Baseline* baseline(const std::string& name) const {
    for (const auto& b : baselines) {
      if (b.name == name) return &b;
    }
    return nullptr;
  }
};

inline SweepCell evaluate_cell(const Partition<ScoredExample>& s, Strategy strategy, double budget,
                               std::size_t batch_size, const SweepConfig& cfg) {
  SweepCell cell;
  cell.strategy = to_string(strategy);
  cell.budget = budget;
  cell.batch_size = is_calibrated(strategy) ? 0 : batch_size;
  try {
    const auto outcome = run_strategy(s, strategy, budget, batch_size, cfg.delta, cfg.loss_kind, cfg.grid_size);
    const auto labels = labels_of(s.eval);
    const auto scores = cascade_scores(outcome.decisions);
    cell.delegation_rate = budget_risk(outcome.decisions);
    cell.accuracy = 1.0 - accuracy_error(scores, labels);
    cell.auroc = auroc(scores, labels);
    if (outcome.calibration) {
      cell.lambda = outcome.calibration->selected;
      cell.fallback = outcome.calibration->fallback;
    }
  } catch (const std::exception& e) {
    cell.error = e.what();
    cell.delegation_rate = cell.accuracy = cell.auroc = std::numeric_limits<double>::quiet_NaN();
  }
  return cell;
}

inline std::vector<Baseline> baselines(std::span<const ScoredExample> eval) {
  const auto labels = labels_of(eval);
  std::vector<double> probe, expert;
  for (const auto& x : eval) {
    probe.push_back(x.probe);
    expert.push_back(x.expert);
  }
  return {{"probe_only", 0.0, 1.0 - accuracy_error(probe, labels), auroc(probe, labels)},
          {"expert_only", 1.0, 1.0 - accuracy_error(expert, labels), auroc(expert, labels)}};
}

/// Every (strategy, budget, batch size) cell on the evaluation split.
/// Calibrated strategies ignore batching and get one cell per budget.
inline SweepReport run_sweep(const Partition<ScoredExample>& s, const SweepConfig& cfg) {
  cfg.validate();
  require(!s.eval.empty(), "evaluation split is empty");
  SweepReport report;
  report.n_eval = s.eval.size();
  report.baselines = baselines(s.eval);
  const auto values = values_of(s.eval);
  report.effective_capacity = effective_capacity(values);
  for (Strategy st : cfg.strategies) {
    for (double budget : cfg.budgets) {
      if (is_calibrated(st)) {
        report.cells.push_back(evaluate_cell(s, st, budget, 0, cfg));
        continue;
      }
      for (std::size_t b : cfg.batch_sizes) report.cells.push_back(evaluate_cell(s, st, budget, b, cfg));
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// Ranking quality (mean v at k)

struct RankingCurve {
  std::vector<double> fractions;
  std::vector<double> oracle;
  std::vector<double> dv;
  std::vector<double> uncertainty;
  std::vector<double> random; // expected value under random ordering: the global mean
};

/// batch_size 0 ranks the whole evaluation split at once; otherwise
/// selection is per batch in file order.
inline RankingCurve ranking_curve(const Partition<ScoredExample>& s, std::span<const double> fractions,
                                  std::size_t batch_size = 0) {
  RankingCurve c;
  const auto refs = sorted_probe_scores(s.cal);
  const auto values = values_of(s.eval);
  const auto dv = signal_values(s.eval, Signal::dv);
  const auto unc = signal_values(s.eval, Signal::uncertainty, refs);
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  const auto at = [&](std::span<const double> signal, double f) {
    return batch_size == 0 ? mean_v_at_k(signal, values, f) : mean_v_at_k_batched(signal, values, f, batch_size);
  };
  for (double f : fractions) {
    c.fractions.push_back(f);
    c.oracle.push_back(at(values, f));
    c.dv.push_back(at(dv, f));
    c.uncertainty.push_back(at(unc, f));
    c.random.push_back(mean);
  }
  return c;
}

/// Mean ground-truth value over the delegated subset; nullopt when empty.
inline std::optional<double> delegated_mean_value(std::span<const PolicyDecision> ds, std::span<const double> values) {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (ds[i].delegate) {
      sum += values[i];
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// Coverage validation

struct CoverageConfig {
  double alpha = 0.3;
  double delta = 0.1;
  std::size_t trials = 500;
  CalibrationVariant variant = CalibrationVariant::pareto;
  LossKind loss_kind = LossKind::accuracy_error;
  double est_fraction = 0.3;
  std::size_t grid_size = 100;
  std::uint64_t seed = 0;

  void validate() const {
    require(trials >= 1, "trials must be >= 1");
    require(alpha > 0.0 && alpha < 1.0, "alpha must be in (0,1)");
    require(delta > 0.0 && delta < 1.0, "delta must be in (0,1)");
  }
};

struct CoverageReport {
  double alpha = 0.0;
  double delta = 0.0;
  std::string variant;
  std::size_t trials = 0;
  std::size_t violations = 0;
  double violation_rate = 0.0;
  std::vector<double> realized_rates;
  std::vector<std::size_t> histogram; // 20 equal bins over [0,1]
};

/// Re-splits the scored test pool (calibration + evaluation) each trial,
/// calibrates with the fixed DV probe, and records the realised rate on
/// the held-out half.
inline CoverageReport run_coverage(std::span<const ScoredExample> test_pool, const CoverageConfig& cfg) {
  cfg.validate();
  CoverageReport rep;
  rep.alpha = cfg.alpha;
  rep.delta = cfg.delta;
  rep.variant = to_string(cfg.variant);
  rep.trials = cfg.trials;
  rep.histogram.assign(20, 0);
  const CalibrationOptions opts{cfg.alpha, cfg.delta, cfg.loss_kind, cfg.variant, cfg.grid_size};
  for (std::size_t t = 0; t < cfg.trials; ++t) {
    SplitSpec spec{0.0, 0.5, 0.5, cfg.est_fraction, derive_seed(cfg.seed, t)};
    const auto parts = split(test_pool, spec);
    const auto res = calibrate_signal(parts, Signal::dv, opts);
    const auto eval_signal = signal_values(parts.eval, Signal::dv);
    const double rate =
        static_cast<double>(count_above(eval_signal, res.selected)) / static_cast<double>(parts.eval.size());
    rep.realized_rates.push_back(rate);
    if (rate > cfg.alpha) ++rep.violations;
    rep.histogram[std::min<std::size_t>(19, static_cast<std::size_t>(rate * 20.0))]++;
  }
  rep.violation_rate = static_cast<double>(rep.violations) / static_cast<double>(cfg.trials);
  return rep;
}

// ---------------------------------------------------------------------------
// Group analysis

struct GroupRow {
  std::string strategy;
  std::string group;
  std::size_t n = 0;
  double mean_value = 0.0;                    // over all group examples
  std::optional<double> mean_value_delegated; // absent when nothing delegated
  double delegation_rate = 0.0;
  double share_of_delegated = 0.0; // group's share of the strategy's delegated set
  double mean_dv_score = 0.0;

  bool operator==(const GroupRow&) const = default;
};

struct GroupReport {
  double alpha = 0.0;
  std::vector<GroupRow> rows;

  const GroupRow* find(const std::string& strategy, const std::string& group) const {
    for (const auto& r : rows) {
      if (r.strategy == strategy && r.group == group) return &r;
    }
    return nullptr;
  }
};

/// Per-group statistics for each strategy's decisions on the evaluation
/// split. Groups appear in first-seen order.
inline GroupReport run_group_analysis(std::span<const ScoredExample> eval,
                                      const std::vector<std::pair<std::string, std::vector<PolicyDecision>>>& decisions,
                                      double alpha) {
  GroupReport rep;
  rep.alpha = alpha;
  std::vector<std::string> groups;
  for (const auto& x : eval) {
    if (std::find(groups.begin(), groups.end(), x.group) == groups.end()) groups.push_back(x.group);
  }
  for (const auto& [name, ds] : decisions) {
    require(ds.size() == eval.size(), "decisions do not match the evaluation split");
    const std::size_t total_delegated = delegated_count(ds);
    for (const auto& g : groups) {
      GroupRow row;
      row.strategy = name;
      row.group = g;
      double sum_v = 0.0, sum_dv = 0.0, sum_del_v = 0.0;
      std::size_t del = 0;
      for (std::size_t i = 0; i < eval.size(); ++i) {
        if (eval[i].group != g) continue;
        ++row.n;
        sum_v += eval[i].value;
        sum_dv += eval[i].dv;
        if (ds[i].delegate) {
          ++del;
          sum_del_v += eval[i].value;
        }
      }
      row.mean_value = sum_v / static_cast<double>(row.n);
      row.mean_dv_score = sum_dv / static_cast<double>(row.n);
      row.delegation_rate = static_cast<double>(del) / static_cast<double>(row.n);
      if (del > 0) row.mean_value_delegated = sum_del_v / static_cast<double>(del);
      row.share_of_delegated =
          total_delegated > 0 ? static_cast<double>(del) / static_cast<double>(total_delegated) : 0.0;
      rep.rows.push_back(row);
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Report emission

inline std::string format_number(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, ptr);
}

inline double parse_number(const std::string& s) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return kInf;
  if (s == "-inf") return -kInf;
  double x = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw ValidationError("bad number '" + s + "'");
  return x;
}

inline constexpr const char* kSweepCsvHeader = "strategy,budget,batch_size,delegation_rate,accuracy,auroc";

/// One row per sweep cell, then the budget-independent baselines (empty
/// budget column, batch size 0).
inline std::string sweep_to_csv(const SweepReport& r) {
  std::ostringstream out;
  out << kSweepCsvHeader << '\n';
  for (const auto& c : r.cells) {
    out << c.strategy << ',' << format_number(c.budget) << ',' << c.batch_size << ',' << format_number(c.delegation_rate)
        << ',' << format_number(c.accuracy) << ',' << format_number(c.auroc) << '\n';
  }
  for (const auto& b : r.baselines) {
    out << b.name << ",," << 0 << ',' << format_number(b.delegation_rate) << ',' << format_number(b.accuracy) << ','
        << format_number(b.auroc) << '\n';
  }
  return out.str();
}

// JSON carries non-finite numbers as strings so the round trip is exact.
inline nlohmann::ordered_json number_json(double x) {
  if (!std::isfinite(x)) return format_number(x);
  return x;
}

inline double number_from_json(const nlohmann::json& j) {
  return j.is_string() ? parse_number(j.get<std::string>()) : j.get<double>();
}

inline nlohmann::ordered_json to_json(const SweepReport& r) {
  using nlohmann::ordered_json;
  ordered_json j;
  j["n_eval"] = r.n_eval;
  j["effective_capacity"] = r.effective_capacity;
  ordered_json bl = ordered_json::array();
  for (const auto& b : r.baselines) {
    ordered_json row;
    row["name"] = b.name;
    row["delegation_rate"] = b.delegation_rate;
    row["accuracy"] = b.accuracy;
    row["auroc"] = b.auroc;
    bl.push_back(row);
  }
  j["baselines"] = bl;
  ordered_json cells = ordered_json::array();
  for (const auto& c : r.cells) {
    ordered_json row;
    row["strategy"] = c.strategy;
    row["budget"] = c.budget;
    row["batch_size"] = c.batch_size;
    row["delegation_rate"] = number_json(c.delegation_rate);
    row["accuracy"] = number_json(c.accuracy);
    row["auroc"] = number_json(c.auroc);
    row["lambda"] = c.lambda ? number_json(*c.lambda) : ordered_json(nullptr);
    row["fallback"] = c.fallback;
    row["error"] = c.error;
    cells.push_back(row);
  }
  j["cells"] = cells;
  return j;
}

inline SweepReport sweep_from_json(const nlohmann::json& j) {
  SweepReport r;
  try {
    r.n_eval = j.at("n_eval").get<std::size_t>();
    r.effective_capacity = j.at("effective_capacity").get<double>();
    for (const auto& b : j.at("baselines")) {
      r.baselines.push_back({b.at("name").get<std::string>(), b.at("delegation_rate").get<double>(),
                             b.at("accuracy").get<double>(), b.at("auroc").get<double>()});
    }
    for (const auto& row : j.at("cells")) {
      SweepCell c;
      c.strategy = row.at("strategy").get<std::string>();
      c.budget = row.at("budget").get<double>();
      c.batch_size = row.at("batch_size").get<std::size_t>();
      c.delegation_rate = number_from_json(row.at("delegation_rate"));
      c.accuracy = number_from_json(row.at("accuracy"));
      c.auroc = number_from_json(row.at("auroc"));
      if (!row.at("lambda").is_null()) c.lambda = number_from_json(row.at("lambda"));
      c.fallback = row.at("fallback").get<bool>();
      c.error = row.at("error").get<std::string>();
      r.cells.push_back(c);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed sweep report: ") + e.what());
  }
  return r;
}

inline constexpr const char* kGroupCsvHeader =
    "strategy,group,n,mean_value,mean_value_delegated,delegation_rate,share_of_delegated,mean_dv_score";

inline std::string groups_to_csv(const GroupReport& r) {
  std::ostringstream out;
  out << kGroupCsvHeader << '\n';
  for (const auto& g : r.rows) {
    out << g.strategy << ',' << g.group << ',' << g.n << ',' << format_number(g.mean_value) << ','
        << (g.mean_value_delegated ? format_number(*g.mean_value_delegated) : std::string{}) << ','
        << format_number(g.delegation_rate) << ',' << format_number(g.share_of_delegated) << ','
        << format_number(g.mean_dv_score) << '\n';
  }
  return out.str();
}

inline nlohmann::ordered_json to_json(const GroupReport& r) {
  using nlohmann::ordered_json;
  ordered_json j;
  j["alpha"] = r.alpha;
  ordered_json rows = ordered_json::array();
  for (const auto& g : r.rows) {
    ordered_json row;
    row["strategy"] = g.strategy;
    row["group"] = g.group;
    row["n"] = g.n;
    row["mean_value"] = g.mean_value;
    row["mean_value_delegated"] = g.mean_value_delegated ? ordered_json(*g.mean_value_delegated) : ordered_json(nullptr);
    row["delegation_rate"] = g.delegation_rate;
    row["share_of_delegated"] = g.share_of_delegated;
    row["mean_dv_score"] = g.mean_dv_score;
    rows.push_back(row);
  }
  j["rows"] = rows;
  return j;
}

inline nlohmann::ordered_json to_json(const CoverageReport& r) {
  nlohmann::ordered_json j;
  j["alpha"] = r.alpha;
  j["delta"] = r.delta;
  j["variant"] = r.variant;
  j["trials"] = r.trials;
  j["violations"] = r.violations;
  j["violation_rate"] = r.violation_rate;
  j["histogram"] = r.histogram;
  j["realized_rates"] = r.realized_rates;
  return j;
}

enum class ReportFormat { csv, json };

inline ReportFormat report_format_from_string(const std::string& s) {
  if (s == "csv") return ReportFormat::csv;
  if (s == "json") return ReportFormat::json;
  throw ValidationError("unknown report format '" + s + "'");
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ComputeError("cannot write " + path);
  out << text;
  if (!out) throw ComputeError("write failed for " + path);
}

inline void emit_report(const SweepReport& r, ReportFormat format, const std::string& path) {
  write_text(path, format == ReportFormat::csv ? sweep_to_csv(r) : to_json(r).dump(2) + "\n");
}

inline void emit_report(const GroupReport& r, ReportFormat format, const std::string& path) {
  write_text(path, format == ReportFormat::csv ? groups_to_csv(r) : to_json(r).dump(2) + "\n");
}

inline SweepReport load_sweep_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("malformed sweep report " + path + ": " + e.what());
  }
  return sweep_from_json(j);
}

// ---------------------------------------------------------------------------
// Config readers

inline SplitSpec split_spec_from_config(const Config& c, SplitSpec s = {}) {
  s.dev = c.get_double("split.dev", s.dev);
  s.calibration = c.get_double("split.calibration", s.calibration);
  s.evaluation = c.get_double("split.evaluation", s.evaluation);
  s.est = c.get_double("split.est", s.est);
  s.seed = static_cast<std::uint64_t>(c.get_int("split.seed", static_cast<std::int64_t>(s.seed)));
  s.validate();
  return s;
}

inline TrainConfig train_config_from_config(const Config& c, const std::string& prefix, TrainConfig t) {
  t.l2_strength = c.get_double(prefix + ".l2_strength", t.l2_strength);
  t.max_iters = static_cast<std::size_t>(c.get_int(prefix + ".max_iters", static_cast<std::int64_t>(t.max_iters)));
  t.tolerance = c.get_double(prefix + ".tolerance", t.tolerance);
  t.seed = static_cast<std::uint64_t>(c.get_int(prefix + ".seed", static_cast<std::int64_t>(t.seed)));
  t.standardize = c.get_bool(prefix + ".standardize", t.standardize);
  t.validate();
  return t;
}

inline PipelineConfig pipeline_from_config(const Config& c) {
  PipelineConfig p;
  p.split = split_spec_from_config(c);
  p.probe_train = train_config_from_config(c, "probe", TrainConfig::logistic_defaults());
  p.dv_train = train_config_from_config(c, "dv", TrainConfig::ridge_defaults());
  p.dv_target = dv_target_from_string(c.get_string("dv.target", "continuous"));
  return p;
}

inline SweepConfig sweep_config_from_config(const Config& c) {
  SweepConfig s;
  if (c.contains("budgets")) {
    s.budgets = c.get_doubles("budgets", {});
  } else {
    s.budgets = SweepConfig::uniform_budgets(static_cast<std::size_t>(c.get_int("budget_levels", 20)),
                                             c.get_double("budget_min", 0.05), c.get_double("budget_max", 0.95));
  }
  s.delta = c.get_double("delta", s.delta);
  if (c.contains("batch_sizes")) {
    s.batch_sizes.clear();
    for (double b : c.get_doubles("batch_sizes", {})) {
      require(b >= 1.0 && b == std::floor(b), "batch_sizes must be positive integers");
      s.batch_sizes.push_back(static_cast<std::size_t>(b));
    }
  }
  if (c.contains("strategies")) {
    s.strategies.clear();
    for (const auto& name : c.get_strings("strategies", {})) s.strategies.push_back(strategy_from_string(name));
  }
  s.loss_kind = loss_kind_from_string(c.get_string("loss_kind", to_string(s.loss_kind)));
  s.grid_size = static_cast<std::size_t>(c.get_int("grid_size", static_cast<std::int64_t>(s.grid_size)));
  s.seed = static_cast<std::uint64_t>(c.get_int("seed", 0));
  s.validate();
  return s;
}

/// `coverage.*` keys; the D_est share follows `split.est`.
inline CoverageConfig coverage_config_from_config(const Config& c) {
  CoverageConfig cc;
  cc.alpha = c.get_double("coverage.alpha", cc.alpha);
  cc.delta = c.get_double("coverage.delta", cc.delta);
  cc.trials = static_cast<std::size_t>(c.get_int("coverage.trials", static_cast<std::int64_t>(cc.trials)));
  cc.est_fraction = c.get_double("split.est", cc.est_fraction);
  cc.loss_kind = loss_kind_from_string(c.get_string("loss_kind", to_string(cc.loss_kind)));
  cc.grid_size = static_cast<std::size_t>(c.get_int("grid_size", static_cast<std::int64_t>(cc.grid_size)));
  cc.seed = static_cast<std::uint64_t>(c.get_int("coverage.seed", c.get_int("seed", 0)));
  cc.validate();
  return cc;
}

} // namespace ctd
