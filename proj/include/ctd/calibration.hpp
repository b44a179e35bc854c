#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "ctd/common.hpp"
#include "ctd/dataset.hpp"
#include "ctd/delegation.hpp"
#include "ctd/risk.hpp"

namespace ctd {

// ---------------------------------------------------------------------------
// Binomial p-value

/// P(Binomial(n, alpha) <= k). Small values reject H: R_B > alpha.
///
/// Terms are formed in log space (lgamma for the coefficient, log1p for the
/// complement) and accumulated with a max shift, so the result stays
/// accurate when individual terms underflow.
inline double binomial_pvalue(std::size_t k, std::size_t n, double alpha) {
  require(n >= 1, "binomial_pvalue: n must be >= 1");
  require(k <= n, "binomial_pvalue: k must be <= n");
  require(alpha > 0.0 && alpha < 1.0, "binomial_pvalue: alpha must be in (0,1)");
  if (k == n) return 1.0;

  const double log_a = std::log(alpha);
  const double log_1ma = std::log1p(-alpha);
  const double lgn = std::lgamma(static_cast<double>(n) + 1.0);
  std::vector<double> logs(k + 1);
  for (std::size_t i = 0; i <= k; ++i) {
    const double di = static_cast<double>(i);
    logs[i] = lgn - std::lgamma(di + 1.0) - std::lgamma(static_cast<double>(n - i) + 1.0) + di * log_a +
              static_cast<double>(n - i) * log_1ma;
  }
  const double top = *std::max_element(logs.begin(), logs.end());
  double sum = 0.0;
  for (double l : logs) sum += std::exp(l - top);
  return std::clamp(std::exp(top + std::log(sum)), 0.0, 1.0);
}

// ---------------------------------------------------------------------------
// Candidates, Pareto filter, fixed-sequence test

struct Candidate {
  double lambda = 0.0;
  double budget = 0.0; // R̂_B on D_est
  double perf = 0.0;   // R̂_P on D_est

  bool operator==(const Candidate&) const = default;
};

/// Keeps non-dominated candidates (both objectives minimised). Among exact
/// duplicates only the largest lambda survives. Input order is preserved.
inline std::vector<Candidate> pareto_filter(std::span<const Candidate> candidates) {
  require(!candidates.empty(), "pareto_filter: empty candidate list");
  std::vector<std::size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& ca = candidates[a];
    const auto& cb = candidates[b];
    if (ca.budget != cb.budget) return ca.budget < cb.budget;
    if (ca.perf != cb.perf) return ca.perf < cb.perf;
    return ca.lambda > cb.lambda;
  });
  std::vector<bool> keep(candidates.size(), false);
  double best_perf = kInf;
  for (std::size_t i : order) {
    if (candidates[i].perf < best_perf) {
      keep[i] = true;
      best_perf = candidates[i].perf;
    }
  }
  std::vector<Candidate> out;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (keep[i]) out.push_back(candidates[i]);
  }
  return out;
}

struct TestedHypothesis {
  double lambda = 0.0;
  double p_value = 1.0;
};

/// Walks hypotheses in the given order (most conservative first) and
/// returns the prefix rejected before the first p >= delta.
inline std::vector<TestedHypothesis> fixed_sequence_test(std::span<const TestedHypothesis> ordered, double delta) {
  require(delta > 0.0 && delta < 1.0, "fixed_sequence_test: delta must be in (0,1)");
  std::vector<TestedHypothesis> certified;
  for (const auto& h : ordered) {
    if (!(h.p_value < delta)) break;
    certified.push_back(h);
  }
  return certified;
}

// ---------------------------------------------------------------------------
// Grid

struct CandidateGrid {
  std::vector<double> thresholds;

  void validate() const {
    require(!thresholds.empty(), "candidate grid is empty");
    for (std::size_t i = 1; i < thresholds.size(); ++i) {
      require(thresholds[i - 1] < thresholds[i], "candidate grid must be strictly increasing");
    }
  }
};

/// Thresholds at the order statistics floor(i * n / size), i < size, of the
/// signal sample, deduplicated, plus a +inf sentinel.
inline CandidateGrid quantile_grid(std::span<const double> signal, std::size_t size = 100) {
  require(!signal.empty(), "quantile_grid: empty signal sample");
  require(size >= 1, "quantile_grid: size must be >= 1");
  std::vector<double> sorted(signal.begin(), signal.end());
  std::sort(sorted.begin(), sorted.end());
  CandidateGrid grid;
  for (std::size_t i = 0; i < size; ++i) {
    const double t = sorted[i * sorted.size() / size];
    if (grid.thresholds.empty() || grid.thresholds.back() < t) grid.thresholds.push_back(t);
  }
  grid.thresholds.push_back(kInf);
  return grid;
}

// ---------------------------------------------------------------------------
// End-to-end calibration

/// `pareto`: Pareto-filter on D_est, test, pick the certified threshold
/// with best R̂_P. `budget_only`: test the whole grid and pick the most
/// aggressive certified threshold.
enum class CalibrationVariant { pareto, budget_only };

inline std::string to_string(CalibrationVariant v) { return v == CalibrationVariant::pareto ? "pareto" : "budget_only"; }

inline CalibrationVariant variant_from_string(const std::string& s) {
  if (s == "pareto") return CalibrationVariant::pareto;
  if (s == "budget_only") return CalibrationVariant::budget_only;
  throw ValidationError("unknown calibration variant '" + s + "'");
}

struct CalibrationOptions {
  double alpha = 0.2;
  double delta = 0.1;
  LossKind loss_kind = LossKind::accuracy_error;
  CalibrationVariant variant = CalibrationVariant::pareto;
  std::size_t grid_size = 100;

  void validate() const {
    require(alpha > 0.0 && alpha < 1.0, "alpha must be in (0,1)");
    require(delta > 0.0 && delta < 1.0, "delta must be in (0,1)");
    require(grid_size >= 1, "grid_size must be >= 1");
  }
};

/// Signal, scores and labels of the estimation split.
struct EstimationSet {
  std::span<const double> signal;
  std::span<const double> probe;
  std::span<const double> expert;
  std::span<const int> labels;
};

struct PValueEntry {
  double lambda = 0.0;
  std::size_t delegated = 0;
  double p_value = 1.0;
};

struct CalibrationResult {
  CandidateGrid grid;
  std::vector<Candidate> candidates;   // every grid threshold with D_est risks
  std::vector<Candidate> pareto_set;   // Λ′ (the whole grid for budget_only)
  std::vector<PValueEntry> p_values;   // tested order, decreasing lambda
  std::vector<double> certified;       // Λ*
  double selected = kInf;              // λ*
  bool fallback = true;
  double alpha = 0.0;
  double delta = 0.0;
  LossKind loss_kind = LossKind::accuracy_error;
  CalibrationVariant variant = CalibrationVariant::pareto;
  std::size_t n_est = 0;
  std::size_t n_cal = 0;

  ThresholdPolicy policy(Signal signal) const { return {selected, signal}; }
};

inline Candidate estimate_candidate(double lambda, const EstimationSet& est, LossKind kind) {
  const std::size_t n = est.signal.size();
  std::vector<PolicyDecision> decisions(n);
  const ThresholdPolicy policy{lambda, Signal::dv};
  for (std::size_t i = 0; i < n; ++i) {
    decisions[i] = decide_threshold(policy, est.signal[i], est.probe[i], est.expert[i]);
  }
  const auto r = estimate_risks(decisions, est.labels, kind);
  return {lambda, r.budget, r.perf};
}

inline std::size_t count_above(std::span<const double> signal, double lambda) {
  return static_cast<std::size_t>(std::count_if(signal.begin(), signal.end(), [&](double s) { return s > lambda; }));
}

inline CalibrationResult calibrate_ctd(const EstimationSet& est, std::span<const double> cal_signal,
                                       const CandidateGrid& grid, const CalibrationOptions& opts) {
  opts.validate();
  grid.validate();
  const std::size_t n_est = est.signal.size();
  require(n_est > 0, "estimation split is empty");
  require(est.probe.size() == n_est && est.expert.size() == n_est && est.labels.size() == n_est,
          "estimation columns differ in length");
  require(!cal_signal.empty(), "calibration split is empty");

  CalibrationResult res;
  res.grid = grid;
  res.alpha = opts.alpha;
  res.delta = opts.delta;
  res.loss_kind = opts.loss_kind;
  res.variant = opts.variant;
  res.n_est = n_est;
  res.n_cal = cal_signal.size();

  for (double lambda : grid.thresholds) res.candidates.push_back(estimate_candidate(lambda, est, opts.loss_kind));
  res.pareto_set = opts.variant == CalibrationVariant::pareto ? pareto_filter(res.candidates) : res.candidates;

  std::vector<Candidate> ordered = res.pareto_set;
  std::sort(ordered.begin(), ordered.end(), [](const Candidate& a, const Candidate& b) { return a.lambda > b.lambda; });
  std::vector<TestedHypothesis> hypotheses;
  for (const auto& c : ordered) {
    const std::size_t k = count_above(cal_signal, c.lambda);
    const double p = binomial_pvalue(k, res.n_cal, opts.alpha);
    res.p_values.push_back({c.lambda, k, p});
    hypotheses.push_back({c.lambda, p});
  }
  const auto certified = fixed_sequence_test(hypotheses, opts.delta);
  for (const auto& h : certified) res.certified.push_back(h.lambda);

  if (certified.empty()) {
    res.selected = kInf;
    res.fallback = true;
    return res;
  }
  res.fallback = false;
  if (opts.variant == CalibrationVariant::budget_only) {
    res.selected = certified.back().lambda;
    return res;
  }
  // Certified candidates come in decreasing lambda, so strict '<' keeps the
  // larger lambda on ties.
  double best = kInf;
  for (std::size_t i = 0; i < certified.size(); ++i) {
    if (ordered[i].perf < best) {
      best = ordered[i].perf;
      res.selected = ordered[i].lambda;
    }
  }
  return res;
}

/// Calibration on scored splits; rejects shared example ids.
inline CalibrationResult calibrate_ctd(std::span<const ScoredExample> est, std::span<const double> est_signal,
                                       std::span<const ScoredExample> cal, std::span<const double> cal_signal,
                                       const CalibrationOptions& opts) {
  require(est.size() == est_signal.size() && cal.size() == cal_signal.size(), "signal length mismatch");
  std::unordered_set<std::string> ids;
  for (const auto& e : est) ids.insert(e.id);
  for (const auto& c : cal) {
    if (ids.contains(c.id)) throw ValidationError("example '" + c.id + "' appears in both D_est and D_cal");
  }
  std::vector<double> probe, expert;
  std::vector<int> labels;
  for (const auto& e : est) {
    probe.push_back(e.probe);
    expert.push_back(e.expert);
    labels.push_back(e.label);
  }
  const EstimationSet set{est_signal, probe, expert, labels};
  return calibrate_ctd(set, cal_signal, quantile_grid(est_signal, opts.grid_size), opts);
}

// ---------------------------------------------------------------------------
// Audit trail

inline nlohmann::ordered_json to_json(const CalibrationResult& r) {
  using nlohmann::ordered_json;
  ordered_json j;
  j["alpha"] = r.alpha;
  j["delta"] = r.delta;
  j["loss_kind"] = to_string(r.loss_kind);
  j["variant"] = to_string(r.variant);
  j["n_est"] = r.n_est;
  j["n_cal"] = r.n_cal;
  j["selected_lambda"] = lambda_to_json(r.selected);
  j["fallback"] = r.fallback;
  ordered_json grid = ordered_json::array();
  for (double t : r.grid.thresholds) grid.push_back(lambda_to_json(t));
  j["grid"] = grid;
  const auto rows = [](const std::vector<Candidate>& cs) {
    ordered_json arr = ordered_json::array();
    for (const auto& c : cs) {
      ordered_json row;
      row["lambda"] = lambda_to_json(c.lambda);
      row["budget_risk"] = c.budget;
      row["perf_risk"] = c.perf;
      arr.push_back(row);
    }
    return arr;
  };
  j["candidates"] = rows(r.candidates);
  j["pareto_set"] = rows(r.pareto_set);
  ordered_json pv = ordered_json::array();
  for (const auto& e : r.p_values) {
    ordered_json row;
    row["lambda"] = lambda_to_json(e.lambda);
    row["delegated"] = e.delegated;
    row["p_value"] = e.p_value;
    pv.push_back(row);
  }
  j["p_values"] = pv;
  ordered_json cert = ordered_json::array();
  for (double t : r.certified) cert.push_back(lambda_to_json(t));
  j["certified"] = cert;
  return j;
}

inline CalibrationResult calibration_from_json(const nlohmann::json& j) {
  CalibrationResult r;
  r.alpha = j.at("alpha").get<double>();
  r.delta = j.at("delta").get<double>();
  r.loss_kind = loss_kind_from_string(j.at("loss_kind").get<std::string>());
  r.variant = variant_from_string(j.at("variant").get<std::string>());
  r.n_est = j.at("n_est").get<std::size_t>();
  r.n_cal = j.at("n_cal").get<std::size_t>();
  r.selected = lambda_from_json(j.at("selected_lambda"));
  r.fallback = j.at("fallback").get<bool>();
  for (const auto& t : j.at("grid")) r.grid.thresholds.push_back(lambda_from_json(t));
  const auto rows = [](const nlohmann::json& arr) {
    std::vector<Candidate> out;
    for (const auto& row : arr) {
      out.push_back({lambda_from_json(row.at("lambda")), row.at("budget_risk").get<double>(),
                     row.at("perf_risk").get<double>()});
    }
    return out;
  };
  r.candidates = rows(j.at("candidates"));
  r.pareto_set = rows(j.at("pareto_set"));
  for (const auto& row : j.at("p_values")) {
    r.p_values.push_back({lambda_from_json(row.at("lambda")), row.at("delegated").get<std::size_t>(),
                          row.at("p_value").get<double>()});
  }
  for (const auto& t : j.at("certified")) r.certified.push_back(lambda_from_json(t));
  return r;
}

} // namespace ctd
