#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ctd/common.hpp"
#include "ctd/probes.hpp"

namespace ctd {

enum class Signal { dv, uncertainty, oracle };

inline std::string to_string(Signal s) {
  switch (s) {
    case Signal::dv: return "dv";
    case Signal::uncertainty: return "uncertainty";
    case Signal::oracle: return "oracle";
  }
  return "?";
}

inline Signal signal_from_string(const std::string& s) {
  if (s == "dv") return Signal::dv;
  if (s == "uncertainty") return Signal::uncertainty;
  if (s == "oracle") return Signal::oracle;
  throw ValidationError("unknown signal '" + s + "'");
}

/// Outcome of routing one input. cascade_score is the expert score when
/// delegated and the probe score otherwise.
struct PolicyDecision {
  bool delegate = false;
  double signal_value = 0.0;
  double cascade_score = 0.5;
};

/// Delegates iff signal > lambda. lambda = +inf never delegates.
struct ThresholdPolicy {
  double lambda = kInf;
  Signal signal = Signal::dv;
};

struct TopKPolicy {
  std::size_t batch_size = 128;
  double budget_fraction = 0.0;
  Signal signal = Signal::dv;

  void validate() const {
    require(batch_size >= 1, "batch_size must be >= 1");
    require(budget_fraction >= 0.0 && budget_fraction <= 1.0, "budget_fraction must be in [0,1]");
  }
};

struct BatchEntry {
  double signal_value = 0.0;
  double probe_score = 0.5;
  double expert_score = 0.5;
};

inline PolicyDecision route(bool delegate, double signal_value, double probe_score, double expert_score) {
  return {delegate, signal_value, delegate ? expert_score : probe_score};
}

inline PolicyDecision decide_threshold(const ThresholdPolicy& policy, double signal_value, double probe_score,
                                       double expert_score) {
  require(std::isfinite(policy.lambda) || policy.lambda == kInf, "lambda must be finite or +inf");
  return route(signal_value > policy.lambda, signal_value, probe_score, expert_score);
}

/// Number of delegations for a batch of the given length.
inline std::size_t topk_count(double budget_fraction, std::size_t length) {
  // The epsilon keeps e.g. 0.3 * 10 from flooring to 2.
  return std::min(length, static_cast<std::size_t>(std::floor(budget_fraction * static_cast<double>(length) + 1e-9)));
}

/// Indices of the k highest values; ties go to the earlier index.
inline std::vector<std::size_t> top_k_indices(std::span<const double> values, std::size_t k) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  k = std::min(k, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      return values[a] > values[b] || (values[a] == values[b] && a < b);
                    });
  order.resize(k);
  return order;
}

/// Delegates exactly floor(alpha * len) entries of one batch by signal.
inline std::vector<PolicyDecision> decide_topk(const TopKPolicy& policy, std::span<const BatchEntry> batch) {
  policy.validate();
  require(batch.size() <= policy.batch_size, "batch longer than batch_size");
  std::vector<double> signals(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) signals[i] = batch[i].signal_value;
  std::vector<bool> chosen(batch.size(), false);
  for (std::size_t i : top_k_indices(signals, topk_count(policy.budget_fraction, batch.size()))) chosen[i] = true;

  std::vector<PolicyDecision> out;
  out.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    out.push_back(route(chosen[i], batch[i].signal_value, batch[i].probe_score, batch[i].expert_score));
  }
  return out;
}

/// Applies decide_topk to consecutive batches of a stream, final batch
/// possibly partial.
inline std::vector<PolicyDecision> decide_topk_stream(const TopKPolicy& policy, std::span<const BatchEntry> stream) {
  policy.validate();
  std::vector<PolicyDecision> out;
  out.reserve(stream.size());
  for (std::size_t start = 0; start < stream.size(); start += policy.batch_size) {
    const auto len = std::min(policy.batch_size, stream.size() - start);
    auto part = decide_topk(policy, stream.subspan(start, len));
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

/// Ground-truth delegation value; only the oracle baseline may use it.
inline double oracle_signal(double probe_score, double expert_score, int label) {
  return delegation_value(probe_score, expert_score, label);
}

/// Fraction of points with strictly positive delegation value.
inline double effective_capacity(std::span<const double> values) {
  if (values.empty()) return 0.0;
  const auto pos = std::count_if(values.begin(), values.end(), [](double v) { return v > 0.0; });
  return static_cast<double>(pos) / static_cast<double>(values.size());
}

// ---------------------------------------------------------------------------
// Policy artifacts

/// Serialised threshold policy. For the uncertainty signal the sorted
/// calibration-set probe scores are frozen into the artifact.
struct ThresholdPolicyArtifact {
  ThresholdPolicy policy;
  std::string dv_model;
  std::vector<double> reference_scores;
};

inline nlohmann::ordered_json lambda_to_json(double lambda) {
  if (lambda == kInf) return "inf";
  return lambda;
}

inline double lambda_from_json(const nlohmann::json& j) {
  if (j.is_string()) {
    if (j.get<std::string>() == "inf") return kInf;
    throw ValidationError("bad lambda value '" + j.get<std::string>() + "'");
  }
  return j.get<double>();
}

inline nlohmann::ordered_json to_json(const ThresholdPolicyArtifact& a) {
  nlohmann::ordered_json j;
  j["type"] = "threshold";
  j["lambda"] = lambda_to_json(a.policy.lambda);
  j["signal"] = to_string(a.policy.signal);
  j["dv_model"] = a.dv_model;
  if (!a.reference_scores.empty()) j["reference_scores"] = a.reference_scores;
  return j;
}

inline ThresholdPolicyArtifact threshold_policy_from_json(const nlohmann::json& j) {
  ThresholdPolicyArtifact a;
  a.policy.lambda = lambda_from_json(j.at("lambda"));
  a.policy.signal = signal_from_string(j.at("signal").get<std::string>());
  a.dv_model = j.value("dv_model", std::string{});
  if (j.contains("reference_scores")) a.reference_scores = j.at("reference_scores").get<std::vector<double>>();
  return a;
}

inline nlohmann::ordered_json to_json(const TopKPolicy& p) {
  nlohmann::ordered_json j;
  j["type"] = "topk";
  j["B"] = p.batch_size;
  j["alpha"] = p.budget_fraction;
  j["signal"] = to_string(p.signal);
  return j;
}

inline TopKPolicy topk_policy_from_json(const nlohmann::json& j) {
  TopKPolicy p;
  p.batch_size = j.at("B").get<std::size_t>();
  p.budget_fraction = j.at("alpha").get<double>();
  p.signal = signal_from_string(j.at("signal").get<std::string>());
  p.validate();
  return p;
}

} // namespace ctd
