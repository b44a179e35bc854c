#pragma once

#include <algorithm>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "ctd/common.hpp"
#include "ctd/delegation.hpp"

namespace ctd {

enum class LossKind { accuracy_error, auroc_error };

inline std::string to_string(LossKind k) { return k == LossKind::accuracy_error ? "accuracy_error" : "auroc_error"; }

inline LossKind loss_kind_from_string(const std::string& s) {
  if (s == "accuracy_error") return LossKind::accuracy_error;
  if (s == "auroc_error") return LossKind::auroc_error;
  throw ValidationError("unknown loss kind '" + s + "'");
}

struct RiskEstimates {
  double budget = 0.0;
  double perf = 0.0;
  LossKind loss_kind = LossKind::accuracy_error;
  std::size_t n = 0;
};

inline std::size_t delegated_count(std::span<const PolicyDecision> decisions) {
  return static_cast<std::size_t>(
      std::count_if(decisions.begin(), decisions.end(), [](const PolicyDecision& d) { return d.delegate; }));
}

/// Empirical delegation rate.
inline double budget_risk(std::span<const PolicyDecision> decisions) {
  if (decisions.empty()) return 0.0;
  return static_cast<double>(delegated_count(decisions)) / static_cast<double>(decisions.size());
}

inline double accuracy_error(std::span<const double> scores, std::span<const int> labels) {
  require(scores.size() == labels.size(), "scores and labels differ in length");
  if (scores.empty()) return 0.0;
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (hard_prediction(scores[i]) != labels[i]) ++wrong;
  }
  return static_cast<double>(wrong) / static_cast<double>(scores.size());
}

/// Mann-Whitney AUROC with midranks for ties.
inline double auroc(std::span<const double> scores, std::span<const int> labels) {
  require(scores.size() == labels.size(), "scores and labels differ in length");
  const std::size_t n = scores.size();
  std::size_t n_pos = 0;
  for (int y : labels) n_pos += (y == 1);
  const std::size_t n_neg = n - n_pos;
  require(n_pos > 0 && n_neg > 0, "AUROC undefined: both classes must be present");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Sum of 2x midranks of positives keeps everything in integers.
  unsigned long long rank_sum_x2 = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const unsigned long long twice_midrank = i + 1 + j; // (i+1) + j, ranks are 1-based
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] == 1) rank_sum_x2 += twice_midrank;
    }
    i = j;
  }
  const double u = static_cast<double>(rank_sum_x2) / 2.0 - static_cast<double>(n_pos) * (n_pos + 1) / 2.0;
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

inline double auroc_error(std::span<const double> scores, std::span<const int> labels) {
  return 1.0 - auroc(scores, labels);
}

inline double performance_risk(LossKind kind, std::span<const double> scores, std::span<const int> labels) {
  return kind == LossKind::accuracy_error ? accuracy_error(scores, labels) : auroc_error(scores, labels);
}

inline RiskEstimates estimate_risks(std::span<const PolicyDecision> decisions, std::span<const int> labels,
                                    LossKind kind) {
  require(decisions.size() == labels.size(), "decisions and labels differ in length");
  std::vector<double> scores(decisions.size());
  for (std::size_t i = 0; i < decisions.size(); ++i) scores[i] = decisions[i].cascade_score;
  return {budget_risk(decisions), performance_risk(kind, scores, labels), kind, decisions.size()};
}

/// Mean ground-truth value over the top floor(fraction * N) entries by
/// signal, ties to the earlier index.
inline double mean_v_at_k(std::span<const double> signal, std::span<const double> values, double fraction) {
  require(signal.size() == values.size(), "signal and values differ in length");
  require(fraction > 0.0 && fraction <= 1.0, "fraction must be in (0,1]");
  const std::size_t k = topk_count(fraction, signal.size());
  require(k > 0, "fraction selects no entries");
  double sum = 0.0;
  for (std::size_t i : top_k_indices(signal, k)) sum += values[i];
  return sum / static_cast<double>(k);
}

/// Same quantity when selection happens per consecutive batch of
/// `batch_size` entries, each choosing floor(fraction * len) by signal.
inline double mean_v_at_k_batched(std::span<const double> signal, std::span<const double> values, double fraction,
                                  std::size_t batch_size) {
  require(signal.size() == values.size(), "signal and values differ in length");
  require(fraction > 0.0 && fraction <= 1.0, "fraction must be in (0,1]");
  require(batch_size >= 1, "batch_size must be >= 1");
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t start = 0; start < signal.size(); start += batch_size) {
    const auto len = std::min(batch_size, signal.size() - start);
    for (std::size_t i : top_k_indices(signal.subspan(start, len), topk_count(fraction, len))) {
      sum += values[start + i];
      ++n;
    }
  }
  require(n > 0, "fraction selects no entries");
  return sum / static_cast<double>(n);
}

} // namespace ctd
