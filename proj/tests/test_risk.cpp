#include <gtest/gtest.h>

#include <random>

#include "ctd/risk.hpp"

using namespace ctd;

namespace {

double auroc_by_pairs(const std::vector<double>& s, const std::vector<int>& y) {
  double wins = 0, pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[i] == 1 && y[j] == 0) {
        pairs += 1;
        wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
      }
    }
  }
  return wins / pairs;
}

} // namespace

TEST(Auroc, WorkedExample) {
  EXPECT_DOUBLE_EQ(auroc(std::vector<double>{0.1, 0.4, 0.35, 0.8}, std::vector<int>{0, 0, 1, 1}), 0.75);
}

TEST(Auroc, MatchesPairCountingWithTies) {
  std::mt19937_64 rng(1);
  for (int rep = 0; rep < 100; ++rep) {
    const std::size_t n = 2 + rng() % 40;
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng() % 6) / 5.0; // coarse values force ties
      y[i] = static_cast<int>(rng() % 2);
    }
    y[0] = 0;
    y[1] = 1;
    EXPECT_DOUBLE_EQ(auroc(s, y), auroc_by_pairs(s, y));
  }
}

TEST(Auroc, SingleClassIsAnError) {
  EXPECT_THROW(auroc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}), ValidationError);
}

TEST(Accuracy, TieAtHalfPredictsZero) {
  EXPECT_DOUBLE_EQ(accuracy_error(std::vector<double>{0.6, 0.4, 0.5}, std::vector<int>{1, 1, 1}), 2.0 / 3.0);
}

TEST(Risks, BudgetAndPerformance) {
  const std::vector<PolicyDecision> ds{{true, 0, 0.9}, {false, 0, 0.2}, {false, 0, 0.7}, {true, 0, 0.1}};
  const std::vector<int> y{1, 0, 0, 0};
  const auto r = estimate_risks(ds, y, LossKind::accuracy_error);
  EXPECT_DOUBLE_EQ(r.budget, 0.5);
  EXPECT_DOUBLE_EQ(r.perf, 0.25);
  EXPECT_DOUBLE_EQ(estimate_risks(ds, y, LossKind::auroc_error).perf, 0.0);
}

TEST(MeanValueAtK, GlobalAndBatched) {
  const std::vector<double> signal{0.9, 0.8, 0.1, 0.2};
  const std::vector<double> values{1.0, 2.0, 3.0, 4.0};
  EXPECT_DOUBLE_EQ(mean_v_at_k(signal, values, 0.5), 1.5);
  EXPECT_DOUBLE_EQ(mean_v_at_k_batched(signal, values, 0.5, 2), 2.5); // one pick per batch: 0 and 3
  EXPECT_DOUBLE_EQ(mean_v_at_k_batched(signal, values, 0.5, 4), 1.5);
  EXPECT_THROW(mean_v_at_k(signal, values, 0.1), ValidationError);
}
