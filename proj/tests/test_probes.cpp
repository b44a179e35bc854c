#include <gtest/gtest.h>

#include <random>

#include "ctd/probes.hpp"

using namespace ctd;

namespace {

struct Problem {
  Eigen::MatrixXd z;
  Eigen::VectorXd y;
};

Problem random_problem(std::uint64_t seed, Eigen::Index n, Eigen::Index d) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Problem p{Eigen::MatrixXd(n, d), Eigen::VectorXd(n)};
  Eigen::VectorXd w(d);
  for (Eigen::Index k = 0; k < d; ++k) w(k) = normal(rng);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index k = 0; k < d; ++k) p.z(i, k) = normal(rng);
    p.y(i) = std::bernoulli_distribution(sigmoid(p.z.row(i).dot(w)))(rng) ? 1.0 : 0.0;
  }
  return p;
}

} // namespace

TEST(Logistic, GradientMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto p = random_problem(seed, 40, 5);
    Eigen::VectorXd w = Eigen::VectorXd::LinSpaced(5, -0.7, 0.9);
    const double b = 0.3, l2 = 0.05, h = 1e-6;
    const auto obj = logistic_objective(p.z, p.y, w, b, l2);
    for (Eigen::Index k = 0; k < w.size(); ++k) {
      Eigen::VectorXd wp = w, wm = w;
      wp(k) += h;
      wm(k) -= h;
      const double fd = (logistic_objective(p.z, p.y, wp, b, l2).loss - logistic_objective(p.z, p.y, wm, b, l2).loss) /
                        (2 * h);
      EXPECT_NEAR(obj.grad_w(k), fd, 1e-6);
    }
    const double fdb =
        (logistic_objective(p.z, p.y, w, b + h, l2).loss - logistic_objective(p.z, p.y, w, b - h, l2).loss) / (2 * h);
    EXPECT_NEAR(obj.grad_b, fdb, 1e-6);
  }
}

TEST(Logistic, ConvergesToStationaryPoint) {
  const auto p = random_problem(7, 300, 4);
  const auto fit = train_logistic(p.z, p.y, TrainConfig::logistic_defaults());
  EXPECT_TRUE(fit.converged);
  const Eigen::Map<const Eigen::VectorXd> w(fit.model.weights.data(), 4);
  EXPECT_LT(logistic_objective(p.z, p.y, w, fit.model.intercept, 1e-3).gradient_norm(), 1e-6);
}

TEST(Logistic, RejectsSingleClass) {
  Eigen::MatrixXd z = Eigen::MatrixXd::Ones(4, 2);
  Eigen::VectorXd y = Eigen::VectorXd::Ones(4);
  EXPECT_THROW(train_logistic(z, y, TrainConfig{}), ValidationError);
}

TEST(Ridge, SatisfiesNormalEquations) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> normal;
  for (int rep = 0; rep < 10; ++rep) {
    Eigen::MatrixXd z(60, 6);
    Eigen::VectorXd v(60);
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
      for (Eigen::Index k = 0; k < z.cols(); ++k) z(i, k) = normal(rng) + 2.0 * k;
      v(i) = normal(rng);
    }
    TrainConfig cfg = TrainConfig::ridge_defaults();
    cfg.l2_strength = 0.5;
    const auto m = fit_ridge(z, v, cfg);
    const Eigen::Map<const Eigen::VectorXd> w(m.weights.data(), 6);
    // Stationarity of ||v - Zw - b||^2 + gamma ||w||^2 in (w, b).
    const Eigen::VectorXd r = v - ((z * w).array() + m.intercept).matrix();
    const Eigen::VectorXd gw = -z.transpose() * r + cfg.l2_strength * w;
    EXPECT_LT(gw.norm() / (z.transpose() * v).norm(), 1e-10);
    EXPECT_NEAR(r.sum(), 0.0, 1e-9);
  }
}

TEST(Ridge, StandardizationChangesOnlyTheSolverScale) {
  Eigen::MatrixXd z(5, 2);
  z << 1, 100, 2, 300, 3, 200, 4, 500, 5, 400;
  Eigen::VectorXd v(5);
  v << 1, 2, 3, 4, 5;
  TrainConfig cfg = TrainConfig::ridge_defaults();
  cfg.l2_strength = 0.0;
  const auto plain = fit_ridge(z, v, cfg);
  cfg.standardize = true;
  const auto scaled = fit_ridge(z, v, cfg);
  for (std::size_t k = 0; k < 2; ++k) EXPECT_NEAR(plain.weights[k], scaled.weights[k], 1e-9);
}

TEST(Ridge, SingularWithoutPenaltyFails) {
  Eigen::MatrixXd z(4, 2);
  z << 1, 2, 2, 4, 3, 6, 4, 8;
  Eigen::VectorXd v(4);
  v << 1, 0, 1, 0;
  TrainConfig cfg = TrainConfig::ridge_defaults();
  cfg.l2_strength = 0.0;
  EXPECT_THROW(fit_ridge(z, v, cfg), ComputeError);
  cfg.l2_strength = 1e-3;
  EXPECT_NO_THROW(fit_ridge(z, v, cfg));
}

TEST(Model, JsonRoundTripAndDimensionCheck) {
  LinearModel m{ModelKind::ridge, {0.25, -1.5, 3.0}, 0.125, TrainConfig::ridge_defaults()};
  const auto back = model_from_json(nlohmann::json::parse(to_json(m).dump()));
  EXPECT_EQ(back.weights, m.weights);
  EXPECT_EQ(back.intercept, m.intercept);
  EXPECT_EQ(back.kind, ModelKind::ridge);
  const std::vector<double> z{1.0, 2.0};
  EXPECT_THROW(back.linear(z), ValidationError);
  EXPECT_THROW(model_from_json(nlohmann::json::parse(R"({"kind":"ridge","dim":2,"weights":[1],"intercept":0})")),
               ValidationError);
}

TEST(DelegationValue, WorkedCases) {
  EXPECT_NEAR(delegation_value(0.051, 1.00, 0), -0.949, 1e-12);
  EXPECT_NEAR(delegation_value(2.5e-4, 1.00, 1), 0.99975, 1e-12);
  EXPECT_EQ(delegation_value_binary(0.2, 0.9, 1), 1);
  EXPECT_EQ(delegation_value_binary(0.5, 0.9, 1), 1); // 0.5 predicts class 0
  EXPECT_EQ(delegation_value_binary(0.8, 0.9, 1), 0);
  EXPECT_EQ(delegation_value_binary(0.2, 0.4, 1), 0);
}

TEST(DelegationValue, StoredProbeScoreTakesPrecedence) {
  LinearModel probe{ModelKind::logistic, {10.0}, 0.0, {}};
  Example x{"a", "g", 1, {1.0}, 0.3, 0.9};
  EXPECT_DOUBLE_EQ(score_probe(probe, x), 0.3);
  x.probe_score.reset();
  EXPECT_DOUBLE_EQ(score_probe(probe, x), sigmoid(10.0));
  x.expert_score.reset();
  EXPECT_THROW(expert_score_of(x), ValidationError);
}

TEST(Uncertainty, RightContinuousEcdf) {
  const std::vector<double> refs{0.1, 0.2, 0.6, 0.9};
  EXPECT_DOUBLE_EQ(uncertainty_signal(0.25, refs), 0.0);
  EXPECT_DOUBLE_EQ(empirical_cdf(0.2, refs), 0.5);
  EXPECT_DOUBLE_EQ(uncertainty_signal(0.05, refs), -0.5);
  EXPECT_DOUBLE_EQ(uncertainty_signal(0.95, refs), -0.5);
  EXPECT_DOUBLE_EQ(uncertainty_signal(0.6, refs), -0.25);
}
