#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "ctd/common.hpp"
#include "ctd/dataset.hpp"

namespace ctd {

enum class ModelKind { logistic, ridge };

inline std::string to_string(ModelKind k) { return k == ModelKind::logistic ? "logistic" : "ridge"; }

inline ModelKind model_kind_from_string(const std::string& s) {
  if (s == "logistic") return ModelKind::logistic;
  if (s == "ridge") return ModelKind::ridge;
  throw ValidationError("unknown model kind '" + s + "'");
}

/// l2_strength is the logistic penalty or the ridge gamma. tolerance and
/// max_iters only apply to logistic training; standardize only to ridge.
struct TrainConfig {
  double l2_strength = 1e-3;
  std::size_t max_iters = 10000;
  double tolerance = 1e-8;
  std::uint64_t seed = 0;
  bool standardize = false;

  static TrainConfig logistic_defaults() { return {}; }
  static TrainConfig ridge_defaults() {
    TrainConfig c;
    c.l2_strength = 1.0;
    return c;
  }

  void validate() const {
    require(l2_strength >= 0.0 && std::isfinite(l2_strength), "l2_strength must be finite and >= 0");
    require(tolerance > 0.0, "tolerance must be > 0");
    require(max_iters >= 1, "max_iters must be >= 1");
  }
};

struct LinearModel {
  ModelKind kind = ModelKind::logistic;
  std::vector<double> weights;
  double intercept = 0.0;
  TrainConfig train_config;

  std::size_t dim() const { return weights.size(); }

  double linear(std::span<const double> z) const {
    if (z.size() != weights.size()) {
      throw ValidationError("feature dimension " + std::to_string(z.size()) +
                            " does not match model dimension " + std::to_string(weights.size()));
    }
    double s = intercept;
    for (std::size_t i = 0; i < z.size(); ++i) s += weights[i] * z[i];
    return s;
  }
};

// ---------------------------------------------------------------------------
// Persistence

inline nlohmann::ordered_json to_json(const TrainConfig& c) {
  nlohmann::ordered_json j;
  j["l2_strength"] = c.l2_strength;
  j["max_iters"] = c.max_iters;
  j["tolerance"] = c.tolerance;
  j["seed"] = c.seed;
  j["standardize"] = c.standardize;
  return j;
}

inline nlohmann::ordered_json to_json(const LinearModel& m) {
  nlohmann::ordered_json j;
  j["kind"] = to_string(m.kind);
  j["dim"] = m.dim();
  j["weights"] = m.weights;
  j["intercept"] = m.intercept;
  j["train_config"] = to_json(m.train_config);
  return j;
}

inline LinearModel model_from_json(const nlohmann::json& j) {
  try {
    LinearModel m;
    m.kind = model_kind_from_string(j.at("kind").get<std::string>());
    m.weights = j.at("weights").get<std::vector<double>>();
    m.intercept = j.at("intercept").get<double>();
    require(j.at("dim").get<std::size_t>() == m.weights.size(), "model 'dim' does not match weights");
    if (j.contains("train_config")) {
      const auto& c = j.at("train_config");
      m.train_config.l2_strength = c.value("l2_strength", m.train_config.l2_strength);
      m.train_config.max_iters = c.value("max_iters", m.train_config.max_iters);
      m.train_config.tolerance = c.value("tolerance", m.train_config.tolerance);
      m.train_config.seed = c.value("seed", m.train_config.seed);
      m.train_config.standardize = c.value("standardize", m.train_config.standardize);
    }
    require(std::isfinite(m.intercept), "model intercept is not finite");
    for (double w : m.weights) require(std::isfinite(w), "model weight is not finite");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed model file: ") + e.what());
  }
}

inline void save_model(const std::string& path, const LinearModel& m) {
  std::ofstream out(path);
  if (!out) throw ComputeError("cannot write " + path);
  out << to_json(m).dump(2) << '\n';
}

inline LinearModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("malformed model file " + path + ": " + e.what());
  }
  return model_from_json(j);
}

// ---------------------------------------------------------------------------
// Training

inline Eigen::MatrixXd feature_matrix(std::span<const Example> xs) {
  require(!xs.empty(), "no examples");
  const auto d = static_cast<Eigen::Index>(xs.front().features.size());
  Eigen::MatrixXd z(static_cast<Eigen::Index>(xs.size()), d);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const auto& f = xs[i].features;
    if (static_cast<Eigen::Index>(f.size()) != d) throw ValidationError("inconsistent feature dimension");
    for (Eigen::Index k = 0; k < d; ++k) z(static_cast<Eigen::Index>(i), k) = f[static_cast<std::size_t>(k)];
  }
  return z;
}

struct LogisticObjective {
  double loss = 0.0;
  Eigen::VectorXd grad_w;
  double grad_b = 0.0;

  double gradient_norm() const { return std::sqrt(grad_w.squaredNorm() + grad_b * grad_b); }
};

/// Mean log-loss plus (l2/2)·‖w‖², intercept unpenalised.
inline LogisticObjective logistic_objective(const Eigen::MatrixXd& z, const Eigen::VectorXd& y,
                                            const Eigen::VectorXd& w, double b, double l2) {
  const double n = static_cast<double>(z.rows());
  const Eigen::VectorXd t = (z * w).array() + b;
  Eigen::VectorXd resid(t.size());
  double loss = 0.0;
  for (Eigen::Index i = 0; i < t.size(); ++i) {
    const double ti = t(i);
    // log(1 + e^t) computed without overflow.
    const double softplus = ti > 0 ? ti + std::log1p(std::exp(-ti)) : std::log1p(std::exp(ti));
    loss += softplus - y(i) * ti;
    resid(i) = sigmoid(ti) - y(i);
  }
  LogisticObjective obj;
  obj.loss = loss / n + 0.5 * l2 * w.squaredNorm();
  obj.grad_w = z.transpose() * resid / n + l2 * w;
  obj.grad_b = resid.sum() / n;
  return obj;
}

struct LogisticFit {
  LinearModel model;
  std::size_t iterations = 0;
  double gradient_norm = 0.0;
  bool converged = false;
};

/// Full-batch gradient descent. The trial step is the Barzilai-Borwein
/// estimate, shrunk by backtracking until the Armijo condition holds.
inline LogisticFit train_logistic(const Eigen::MatrixXd& z, const Eigen::VectorXd& y, const TrainConfig& cfg) {
  cfg.validate();
  require(z.rows() >= 2, "logistic training needs at least 2 examples");
  const double positives = y.sum();
  require(positives > 0.0 && positives < static_cast<double>(y.size()),
          "logistic training needs both classes present");

  const Eigen::Index d = z.cols();
  Eigen::VectorXd w = Eigen::VectorXd::Zero(d);
  double b = 0.0;
  auto obj = logistic_objective(z, y, w, b, cfg.l2_strength);
  double step = 1.0;
  LogisticFit fit;

  std::size_t it = 0;
  for (; it < cfg.max_iters && obj.gradient_norm() > cfg.tolerance; ++it) {
    const double g2 = obj.grad_w.squaredNorm() + obj.grad_b * obj.grad_b;
    double trial = step;
    Eigen::VectorXd w_new;
    double b_new = 0.0;
    LogisticObjective next;
    for (int bt = 0;; ++bt) {
      w_new = w - trial * obj.grad_w;
      b_new = b - trial * obj.grad_b;
      next = logistic_objective(z, y, w_new, b_new, cfg.l2_strength);
      if (!std::isfinite(next.loss)) {
        if (bt > 60) throw ComputeError("non-finite logistic loss during optimisation");
      } else if (next.loss <= obj.loss - 1e-4 * trial * g2 || bt > 60) {
        break;
      }
      trial *= 0.5;
    }
    const Eigen::VectorXd sw = w_new - w;
    const double sb = b_new - b;
    const Eigen::VectorXd yw = next.grad_w - obj.grad_w;
    const double yb = next.grad_b - obj.grad_b;
    const double sy = sw.dot(yw) + sb * yb;
    const double ss = sw.squaredNorm() + sb * sb;
    step = (sy > 0.0) ? std::clamp(ss / sy, 1e-10, 1e10) : std::min(1.0, 2.0 * trial);
    if (ss == 0.0) break;
    w = std::move(w_new);
    b = b_new;
    obj = std::move(next);
  }
  if (!std::isfinite(obj.loss)) throw ComputeError("non-finite logistic loss during optimisation");

  fit.model.kind = ModelKind::logistic;
  fit.model.weights.assign(w.data(), w.data() + w.size());
  fit.model.intercept = b;
  fit.model.train_config = cfg;
  fit.iterations = it;
  fit.gradient_norm = obj.gradient_norm();
  fit.converged = fit.gradient_norm <= cfg.tolerance;
  return fit;
}

inline LogisticFit train_logistic(std::span<const Example> train, const TrainConfig& cfg) {
  const Eigen::MatrixXd z = feature_matrix(train);
  Eigen::VectorXd y(z.rows());
  for (std::size_t i = 0; i < train.size(); ++i) y(static_cast<Eigen::Index>(i)) = train[i].label;
  return train_logistic(z, y, cfg);
}

/// Closed-form ridge on centred data: (ZcᵀZc + γI) w = Zcᵀvc, intercept
/// chosen so the fit passes through the means (unpenalised). With
/// `standardize`, columns are scaled to unit variance before solving and
/// the weights mapped back to raw feature units.
inline LinearModel fit_ridge(const Eigen::MatrixXd& z, const Eigen::VectorXd& v, const TrainConfig& cfg) {
  cfg.validate();
  require(z.rows() >= 1 && z.rows() == v.size(), "ridge needs matching, non-empty design and targets");
  const Eigen::RowVectorXd mean = z.colwise().mean();
  Eigen::MatrixXd zc = z.rowwise() - mean;
  Eigen::VectorXd scale = Eigen::VectorXd::Ones(z.cols());
  if (cfg.standardize) {
    for (Eigen::Index k = 0; k < z.cols(); ++k) {
      const double sd = std::sqrt(zc.col(k).squaredNorm() / static_cast<double>(z.rows()));
      scale(k) = sd > 0.0 ? sd : 1.0;
      zc.col(k) /= scale(k);
    }
  }
  const double v_mean = v.mean();
  const Eigen::VectorXd vc = v.array() - v_mean;
  const double gamma = cfg.l2_strength;
  Eigen::MatrixXd a = zc.transpose() * zc;
  a.diagonal().array() += gamma;
  const Eigen::VectorXd rhs = zc.transpose() * vc;

  Eigen::VectorXd w;
  if (gamma > 0.0) {
    Eigen::LLT<Eigen::MatrixXd> llt(a);
    if (llt.info() != Eigen::Success) throw ComputeError("ridge system is not positive definite");
    w = llt.solve(rhs);
  } else {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
    if (qr.rank() < a.cols()) throw ComputeError("ridge system is singular (gamma = 0, rank-deficient design)");
    w = qr.solve(rhs);
  }
  w = w.cwiseQuotient(scale);

  LinearModel m;
  m.kind = ModelKind::ridge;
  m.weights.assign(w.data(), w.data() + w.size());
  m.intercept = v_mean - mean.dot(w);
  m.train_config = cfg;
  for (double x : m.weights) {
    if (!std::isfinite(x)) throw ComputeError("ridge solution is not finite");
  }
  return m;
}

// ---------------------------------------------------------------------------
// Scoring and delegation value

inline double score_probe(const LinearModel& model, const Example& x) {
  if (x.probe_score) return *x.probe_score;
  require(model.kind == ModelKind::logistic, "score_probe needs a logistic model");
  return sigmoid(model.linear(x.features));
}

inline double score_dv(const LinearModel& model, const Example& x) {
  require(model.kind == ModelKind::ridge, "score_dv needs a ridge model");
  return model.linear(x.features);
}

/// Probability a score assigns to the given class.
inline double class_probability(double score, int label) { return label == 1 ? score : 1.0 - score; }

/// v(x, y) = P_expert(y|x) - P_probe(y|x).
inline double delegation_value(double probe_score, double expert_score, int label) {
  return class_probability(expert_score, label) - class_probability(probe_score, label);
}

/// 1 iff the probe's hard prediction is wrong and the expert's is right.
inline int delegation_value_binary(double probe_score, double expert_score, int label) {
  return (hard_prediction(probe_score) != label && hard_prediction(expert_score) == label) ? 1 : 0;
}

enum class DvTarget { continuous, binary };

inline DvTarget dv_target_from_string(const std::string& s) {
  if (s == "continuous") return DvTarget::continuous;
  if (s == "binary") return DvTarget::binary;
  throw ValidationError("unknown DV target '" + s + "'");
}

inline double expert_score_of(const Example& x) {
  if (!x.expert_score) throw ValidationError("example '" + x.id + "' has no expert_score");
  return *x.expert_score;
}

/// Fits the DV probe on dev examples; targets come from the safety probe
/// (or stored probe_score) and the stored expert_score.
inline LinearModel train_dv_probe(std::span<const Example> dev, const LinearModel& probe, DvTarget target,
                                  const TrainConfig& cfg) {
  require(!dev.empty(), "DV probe training needs at least one example");
  const Eigen::MatrixXd z = feature_matrix(dev);
  Eigen::VectorXd v(z.rows());
  for (std::size_t i = 0; i < dev.size(); ++i) {
    const double rho = score_probe(probe, dev[i]);
    const double eps = expert_score_of(dev[i]);
    v(static_cast<Eigen::Index>(i)) = target == DvTarget::continuous
                                          ? delegation_value(rho, eps, dev[i].label)
                                          : delegation_value_binary(rho, eps, dev[i].label);
  }
  return fit_ridge(z, v, cfg);
}

/// Right-continuous empirical CDF of a sorted reference sample.
inline double empirical_cdf(double t, std::span<const double> sorted_refs) {
  require(!sorted_refs.empty(), "empty reference set");
  const auto count = std::upper_bound(sorted_refs.begin(), sorted_refs.end(), t) - sorted_refs.begin();
  return static_cast<double>(count) / static_cast<double>(sorted_refs.size());
}

/// Proximity-to-median uncertainty -|F(probe_score) - 0.5|; 0 is most
/// uncertain, -0.5 most confident.
inline double uncertainty_signal(double probe_score, std::span<const double> sorted_refs) {
  return -std::abs(empirical_cdf(probe_score, sorted_refs) - 0.5);
}

} // namespace ctd
