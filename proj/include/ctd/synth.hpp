#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ctd/common.hpp"
#include "ctd/config.hpp"
#include "ctd/dataset.hpp"

namespace ctd::synth {

/// One population in the synthetic pool.
///
/// Features for a plain example are `offset * c_g + (2y-1) * (sep/2) * u_g +
/// N(0, I)`, where u_g and c_g are orthonormal group directions. A
/// `deceptive_fraction` of examples has the class term flipped (the probe
/// sees the opposite class) and carries a shared marker direction, which
/// models inputs that fool the probe but not the expert.
///
/// With `difficulty_spread` d > 0 each example draws a difficulty h ~ U(0,1);
/// its class term is scaled by (1 + d(1 - 2h)) and `difficulty_marker *
/// (h - 1/2)` is added along a shared difficulty direction. d = 0 and a zero
/// marker give the plain two-Gaussian model.
///
/// The expert is a noisy label channel on the logit scale:
/// `expert = sigmoid(expert_skill * (2y-1) + N(0, expert_noise^2))`.
struct GroupConfig {
  std::string name;
  std::size_t n = 0;
  double class_separation = 2.0;
  double expert_skill = 2.0;
  double expert_noise = 1.0;
  double offset = 0.0;
  double deceptive_fraction = 0.0;

  void validate() const {
    require(!name.empty(), "group name must be non-empty");
    require(n >= 1, "group '" + name + "': n must be >= 1");
    require(class_separation >= 0.0, "group '" + name + "': class_separation must be >= 0");
    require(expert_noise >= 0.0, "group '" + name + "': expert_noise must be >= 0");
    require(std::isfinite(expert_skill), "group '" + name + "': expert_skill must be finite");
    require(offset >= 0.0, "group '" + name + "': offset must be >= 0");
    require(deceptive_fraction >= 0.0 && deceptive_fraction <= 1.0,
            "group '" + name + "': deceptive_fraction must be in [0,1]");
  }
};

struct SynthConfig {
  std::size_t dim = 16;
  std::vector<GroupConfig> groups;
  double label_prior = 0.5;
  double deception_marker = 2.0;
  double difficulty_spread = 0.0;
  double difficulty_marker = 0.0;
  std::uint64_t seed = 0;

  void validate() const {
    require(difficulty_spread >= 0.0 && difficulty_spread <= 1.0, "difficulty_spread must be in [0,1]");
    require(difficulty_marker >= 0.0, "difficulty_marker must be >= 0");
    require(dim >= 1, "dim must be >= 1");
    require(!groups.empty(), "at least one group is required");
    require(label_prior > 0.0 && label_prior < 1.0, "label_prior must be in (0,1)");
    require(deception_marker >= 0.0, "deception_marker must be >= 0");
    for (const auto& g : groups) g.validate();
  }
};

/// Orthonormal columns from the QR factorisation of a seeded Gaussian matrix.
inline Eigen::MatrixXd orthonormal_basis(std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto d = static_cast<Eigen::Index>(dim);
  Eigen::MatrixXd a(d, d);
  for (Eigen::Index j = 0; j < d; ++j) {
    for (Eigen::Index i = 0; i < d; ++i) a(i, j) = normal(rng);
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  return qr.householderQ() * Eigen::MatrixXd::Identity(d, d);
}

namespace detail {

inline std::vector<Example> generate_stream(const SynthConfig& cfg, std::uint64_t stream, const std::string& id_prefix) {
  cfg.validate();
  const Eigen::MatrixXd basis = orthonormal_basis(cfg.dim, derive_seed(cfg.seed, 0));
  const auto column = [&](std::size_t k) { return basis.col(static_cast<Eigen::Index>(k % cfg.dim)); };
  const std::size_t n_groups = cfg.groups.size();
  const Eigen::VectorXd marker = column(2 * n_groups);
  const Eigen::VectorXd difficulty_dir = column(2 * n_groups + 1);
  const std::uint64_t sample_seed = derive_seed(cfg.seed, 1000 + stream);

  std::vector<Example> out;
  for (std::size_t g = 0; g < n_groups; ++g) {
    const auto& grp = cfg.groups[g];
    const Eigen::VectorXd class_dir = column(2 * g);
    const Eigen::VectorXd center_dir = column(2 * g + 1);
    std::mt19937_64 rng(derive_seed(sample_seed, g));
    std::bernoulli_distribution label_draw(cfg.label_prior);
    std::bernoulli_distribution deceptive_draw(grp.deceptive_fraction);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    for (std::size_t i = 0; i < grp.n; ++i) {
      const int y = label_draw(rng) ? 1 : 0;
      const bool deceptive = deceptive_draw(rng);
      const double h = unit(rng);
      const double sign = (2.0 * y - 1.0) * (deceptive ? -1.0 : 1.0);
      const double margin = 0.5 * grp.class_separation * (1.0 + cfg.difficulty_spread * (1.0 - 2.0 * h));
      Eigen::VectorXd z = grp.offset * center_dir + sign * margin * class_dir;
      if (deceptive) z += cfg.deception_marker * marker;
      z += cfg.difficulty_marker * (h - 0.5) * difficulty_dir;
      for (Eigen::Index k = 0; k < z.size(); ++k) z(k) += normal(rng);
      const double logit = grp.expert_skill * (2.0 * y - 1.0) + grp.expert_noise * normal(rng);

      Example ex;
      ex.id = id_prefix + grp.name + "-" + std::to_string(i);
      ex.group = grp.name;
      ex.label = y;
      ex.features.assign(z.data(), z.data() + z.size());
      ex.expert_score = sigmoid(logit);
      out.push_back(std::move(ex));
    }
  }
  std::mt19937_64 rng(derive_seed(sample_seed, n_groups));
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

} // namespace detail

/// Generates the pool and shuffles it so that file order is i.i.d. across
/// groups. probe_score is always left empty. The latent geometry (group and
/// marker directions) depends only on `seed`.
inline std::vector<Example> generate(const SynthConfig& cfg) { return detail::generate_stream(cfg, 0, ""); }

/// An independent draw from the same geometry, for training the safety
/// probe. Ids carry a `train-` prefix.
inline std::vector<Example> generate_probe_training(const SynthConfig& cfg) {
  return detail::generate_stream(cfg, 1, "train-");
}

/// Strong expert: positive skill everywhere, one low-separation group.
inline SynthConfig strong_expert_preset(std::uint64_t seed = 7) {
  SynthConfig cfg;
  cfg.dim = 16;
  cfg.seed = seed;
  cfg.deception_marker = 3.0;
  cfg.difficulty_spread = 1.0;
  cfg.difficulty_marker = 4.0;
  cfg.groups = {
      {"forum", 1200, 2.5, 4.0, 1.0, 2.0, 0.25},
      {"clinical", 1200, 4.0, 2.0, 2.5, 2.0, 0.15},
      {"dialogue", 900, 1.0, 2.0, 3.0, 2.0, 0.15},
      {"tools", 1200, 3.0, 2.5, 1.5, 2.0, 0.15},
  };
  return cfg;
}

/// Weak expert: same latent geometry, mixed-sign skill, mostly negative.
inline SynthConfig weak_expert_preset(std::uint64_t seed = 7) {
  SynthConfig cfg = strong_expert_preset(seed);
  cfg.groups[0].expert_skill = 1.5;
  cfg.groups[0].expert_noise = 1.5;
  cfg.groups[1].expert_skill = -1.5;
  cfg.groups[2].expert_skill = -1.0;
  cfg.groups[3].expert_skill = -0.5;
  return cfg;
}

inline SynthConfig preset(const std::string& name, std::uint64_t seed = 7) {
  if (name == "strong_expert") return strong_expert_preset(seed);
  if (name == "weak_expert") return weak_expert_preset(seed);
  throw ValidationError("unknown preset '" + name + "'");
}

/// Reads `preset`, `dim`, `label_prior`, `deception_marker`,
/// `difficulty_spread`, `difficulty_marker`, `seed` and
/// `group.<name>.<field>` keys. Group keys override a preset's group of the
/// same name or append a new group.
inline SynthConfig from_config(const Config& c) {
  SynthConfig cfg;
  if (auto p = c.raw("preset")) cfg = preset(*p);
  cfg.dim = static_cast<std::size_t>(c.get_int("dim", static_cast<std::int64_t>(cfg.dim)));
  cfg.label_prior = c.get_double("label_prior", cfg.label_prior);
  cfg.deception_marker = c.get_double("deception_marker", cfg.deception_marker);
  cfg.difficulty_spread = c.get_double("difficulty_spread", cfg.difficulty_spread);
  cfg.difficulty_marker = c.get_double("difficulty_marker", cfg.difficulty_marker);
  cfg.seed = static_cast<std::uint64_t>(c.get_int("seed", static_cast<std::int64_t>(cfg.seed)));

  for (const auto& key : c.keys()) {
    if (key.rfind("group.", 0) != 0) continue;
    const auto dot = key.rfind('.');
    if (dot <= 6) throw ValidationError("config key '" + key + "': expected group.<name>.<field>");
    const auto name = key.substr(6, dot - 6);
    const auto field = key.substr(dot + 1);
    auto it = std::find_if(cfg.groups.begin(), cfg.groups.end(),
                           [&](const GroupConfig& g) { return g.name == name; });
    if (it == cfg.groups.end()) {
      cfg.groups.push_back(GroupConfig{name, 1000});
      it = cfg.groups.end() - 1;
    }
    if (field == "n") {
      const auto n = c.get_int(key, 0);
      require(n >= 1, "group '" + name + "': n must be >= 1");
      it->n = static_cast<std::size_t>(n);
    } else if (field == "class_separation") {
      it->class_separation = c.get_double(key, 0.0);
    } else if (field == "expert_skill") {
      it->expert_skill = c.get_double(key, 0.0);
    } else if (field == "expert_noise") {
      it->expert_noise = c.get_double(key, 0.0);
    } else if (field == "offset") {
      it->offset = c.get_double(key, 0.0);
    } else if (field == "deceptive_fraction") {
      it->deceptive_fraction = c.get_double(key, 0.0);
    } else {
      throw ValidationError("config key '" + key + "': unknown group field '" + field + "'");
    }
  }
  cfg.validate();
  return cfg;
}

} // namespace ctd::synth
