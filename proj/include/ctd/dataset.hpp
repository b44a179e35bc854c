#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ctd/common.hpp"

namespace ctd {

/// One datapoint: latent features z(x), binary safety label (0 safe, 1
/// unsafe), an opaque group tag, and optional precomputed scores.
struct Example {
  std::string id;
  std::string group;
  int label = 0;
  std::vector<double> features;
  std::optional<double> probe_score;
  std::optional<double> expert_score;

  bool operator==(const Example&) const = default;
};

/// An example after the probe, expert and DV probe have been applied, with
/// its ground-truth delegation value attached.
struct ScoredExample {
  std::string id;
  std::string group;
  int label = 0;
  double probe = 0.5;
  double expert = 0.5;
  double dv = 0.0;
  double value = 0.0;
};

using ScoredDataset = std::vector<ScoredExample>;

inline void validate_example(const Example& ex) {
  require(ex.label == 0 || ex.label == 1, "label outside {0,1}");
  for (double f : ex.features) {
    require(std::isfinite(f), "non-finite feature entry");
  }
  if (ex.probe_score) {
    require(is_unit_interval(*ex.probe_score), "probe_score outside [0,1]");
  }
  if (ex.expert_score) {
    require(is_unit_interval(*ex.expert_score), "expert_score outside [0,1]");
  }
}

inline nlohmann::ordered_json to_json(const Example& ex) {
  nlohmann::ordered_json j;
  j["id"] = ex.id;
  j["group"] = ex.group;
  j["label"] = ex.label;
  j["features"] = ex.features;
  if (ex.probe_score) j["probe_score"] = *ex.probe_score;
  if (ex.expert_score) j["expert_score"] = *ex.expert_score;
  return j;
}

namespace detail {

inline Example parse_example(const std::string& line) {
  const auto j = nlohmann::json::parse(line);
  require(j.is_object(), "record is not an object");
  for (const char* key : {"id", "group", "label", "features"}) {
    require(j.contains(key), std::string("missing field '") + key + "'");
  }
  Example ex;
  ex.id = j.at("id").get<std::string>();
  ex.group = j.at("group").get<std::string>();
  const auto& label = j.at("label");
  require(label.is_number_integer(), "label outside {0,1}");
  ex.label = label.get<int>();
  ex.features = j.at("features").get<std::vector<double>>();
  if (j.contains("probe_score") && !j.at("probe_score").is_null()) {
    ex.probe_score = j.at("probe_score").get<double>();
  }
  if (j.contains("expert_score") && !j.at("expert_score").is_null()) {
    ex.expert_score = j.at("expert_score").get<double>();
  }
  validate_example(ex);
  return ex;
}

} // namespace detail

/// Parses JSONL text. Blank lines are skipped; errors carry the 1-based
/// line number.
inline std::vector<Example> parse_jsonl(std::istream& in) {
  std::vector<Example> out;
  std::string line;
  std::size_t lineno = 0;
  std::optional<std::size_t> dim;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    Example ex;
    try {
      ex = detail::parse_example(line);
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("line " + std::to_string(lineno) + ": malformed record: " + e.what());
    } catch (const ValidationError& e) {
      throw ValidationError("line " + std::to_string(lineno) + ": " + e.what());
    }
    if (!dim) dim = ex.features.size();
    if (ex.features.size() != *dim) {
      throw ValidationError("line " + std::to_string(lineno) + ": feature dimension " +
                            std::to_string(ex.features.size()) + " does not match " +
                            std::to_string(*dim));
    }
    out.push_back(std::move(ex));
  }
  return out;
}

inline std::vector<Example> load_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path);
  return parse_jsonl(in);
}

inline void write_jsonl(std::ostream& out, std::span<const Example> examples) {
  for (const auto& ex : examples) {
    out << to_json(ex).dump() << '\n';
  }
}

inline void write_jsonl(const std::string& path, std::span<const Example> examples) {
  std::ofstream out(path);
  if (!out) throw ComputeError("cannot write " + path);
  write_jsonl(out, examples);
}

/// Fractions of the shuffled pool sent to dev, calibration and evaluation,
/// plus the share of the calibration part used as D_est (the rest is D_cal).
/// dev may be zero when the DV probe is trained on separately supplied data.
struct SplitSpec {
  double dev = 0.3;
  double calibration = 0.35;
  double evaluation = 0.35;
  double est = 0.3;
  std::uint64_t seed = 0;

  void validate() const {
    require(dev >= 0.0 && dev < 1.0, "split fraction 'dev' must be in [0,1)");
    require(calibration > 0.0 && calibration < 1.0, "split fraction 'calibration' must be in (0,1)");
    require(evaluation > 0.0 && evaluation < 1.0, "split fraction 'evaluation' must be in (0,1)");
    require(est > 0.0 && est < 1.0, "split fraction 'est' must be in (0,1)");
    require(std::abs(dev + calibration + evaluation - 1.0) < 1e-9,
            "split fractions dev + calibration + evaluation must sum to 1");
  }
};

template <class T>
struct Partition {
  std::vector<T> dev;
  std::vector<T> est;
  std::vector<T> cal;
  std::vector<T> eval;
};

/// Index-level split: floor sizes for dev and calibration, remainder to
/// evaluation; inside calibration floor for est, remainder to cal.
inline std::size_t floor_share(double fraction, std::size_t n) {
  // Tolerates products like 0.35 * 100 landing a hair below the integer.
  return static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 1e-9));
}

inline Partition<std::size_t> split_indices(std::size_t n, const SplitSpec& spec) {
  spec.validate();
  require(n > 0, "cannot split an empty dataset");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(spec.seed);
  std::shuffle(order.begin(), order.end(), rng);

  const std::size_t n_dev = floor_share(spec.dev, n);
  const std::size_t n_calib = floor_share(spec.calibration, n);
  require(n_dev + n_calib < n, "split 'eval' is empty after rounding");
  const std::size_t n_eval = n - n_dev - n_calib;
  const std::size_t n_est = floor_share(spec.est, n_calib);
  const std::size_t n_cal = n_calib - n_est;

  if (spec.dev > 0.0 && n_dev == 0) throw ValidationError("split 'dev' is empty after rounding");
  if (n_est == 0) throw ValidationError("split 'est' is empty after rounding");
  if (n_cal == 0) throw ValidationError("split 'cal' is empty after rounding");
  if (n_eval == 0) throw ValidationError("split 'eval' is empty after rounding");

  Partition<std::size_t> p;
  auto it = order.begin();
  p.dev.assign(it, it + static_cast<std::ptrdiff_t>(n_dev));
  it += static_cast<std::ptrdiff_t>(n_dev);
  p.est.assign(it, it + static_cast<std::ptrdiff_t>(n_est));
  it += static_cast<std::ptrdiff_t>(n_est);
  p.cal.assign(it, it + static_cast<std::ptrdiff_t>(n_cal));
  it += static_cast<std::ptrdiff_t>(n_cal);
  p.eval.assign(it, order.end());
  // Restore file order inside each split.
  for (auto* part : {&p.dev, &p.est, &p.cal, &p.eval}) {
    std::sort(part->begin(), part->end());
  }
  return p;
}

template <class T>
std::vector<T> gather(std::span<const T> items, std::span<const std::size_t> idx) {
  std::vector<T> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(items[i]);
  return out;
}

template <class T>
Partition<T> split(std::span<const T> items, const SplitSpec& spec) {
  const auto idx = split_indices(items.size(), spec);
  return {gather(items, std::span<const std::size_t>(idx.dev)),
          gather(items, std::span<const std::size_t>(idx.est)),
          gather(items, std::span<const std::size_t>(idx.cal)),
          gather(items, std::span<const std::size_t>(idx.eval))};
}

template <class T>
Partition<T> split(const std::vector<T>& items, const SplitSpec& spec) {
  return split(std::span<const T>(items), spec);
}

} // namespace ctd
