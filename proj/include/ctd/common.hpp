#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>

namespace ctd {

/// Raised for bad inputs: malformed records, out-of-range parameters,
/// violated preconditions. The CLI maps it to exit code 1.
class ValidationError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a computation cannot proceed (singular system, non-finite
/// loss). The CLI maps it to exit code 2.
class ComputeError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kInf = std::numeric_limits<double>::infinity();

inline double sigmoid(double t) {
  if (t >= 0.0) {
    return 1.0 / (1.0 + std::exp(-t));
  }
  const double e = std::exp(t);
  return e / (1.0 + e);
}

/// Hard prediction with the strict tie rule: exactly 0.5 predicts class 0.
inline int hard_prediction(double score) { return score > 0.5 ? 1 : 0; }

inline bool is_unit_interval(double x) { return x >= 0.0 && x <= 1.0; }

inline void require(bool cond, std::string_view what) {
  if (!cond) {
    throw ValidationError(std::string(what));
  }
}

/// splitmix64 step, used to derive independent child seeds from a master seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

} // namespace ctd
