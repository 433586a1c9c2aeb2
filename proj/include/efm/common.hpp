#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

namespace efm {

/// Integer cost unit handed to the flow solver and used for all energies.
using Ticks = std::int64_t;

/// Marks an appearance-infeasible score inside tick tables. Large enough to
/// dominate any real sum, small enough that adding a handful never overflows.
inline constexpr Ticks kInfeasibleTicks = std::numeric_limits<Ticks>::max() / 8;

/// Label id of the outlier model.
inline constexpr int kOutlier = -1;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised for degenerate geometric input (collinear samples, points at infinity).
class DegenerateError : public Error {
 public:
  using Error::Error;
};

/// Raised when an assignment instance cannot be completed.
class InfeasibleError : public Error {
 public:
  using Error::Error;
};

/// Raised for malformed files or arguments that violate an operation's contract.
class DataError : public Error {
 public:
  using Error::Error;
};

inline bool is_infeasible(double score) { return std::isinf(score); }

inline Ticks to_ticks(double value, double cost_scale) {
  const double scaled = value * cost_scale;
  if (!(scaled < static_cast<double>(kInfeasibleTicks))) return kInfeasibleTicks;
  return static_cast<Ticks>(std::llround(scaled));
}

}  // namespace efm
