#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <stdexcept>
#include <string>

namespace toda_curves {

using Point = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

/// Relative factor of every genericity guard; multiplied by a squared length scale.
inline constexpr double kGuardFactor = 1e-12;

// Errors. All derive from std::runtime_error so callers can catch broadly.

struct DegenerateInvariant : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DegenerateSum : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct UnsupportedSize : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SolverFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DegeneracyCrossing : std::runtime_error {
  DegeneracyCrossing(const std::string& what, double at_time)
      : std::runtime_error(what), time(at_time) {}
  double time;
};

struct GenerationFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Periodic site index: maps any integer k onto 0..n-1.
inline std::size_t wrap(long long k, std::size_t n) {
  const auto m = static_cast<long long>(n);
  const long long r = k % m;
  return static_cast<std::size_t>(r < 0 ? r + m : r);
}

/// Max-abs entry of a 2x2 matrix.
inline double max_abs(const Mat2& m) { return m.cwiseAbs().maxCoeff(); }

}  // namespace toda_curves
