#pragma once

// Closed discrete planar curves: determinant invariants, frames, transfer
// matrices and monodromy, plus reconstruction of a curve from its invariants.
//
// Sites are labelled 0..N-1 and every index is taken modulo N.

#include "toda_curves/common.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <vector>

namespace toda_curves {

/// A closed discrete curve: the 2N canonical coordinates (x_k, y_k).
class CurveState {
 public:
  CurveState() = default;

  CurveState(std::vector<double> x, std::vector<double> y)
      : x_(std::move(x)), y_(std::move(y)) {
    if (x_.size() != y_.size()) {
      throw std::invalid_argument("CurveState: x and y must have equal length");
    }
    if (x_.empty()) {
      throw std::invalid_argument("CurveState: a curve needs at least one site");
    }
  }

  static CurveState from_points(std::span<const Point> pts) {
    std::vector<double> x, y;
    x.reserve(pts.size());
    y.reserve(pts.size());
    for (const auto& p : pts) {
      x.push_back(p.x());
      y.push_back(p.y());
    }
    return {std::move(x), std::move(y)};
  }

  std::size_t size() const { return x_.size(); }

  double x(long long k) const { return x_[wrap(k, size())]; }
  double y(long long k) const { return y_[wrap(k, size())]; }
  Point point(long long k) const { return {x(k), y(k)}; }

  const std::vector<double>& xs() const { return x_; }
  const std::vector<double>& ys() const { return y_; }

  /// Largest absolute coordinate; the length scale of the curve.
  double scale() const {
    double m = 0.0;
    for (std::size_t i = 0; i < size(); ++i) {
      m = std::max({m, std::abs(x_[i]), std::abs(y_[i])});
    }
    return m;
  }

  /// Genericity threshold for determinants of this curve: 1e-12 * scale^2.
  double guard() const {
    const double s = scale();
    return kGuardFactor * s * s;
  }

  bool operator==(const CurveState&) const = default;

 private:
  std::vector<double> x_;
  std::vector<double> y_;
};

/// det(p, q) for column vectors p, q.
inline double det2(const Point& p, const Point& q) { return p.x() * q.y() - p.y() * q.x(); }

/// The sequences g_k = det(γ_k, γ_{k+1}) and u_k = det(γ_{k-1}, γ_{k+1}).
struct DetInvariants {
  std::vector<double> g;
  std::vector<double> u;
  /// Threshold below which |g_k|, |u_k| or |g_{k-1}+g_k| count as zero.
  double eps = 0.0;

  std::size_t size() const { return g.size(); }
  double g_at(long long k) const { return g[wrap(k, size())]; }
  double u_at(long long k) const { return u[wrap(k, size())]; }

  /// Invariants given directly as sequences; the guard scales with their magnitude.
  static DetInvariants from_sequences(std::vector<double> g, std::vector<double> u) {
    if (g.size() != u.size() || g.empty()) {
      throw std::invalid_argument("DetInvariants: g and u must be non-empty and of equal length");
    }
    double m = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) m = std::max({m, std::abs(g[i]), std::abs(u[i])});
    return {std::move(g), std::move(u), kGuardFactor * m};
  }

  bool g_generic() const {
    return std::all_of(g.begin(), g.end(), [&](double v) { return std::abs(v) > eps; });
  }
  bool u_generic() const {
    return std::all_of(u.begin(), u.end(), [&](double v) { return std::abs(v) > eps; });
  }
  bool sums_generic() const {
    for (std::size_t k = 0; k < size(); ++k) {
      if (std::abs(g_at(static_cast<long long>(k) - 1) + g[k]) <= eps) return false;
    }
    return true;
  }

  void require_g(long long k, const char* where) const {
    if (!(std::abs(g_at(k)) > eps)) {
      throw DegenerateInvariant(std::string(where) + ": |g_" + std::to_string(wrap(k, size())) +
                                "| is below the genericity threshold");
    }
  }
  void require_u(long long k, const char* where) const {
    if (!(std::abs(u_at(k)) > eps)) {
      throw DegenerateInvariant(std::string(where) + ": |u_" + std::to_string(wrap(k, size())) +
                                "| is below the genericity threshold");
    }
  }
  void require_all_g(const char* where) const {
    for (std::size_t k = 0; k < size(); ++k) require_g(static_cast<long long>(k), where);
  }
};

inline DetInvariants compute_invariants(const CurveState& c) {
  const std::size_t n = c.size();
  DetInvariants inv;
  inv.g.resize(n);
  inv.u.resize(n);
  inv.eps = c.guard();
  for (std::size_t i = 0; i < n; ++i) {
    const auto k = static_cast<long long>(i);
    inv.g[i] = c.x(k) * c.y(k + 1) - c.y(k) * c.x(k + 1);
    inv.u[i] = c.x(k - 1) * c.y(k + 1) - c.y(k - 1) * c.x(k + 1);
  }
  return inv;
}

/// Rebuilds γ_0..γ_steps from (g, u) and two seed points via
/// γ_{k+1} = (u_k γ_k − g_k γ_{k-1}) / g_{k-1}.
inline std::vector<Point> reconstruct_curve(const DetInvariants& inv, const Point& p0,
                                            const Point& p1, std::size_t steps) {
  std::vector<Point> pts;
  pts.reserve(steps + 1);
  pts.push_back(p0);
  if (steps == 0) return pts;
  pts.push_back(p1);
  for (std::size_t i = 1; i < steps; ++i) {
    const auto k = static_cast<long long>(i);
    inv.require_g(k - 1, "reconstruct_curve");
    pts.push_back((inv.u_at(k) * pts[i] - inv.g_at(k) * pts[i - 1]) / inv.g_at(k - 1));
  }
  return pts;
}

/// Discrete frame F_k with rows γ_k and γ_{k-1}.
inline Mat2 frame(const CurveState& c, long long k) {
  Mat2 f;
  f << c.x(k), c.y(k), c.x(k - 1), c.y(k - 1);
  return f;
}

/// Per-site transfer matrices L_k, and optionally the flow matrices V_k.
struct LaxData {
  std::vector<Mat2> L;
  std::vector<Mat2> V;

  std::size_t size() const { return L.size(); }
};

/// L_k = ((u_k/g_{k-1}, −g_k/g_{k-1}), (1, 0)), so that F_{k+1} = L_k F_k.
inline Mat2 lax_matrix(const DetInvariants& inv, long long k) {
  inv.require_g(k - 1, "lax_matrix");
  const double gp = inv.g_at(k - 1);
  Mat2 l;
  l << inv.u_at(k) / gp, -inv.g_at(k) / gp, 1.0, 0.0;
  return l;
}

inline LaxData lax_matrices(const DetInvariants& inv) {
  inv.require_all_g("lax_matrices");
  LaxData lax;
  lax.L.reserve(inv.size());
  for (std::size_t k = 0; k < inv.size(); ++k) lax.L.push_back(lax_matrix(inv, static_cast<long long>(k)));
  return lax;
}

/// Ordered product over one period, T = L_{N-1} ... L_1 L_0, so that T F_0 = F_N.
inline Mat2 monodromy(std::span<const Mat2> L) {
  Mat2 t = Mat2::Identity();
  for (const auto& l : L) t = l * t;
  return t;
}

inline Mat2 monodromy(const LaxData& lax) { return monodromy(std::span<const Mat2>(lax.L)); }

/// The curve relabelled so that site k of the result is site k+shift of c.
inline CurveState shifted(const CurveState& c, long long shift) {
  std::vector<double> x(c.size()), y(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    x[i] = c.x(static_cast<long long>(i) + shift);
    y[i] = c.y(static_cast<long long>(i) + shift);
  }
  return {std::move(x), std::move(y)};
}

/// Regular n-gon on the unit circle, γ_k = (cos 2πk/n, sin 2πk/n).
inline CurveState regular_polygon(std::size_t n) {
  std::vector<double> x(n), y(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double t = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
    x[k] = std::cos(t);
    y[k] = std::sin(t);
  }
  return {std::move(x), std::move(y)};
}

}  // namespace toda_curves
