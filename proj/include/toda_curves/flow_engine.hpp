#pragma once

// General flows on closed curves, γ̇_k = α_k γ_k + (β_k/u_k)(γ_{k+1} − γ_{k-1}),
// and what they induce on the invariants and on the transfer matrices.

#include "toda_curves/curve_core.hpp"

#include <string>
#include <vector>

namespace toda_curves {

struct FlowCoefficients {
  std::vector<double> alpha;
  std::vector<double> beta;

  std::size_t size() const { return alpha.size(); }
  double alpha_at(long long k) const { return alpha[wrap(k, alpha.size())]; }
  double beta_at(long long k) const { return beta[wrap(k, beta.size())]; }

  static FlowCoefficients zero(std::size_t n) { return {std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)}; }
};

/// The two entries of each V_k that determine (α_k, β_k).
struct VMatrixEntries {
  std::vector<double> v11;
  std::vector<double> v12;
};

namespace detail {

inline void check_sizes(std::size_t n, const FlowCoefficients& f, const char* where) {
  if (f.alpha.size() != n || f.beta.size() != n) {
    throw std::invalid_argument(std::string(where) + ": flow coefficients must have one entry per site");
  }
}

// β_k / u_k, skipping the guard when β_k vanishes.
inline double beta_over_u(const DetInvariants& inv, const FlowCoefficients& f, long long k,
                          const char* where) {
  const double b = f.beta_at(k);
  if (b == 0.0) return 0.0;
  inv.require_u(k, where);
  return b / inv.u_at(k);
}

}  // namespace detail

inline std::vector<Point> curve_velocity(const CurveState& c, const FlowCoefficients& f) {
  detail::check_sizes(c.size(), f, "curve_velocity");
  const auto inv = compute_invariants(c);
  std::vector<Point> v(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    const auto k = static_cast<long long>(i);
    v[i] = f.alpha[i] * c.point(k) +
           detail::beta_over_u(inv, f, k, "curve_velocity") * (c.point(k + 1) - c.point(k - 1));
  }
  return v;
}

/// V_k with all neighbouring indices wrapped periodically.
inline Mat2 v_matrix(const DetInvariants& inv, const FlowCoefficients& f, long long k) {
  detail::check_sizes(inv.size(), f, "v_matrix");
  inv.require_g(k - 1, "v_matrix");
  const double gp = inv.g_at(k - 1);
  const double bu = detail::beta_over_u(inv, f, k, "v_matrix");
  const double bu_prev = detail::beta_over_u(inv, f, k - 1, "v_matrix");
  Mat2 v;
  v << f.alpha_at(k) + f.beta_at(k) / gp, -(1.0 + inv.g_at(k) / gp) * bu,
      (1.0 + inv.g_at(k - 2) / gp) * bu_prev, f.alpha_at(k - 1) - f.beta_at(k - 1) / gp;
  return v;
}

inline std::vector<Mat2> v_matrices(const DetInvariants& inv, const FlowCoefficients& f) {
  std::vector<Mat2> out;
  out.reserve(inv.size());
  for (std::size_t k = 0; k < inv.size(); ++k) out.push_back(v_matrix(inv, f, static_cast<long long>(k)));
  return out;
}

/// ġ_k = g_k(α_{k+1} + α_k) + β_{k+1} − β_k.
inline std::vector<double> g_dot(const DetInvariants& inv, const FlowCoefficients& f) {
  detail::check_sizes(inv.size(), f, "g_dot");
  std::vector<double> out(inv.size());
  for (std::size_t i = 0; i < inv.size(); ++i) {
    const auto k = static_cast<long long>(i);
    out[i] = inv.g[i] * (f.alpha_at(k + 1) + f.alpha_at(k)) + f.beta_at(k + 1) - f.beta_at(k);
  }
  return out;
}

inline std::vector<double> u_dot(const DetInvariants& inv, const FlowCoefficients& f) {
  detail::check_sizes(inv.size(), f, "u_dot");
  inv.require_all_g("u_dot");
  std::vector<double> out(inv.size());
  for (std::size_t i = 0; i < inv.size(); ++i) {
    const auto k = static_cast<long long>(i);
    const double gk = inv.g_at(k), gp = inv.g_at(k - 1), gpp = inv.g_at(k - 2), gn = inv.g_at(k + 1);
    const double uk = inv.u_at(k);
    const double bu_prev = detail::beta_over_u(inv, f, k - 1, "u_dot");
    const double bu_next = detail::beta_over_u(inv, f, k + 1, "u_dot");
    out[i] = uk * (f.alpha_at(k - 1) + f.alpha_at(k + 1)) +
             bu_prev * gk / gp * (gpp + gp) - bu_next * gp / gk * (gk + gn) +
             uk * (f.beta_at(k + 1) / gk - f.beta_at(k - 1) / gp);
  }
  return out;
}

/// Inverts the (v11, v12) -> (α, β) relation of the first row of V_k.
inline FlowCoefficients alpha_beta_from_v(const DetInvariants& inv, const VMatrixEntries& v) {
  const std::size_t n = inv.size();
  if (v.v11.size() != n || v.v12.size() != n) {
    throw std::invalid_argument("alpha_beta_from_v: entries must have one value per site");
  }
  FlowCoefficients f{std::vector<double>(n), std::vector<double>(n)};
  for (std::size_t i = 0; i < n; ++i) {
    const auto k = static_cast<long long>(i);
    const double s = inv.g_at(k - 1) + inv.g_at(k);
    if (!(std::abs(s) > inv.eps)) {
      throw DegenerateSum("alpha_beta_from_v: |g_" + std::to_string(wrap(k - 1, n)) + " + g_" +
                          std::to_string(i) + "| is below the genericity threshold");
    }
    f.alpha[i] = v.v11[i] + v.v12[i] * inv.u[i] / s;
    f.beta[i] = -v.v12[i] * inv.g_at(k - 1) * inv.u[i] / s;
  }
  return f;
}

/// L̇_k from ġ and u̇ by the quotient rule.
inline std::vector<Mat2> lax_dot(const DetInvariants& inv, const FlowCoefficients& f) {
  const auto gd = g_dot(inv, f);
  const auto ud = u_dot(inv, f);
  const std::size_t n = inv.size();
  std::vector<Mat2> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto k = static_cast<long long>(i);
    const double gp = inv.g_at(k - 1);
    const double gpd = gd[wrap(k - 1, n)];
    Mat2 m;
    m << ud[i] / gp - inv.u[i] * gpd / (gp * gp), -gd[i] / gp + inv.g[i] * gpd / (gp * gp), 0.0, 0.0;
    out[i] = m;
  }
  return out;
}

enum class LaxDotMode {
  Analytic,          ///< quotient rule on ġ, u̇
  FiniteDifference,  ///< forward difference of L along one Euler step of the curve flow
};

/// The curve advanced by one explicit Euler step of length dt along f.
inline CurveState euler_step(const CurveState& c, const FlowCoefficients& f, double dt) {
  const auto v = curve_velocity(c, f);
  std::vector<double> x(c.size()), y(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    x[i] = c.xs()[i] + dt * v[i].x();
    y[i] = c.ys()[i] + dt * v[i].y();
  }
  return {std::move(x), std::move(y)};
}

/// max_k ‖L̇_k − (V_{k+1} L_k − L_k V_k)‖, entrywise max norm.
inline double zero_curvature_residual(const CurveState& c, const FlowCoefficients& f, double dt,
                                      LaxDotMode mode = LaxDotMode::Analytic) {
  const auto inv = compute_invariants(c);
  const auto lax = lax_matrices(inv);
  const auto V = v_matrices(inv, f);
  const std::size_t n = c.size();

  std::vector<Mat2> ldot;
  if (mode == LaxDotMode::Analytic) {
    ldot = lax_dot(inv, f);
  } else {
    const auto moved = lax_matrices(compute_invariants(euler_step(c, f, dt)));
    ldot.resize(n);
    for (std::size_t k = 0; k < n; ++k) ldot[k] = (moved.L[k] - lax.L[k]) / dt;
  }

  double worst = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const Mat2 rhs = V[wrap(static_cast<long long>(k) + 1, n)] * lax.L[k] - lax.L[k] * V[k];
    worst = std::max(worst, max_abs(ldot[k] - rhs));
  }
  return worst;
}

}  // namespace toda_curves
