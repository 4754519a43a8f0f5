#pragma once

// The first Toda flow, in FM variables and lifted to closed curves, a fixed-step
// fourth-order integrator, and the monodromy traces it conserves.

#include "toda_curves/flow_engine.hpp"
#include "toda_curves/fm_bracket.hpp"

#include <cmath>
#include <functional>
#include <span>
#include <vector>

namespace toda_curves {

struct FMVelocity {
  std::vector<double> da;
  std::vector<double> db;
};

/// ȧ_k = a_k (b_k − b_{k+1}),  ḃ_k = a_{k-1} − a_k.
///
/// This is the Hamiltonian flow of H = Σ (b_k²/2 + a_k) for the λ² coefficient
/// bracket with the convention ż = {z, H}.
inline FMVelocity toda_vector_field_ab(const FMState& s) {
  const std::size_t n = s.size();
  if (n < 2) throw UnsupportedSize("toda_vector_field_ab: needs N >= 2");
  FMVelocity v{std::vector<double>(n), std::vector<double>(n)};
  for (std::size_t i = 0; i < n; ++i) {
    const auto k = static_cast<long long>(i);
    v.da[i] = s.a[i] * (s.b[i] - s.b_at(k + 1));
    v.db[i] = s.a_at(k - 1) - s.a[i];
  }
  return v;
}

/// (ȧ, ḃ) induced by a curve flow through ġ, u̇ and the definitions of a, b.
/// The result does not depend on λ.
inline FMVelocity induced_fm_velocity(const DetInvariants& inv, const FlowCoefficients& f) {
  const auto gd = g_dot(inv, f);
  const auto ud = u_dot(inv, f);
  const std::size_t n = inv.size();
  FMVelocity v{std::vector<double>(n), std::vector<double>(n)};
  for (std::size_t i = 0; i < n; ++i) {
    const auto k = static_cast<long long>(i);
    const double g = inv.g[i], gp = inv.g_at(k - 1);
    const double gpd = gd[wrap(k - 1, n)];
    v.da[i] = -2.0 * gd[i] / (g * g * g);
    const double den = gp * g;
    v.db[i] = ud[i] / den - inv.u[i] * (gpd * g + gp * gd[i]) / (den * den);
  }
  return v;
}

struct CurveFlowSolution {
  FlowCoefficients flow;
  /// Numerical rank of the 2N x 2N map (α, β) -> (ȧ, ḃ).
  std::size_t rank = 0;
  bool rank_deficient = false;
  /// max |induced − target| relative to max(1, max |target|).
  double residual = 0.0;
};

inline constexpr double kRankThreshold = 1e-10;
inline constexpr double kCurveFlowFailure = 1e-8;

/// The minimum-norm (α, β) whose induced FM velocity is the Toda vector field.
///
/// The map (α, β) -> (ȧ, ḃ) is linear; it is assembled column by column and
/// solved by SVD. For N > 3 its kernel is the infinitesimal SL(2, R) action on
/// the curve, so the rank is 2N − 3 and the minimum-norm solution is used.
inline CurveFlowSolution toda_flow_on_curve(const CurveState& c, double lambda) {
  const std::size_t n = c.size();
  detail::require_bracket_size(n, "toda_flow_on_curve");
  const auto inv = compute_invariants(c);
  inv.require_all_g("toda_flow_on_curve");
  for (std::size_t k = 0; k < n; ++k) inv.require_u(static_cast<long long>(k), "toda_flow_on_curve");

  const auto target = toda_vector_field_ab(fm_map(c, lambda));
  Eigen::VectorXd rhs(2 * n);
  for (std::size_t k = 0; k < n; ++k) {
    rhs(k) = target.da[k];
    rhs(n + k) = target.db[k];
  }

  Eigen::MatrixXd A(2 * n, 2 * n);
  auto unit = FlowCoefficients::zero(n);
  for (std::size_t col = 0; col < 2 * n; ++col) {
    auto& slot = col < n ? unit.alpha[col] : unit.beta[col - n];
    slot = 1.0;
    const auto v = induced_fm_velocity(inv, unit);
    for (std::size_t k = 0; k < n; ++k) {
      A(k, col) = v.da[k];
      A(n + k, col) = v.db[k];
    }
    slot = 0.0;
  }

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeFullU | Eigen::ComputeFullV);
  svd.setThreshold(kRankThreshold);
  const Eigen::VectorXd sol = svd.solve(rhs);

  CurveFlowSolution out;
  out.rank = static_cast<std::size_t>(svd.rank());
  out.rank_deficient = out.rank < 2 * n;
  out.residual = (A * sol - rhs).cwiseAbs().maxCoeff() / std::max(1.0, rhs.cwiseAbs().maxCoeff());
  out.flow = FlowCoefficients::zero(n);
  for (std::size_t k = 0; k < n; ++k) {
    out.flow.alpha[k] = sol(k);
    out.flow.beta[k] = sol(n + k);
  }
  if (!(out.residual <= kCurveFlowFailure)) {
    throw SolverFailure("toda_flow_on_curve: no flow reproduces the Toda field (relative residual " +
                        std::to_string(out.residual) + ")");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Integration.

/// Packing of a state into a flat phase vector and back.
template <class State>
struct PhaseTraits;

template <>
struct PhaseTraits<FMState> {
  static Eigen::VectorXd pack(const FMState& s) {
    const auto z = s.coordinates();
    return Eigen::Map<const Eigen::VectorXd>(z.data(), static_cast<Eigen::Index>(z.size()));
  }
  static FMState unpack(const Eigen::VectorXd& z, const FMState& like) {
    const std::size_t n = like.size();
    FMState s;
    s.lambda = like.lambda;
    s.a.assign(z.data(), z.data() + n);
    s.b.assign(z.data() + n, z.data() + 2 * n);
    return s;
  }
};

template <>
struct PhaseTraits<CurveState> {
  static Eigen::VectorXd pack(const CurveState& c) {
    const std::size_t n = c.size();
    Eigen::VectorXd z(2 * n);
    for (std::size_t k = 0; k < n; ++k) {
      z(k) = c.xs()[k];
      z(n + k) = c.ys()[k];
    }
    return z;
  }
  static CurveState unpack(const Eigen::VectorXd& z, const CurveState& like) {
    const std::size_t n = like.size();
    return {std::vector<double>(z.data(), z.data() + n), std::vector<double>(z.data() + n, z.data() + 2 * n)};
  }
};

template <class State>
struct Trajectory {
  std::vector<double> times;
  std::vector<State> states;
  std::vector<std::vector<double>> invariant_log;
};

/// Number of fixed steps of length dt that fit in [0, t_end].
inline std::size_t step_count(double t_end, double dt) {
  const double ratio = t_end / dt;
  const double nearest = std::round(ratio);
  if (std::abs(ratio - nearest) <= 1e-9 * std::max(1.0, nearest)) return static_cast<std::size_t>(nearest);
  return static_cast<std::size_t>(std::floor(ratio));
}

template <class State>
using VectorField = std::function<Eigen::VectorXd(const State&)>;

template <class State>
using Monitor = std::function<std::vector<double>(const State&)>;

/// Classical fourth-order Runge-Kutta with fixed step dt; snapshots at
/// t = 0, dt, 2 dt, ... up to t_end. A degenerate state met anywhere in a step
/// aborts with DegeneracyCrossing carrying the step's start time.
template <class State>
Trajectory<State> integrate(const State& initial, const VectorField<State>& field, double t_end, double dt,
                            const Monitor<State>& monitor = {}) {
  if (!(dt > 0.0)) throw std::invalid_argument("integrate: dt must be positive");
  if (!(t_end >= 0.0)) throw std::invalid_argument("integrate: t_end must be non-negative");
  using Traits = PhaseTraits<State>;

  const std::size_t steps = step_count(t_end, dt);
  Trajectory<State> traj;
  traj.times.reserve(steps + 1);
  traj.states.reserve(steps + 1);

  auto record = [&](double t, const State& s) {
    traj.times.push_back(t);
    traj.states.push_back(s);
    if (monitor) traj.invariant_log.push_back(monitor(s));
  };

  Eigen::VectorXd z = Traits::pack(initial);
  State current = initial;
  record(0.0, current);
  for (std::size_t i = 0; i < steps; ++i) {
    const double t = static_cast<double>(i) * dt;
    try {
      auto f = [&](const Eigen::VectorXd& w) { return field(Traits::unpack(w, initial)); };
      const Eigen::VectorXd k1 = f(z);
      const Eigen::VectorXd k2 = f(z + 0.5 * dt * k1);
      const Eigen::VectorXd k3 = f(z + 0.5 * dt * k2);
      const Eigen::VectorXd k4 = f(z + dt * k3);
      z += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      current = Traits::unpack(z, initial);
      record(static_cast<double>(i + 1) * dt, current);
    } catch (const DegenerateInvariant& e) {
      throw DegeneracyCrossing(std::string("integrate: ") + e.what(), t);
    } catch (const DegenerateSum& e) {
      throw DegeneracyCrossing(std::string("integrate: ") + e.what(), t);
    } catch (const SolverFailure& e) {
      throw DegeneracyCrossing(std::string("integrate: ") + e.what(), t);
    }
  }
  return traj;
}

/// The Toda vector field on (a, b); a_k must stay positive.
inline VectorField<FMState> toda_field_ab() {
  return [](const FMState& s) {
    for (std::size_t k = 0; k < s.size(); ++k) {
      if (!(s.a[k] > 0.0) || !std::isfinite(s.b[k])) {
        throw DegenerateInvariant("toda_field_ab: a_" + std::to_string(k) + " left the positive half-line");
      }
    }
    const auto v = toda_vector_field_ab(s);
    FMState vs{v.da, v.db, s.lambda};
    return PhaseTraits<FMState>::pack(vs);
  };
}

namespace detail {

inline Eigen::VectorXd pack_velocity(const std::vector<Point>& v) {
  const std::size_t n = v.size();
  Eigen::VectorXd z(2 * n);
  for (std::size_t k = 0; k < n; ++k) {
    z(k) = v[k].x();
    z(n + k) = v[k].y();
  }
  return z;
}

}  // namespace detail

/// The curve flow realizing the Toda field, as a phase-space vector field.
inline VectorField<CurveState> toda_field_curve(double lambda) {
  return [lambda](const CurveState& c) {
    return detail::pack_velocity(curve_velocity(c, toda_flow_on_curve(c, lambda).flow));
  };
}

// ---------------------------------------------------------------------------
// Conserved quantities.

/// L_k(μ) = ((u_k/g_{k-1} + μ g_k, −g_k/g_{k-1}), (1, 0)); at μ = 0 this is the
/// curve's own transfer matrix.
inline Mat2 spectral_lax_matrix(const DetInvariants& inv, long long k, double mu) {
  Mat2 l = lax_matrix(inv, k);
  l(0, 0) += mu * inv.g_at(k);
  return l;
}

/// tr T(μ) for each μ.
inline std::vector<double> spectral_invariants(const CurveState& c, std::span<const double> mus) {
  const auto inv = compute_invariants(c);
  inv.require_all_g("spectral_invariants");
  std::vector<double> out;
  out.reserve(mus.size());
  for (double mu : mus) {
    Mat2 t = Mat2::Identity();
    for (std::size_t k = 0; k < c.size(); ++k) t = spectral_lax_matrix(inv, static_cast<long long>(k), mu) * t;
    out.push_back(t.trace());
  }
  return out;
}

/// Sign of Π g_k, which the FM variables do not record.
inline int orientation(const CurveState& c) {
  const auto inv = compute_invariants(c);
  int s = 1;
  for (double g : inv.g) s = g < 0.0 ? -s : s;
  return s;
}

/// tr T(μ) from FM variables: sign · Π a_k^{-1/2} · tr Π ((b_k + λ + μ, −a_{k-1}), (1, 0)).
/// Equal to spectral_invariants of the underlying curve when sign is its orientation.
inline double spectral_trace(const FMState& s, double mu, int sign = 1) {
  Mat2 t = Mat2::Identity();
  double norm = static_cast<double>(sign);
  for (std::size_t i = 0; i < s.size(); ++i) {
    const auto k = static_cast<long long>(i);
    Mat2 l;
    l << s.b[i] + s.lambda + mu, -s.a_at(k - 1), 1.0, 0.0;
    t = l * t;
    norm /= std::sqrt(s.a[i]);
  }
  return norm * t.trace();
}

/// ∇ tr T(μ) with respect to (x_0..x_{N-1}, y_0..y_{N-1}).
inline std::vector<double> spectral_trace_gradient(const CurveState& c, double mu) {
  const std::size_t n = c.size();
  const auto inv = compute_invariants(c);
  inv.require_all_g("spectral_trace_gradient");

  std::vector<Mat2> L(n);
  for (std::size_t k = 0; k < n; ++k) L[k] = spectral_lax_matrix(inv, static_cast<long long>(k), mu);
  // prefix[k] = L_{k-1}..L_0, suffix[k] = L_{N-1}..L_{k+1}
  std::vector<Mat2> prefix(n + 1, Mat2::Identity()), suffix(n, Mat2::Identity());
  for (std::size_t k = 0; k < n; ++k) prefix[k + 1] = L[k] * prefix[k];
  for (std::size_t k = n - 1; k > 0; --k) suffix[k - 1] = suffix[k] * L[k];

  // d tr T = Σ_k tr(dL_k M_k) with M_k = prefix[k] suffix[k]; only row 0 of L_k varies.
  std::vector<double> dg(n, 0.0), du(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto k = static_cast<long long>(i);
    const Mat2 M = prefix[i] * suffix[i];
    const double gp = inv.g_at(k - 1), g = inv.g[i], u = inv.u[i];
    const double w11 = M(0, 0), w12 = M(1, 0);
    du[i] += w11 / gp;
    dg[i] += mu * w11 - w12 / gp;
    dg[wrap(k - 1, n)] += -u / (gp * gp) * w11 + g / (gp * gp) * w12;
  }

  Eigen::RowVectorXd grad = Eigen::RowVectorXd::Zero(2 * n);
  auto pt = [&](long long k) { return c.point(k); };
  auto slot = [&](long long k) { return wrap(k, n); };
  for (std::size_t i = 0; i < n; ++i) {
    const auto k = static_cast<long long>(i);
    detail::add_det_gradient(grad, n, pt, slot, k, k + 1, dg[i]);
    detail::add_det_gradient(grad, n, pt, slot, k - 1, k + 1, du[i]);
  }
  return {grad.data(), grad.data() + grad.size()};
}

// ---------------------------------------------------------------------------
// Two-route consistency.

struct ConsistencyReport {
  double lambda = 0.0;
  double t_end = 0.0;
  double dt = 0.0;
  std::size_t steps = 0;
  /// max over snapshots and sites of |a_curve − a_direct|, |b_curve − b_direct|.
  double max_deviation = 0.0;
  /// Ranks of the (α, β) system seen along the curve route.
  std::size_t min_rank = 0;
  std::size_t max_rank = 0;
  double max_solver_residual = 0.0;
};

/// Integrates the curve under the lifted Toda flow and maps it to FM
/// variables, integrates the FM state directly, and compares the two.
inline ConsistencyReport consistency_check(const CurveState& c, double lambda, double t_end, double dt) {
  ConsistencyReport r;
  r.lambda = lambda;
  r.t_end = t_end;
  r.dt = dt;
  r.min_rank = 2 * c.size();

  VectorField<CurveState> tracked = [&](const CurveState& s) {
    const auto sol = toda_flow_on_curve(s, lambda);
    r.min_rank = std::min(r.min_rank, sol.rank);
    r.max_rank = std::max(r.max_rank, sol.rank);
    r.max_solver_residual = std::max(r.max_solver_residual, sol.residual);
    return detail::pack_velocity(curve_velocity(s, sol.flow));
  };

  const auto curve_route = integrate<CurveState>(c, tracked, t_end, dt);
  const auto direct_route = integrate<FMState>(fm_map(c, lambda), toda_field_ab(), t_end, dt);
  r.steps = curve_route.times.size() - 1;

  for (std::size_t i = 0; i < curve_route.states.size(); ++i) {
    const auto mapped = fm_map(curve_route.states[i], lambda);
    const auto& direct = direct_route.states[i];
    for (std::size_t k = 0; k < c.size(); ++k) {
      r.max_deviation = std::max({r.max_deviation, std::abs(mapped.a[k] - direct.a[k]),
                                  std::abs(mapped.b[k] - direct.b[k])});
    }
  }
  return r;
}

}  // namespace toda_curves
