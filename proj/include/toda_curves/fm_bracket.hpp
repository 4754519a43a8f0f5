#pragma once

// Flaschka-Manakov variables of a closed curve,
//
//   a_k = g_k^{-2},   b_k = u_k / (g_{k-1} g_k) − λ,
//
// and the Poisson brackets they inherit from the canonical bracket
// {x_i, y_i} = 1/2 on the curve's coordinates. The closed-form relations are
// available both as direct formulas and as polynomial structure tables graded
// by powers of λ.

#include "toda_curves/curve_core.hpp"
#include "toda_curves/polynomial.hpp"

#include <array>
#include <cmath>
#include <span>
#include <string>
#include <vector>

namespace toda_curves {

struct FMState {
  std::vector<double> a;
  std::vector<double> b;
  double lambda = 0.0;

  std::size_t size() const { return a.size(); }
  double a_at(long long k) const { return a[wrap(k, a.size())]; }
  double b_at(long long k) const { return b[wrap(k, b.size())]; }

  /// (a_0..a_{N-1}, b_0..b_{N-1}), the coordinate layout of every bracket table.
  std::vector<double> coordinates() const {
    std::vector<double> z(a);
    z.insert(z.end(), b.begin(), b.end());
    return z;
  }
};

/// Names one of the 2N variables a_k or b_k.
struct VarLabel {
  enum class Kind { A, B };
  Kind kind = Kind::A;
  long long index = 0;

  static VarLabel A(long long k) { return {Kind::A, k}; }
  static VarLabel B(long long k) { return {Kind::B, k}; }

  /// Position in the (a, b) coordinate layout.
  std::size_t flat(std::size_t n) const { return (kind == Kind::A ? 0 : n) + wrap(index, n); }

  static VarLabel from_flat(std::size_t i, std::size_t n) {
    return i < n ? A(static_cast<long long>(i)) : B(static_cast<long long>(i - n));
  }

  bool operator==(const VarLabel&) const = default;
};

inline std::string to_string(const VarLabel& v) {
  return std::string(v.kind == VarLabel::Kind::A ? "a_" : "b_") + std::to_string(v.index);
}

inline FMState fm_map(const CurveState& c, double lambda) {
  const auto inv = compute_invariants(c);
  inv.require_all_g("fm_map");
  FMState s;
  s.lambda = lambda;
  s.a.resize(c.size());
  s.b.resize(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    const auto k = static_cast<long long>(i);
    s.a[i] = 1.0 / (inv.g[i] * inv.g[i]);
    s.b[i] = inv.u[i] / (inv.g_at(k - 1) * inv.g[i]) - lambda;
  }
  return s;
}

// ---------------------------------------------------------------------------
// Gradients with respect to the canonical coordinates.

/// Row-major 2N x 2N: row k is ∇a_k, row N+k is ∇b_k; columns are
/// (x_0..x_{N-1}, y_0..y_{N-1}).
using GradientTable = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

namespace detail {

// Adds s * ∇det(γ_i, γ_j) into `row`. `pt(k)` yields γ_k and `slot(k)` its
// x column; the y column is slot(k) + m.
template <class PointAt, class Slot, class Row>
void add_det_gradient(Row&& row, std::size_t m, const PointAt& pt, const Slot& slot, long long i,
                      long long j, double s) {
  const Point pi = pt(i), pj = pt(j);
  const std::size_t si = slot(i), sj = slot(j);
  row(si) += s * pj.y();
  row(m + si) -= s * pj.x();
  row(sj) -= s * pi.y();
  row(m + sj) += s * pi.x();
}

template <class PointAt, class Slot, class Row>
void add_a_gradient(Row&& row, std::size_t m, const PointAt& pt, const Slot& slot, long long k) {
  const double g = det2(pt(k), pt(k + 1));
  add_det_gradient(row, m, pt, slot, k, k + 1, -2.0 / (g * g * g));
}

// Gradient of u_k / (g_{k-1} g_k); the shift λ has no gradient.
template <class PointAt, class Slot, class Row>
void add_b_gradient(Row&& row, std::size_t m, const PointAt& pt, const Slot& slot, long long k) {
  const double gp = det2(pt(k - 1), pt(k));
  const double g = det2(pt(k), pt(k + 1));
  const double u = det2(pt(k - 1), pt(k + 1));
  const double beta = u / (gp * g);
  add_det_gradient(row, m, pt, slot, k - 1, k + 1, 1.0 / (gp * g));
  add_det_gradient(row, m, pt, slot, k - 1, k, -beta / gp);
  add_det_gradient(row, m, pt, slot, k, k + 1, -beta / g);
}

}  // namespace detail

/// Exact chain-rule gradients of every a_k and b_k.
inline GradientTable fm_gradients(const CurveState& c) {
  compute_invariants(c).require_all_g("fm_gradients");
  const std::size_t n = c.size();
  GradientTable grad = GradientTable::Zero(2 * n, 2 * n);
  auto pt = [&](long long k) { return c.point(k); };
  auto slot = [&](long long k) { return wrap(k, n); };
  for (std::size_t i = 0; i < n; ++i) {
    const auto k = static_cast<long long>(i);
    detail::add_a_gradient(grad.row(i), n, pt, slot, k);
    detail::add_b_gradient(grad.row(n + i), n, pt, slot, k);
  }
  return grad;
}

/// Central finite-difference gradients of fm_map with absolute step h.
inline GradientTable fm_gradients_fd(const CurveState& c, double h = 1e-6) {
  const std::size_t n = c.size();
  GradientTable grad(2 * n, 2 * n);
  for (std::size_t col = 0; col < 2 * n; ++col) {
    auto x = c.xs();
    auto y = c.ys();
    auto& coord = col < n ? x[col] : y[col - n];
    const double orig = coord;
    coord = orig + h;
    const auto plus = fm_map(CurveState(x, y), 0.0).coordinates();
    coord = orig - h;
    const auto minus = fm_map(CurveState(x, y), 0.0).coordinates();
    for (std::size_t r = 0; r < 2 * n; ++r) grad(r, col) = (plus[r] - minus[r]) / (2.0 * h);
  }
  return grad;
}

/// {F, G} = (1/2) Σ_i (∂F/∂x_i ∂G/∂y_i − ∂F/∂y_i ∂G/∂x_i), gradients laid out (x.., y..).
inline double canonical_bracket(std::span<const double> f, std::span<const double> g) {
  if (f.size() != g.size() || f.size() % 2 != 0) {
    throw std::invalid_argument("canonical_bracket: gradients must share an even length");
  }
  const std::size_t n = f.size() / 2;
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += f[i] * g[n + i] - f[n + i] * g[i];
  return 0.5 * s;
}

/// (1/2) Σ_i (|∂F/∂x_i ∂G/∂y_i| + |∂F/∂y_i ∂G/∂x_i|): the magnitude against
/// which rounding in canonical_bracket is measured.
inline double canonical_bracket_scale(std::span<const double> f, std::span<const double> g) {
  const std::size_t n = f.size() / 2;
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::abs(f[i] * g[n + i]) + std::abs(f[n + i] * g[i]);
  return 0.5 * s;
}

/// Brackets among all 2N variables in the (a, b) layout.
struct BracketTable {
  std::size_t n = 0;
  double lambda = 0.0;
  Eigen::MatrixXd values;
  /// Per-entry rounding scale (zero for the closed forms).
  Eigen::MatrixXd scale;

  double value(const VarLabel& p, const VarLabel& q) const { return values(p.flat(n), q.flat(n)); }
};

/// The canonical bracket of every pair of rows of `grad`.
inline BracketTable bracket_table(const GradientTable& grad, double lambda) {
  const auto dim = static_cast<std::size_t>(grad.rows());
  BracketTable t{dim / 2, lambda, Eigen::MatrixXd::Zero(dim, dim), Eigen::MatrixXd::Zero(dim, dim)};
  for (std::size_t i = 0; i < dim; ++i) {
    const std::span<const double> fi(grad.row(i).data(), grad.cols());
    for (std::size_t j = 0; j < dim; ++j) {
      const std::span<const double> fj(grad.row(j).data(), grad.cols());
      t.values(i, j) = canonical_bracket(fi, fj);
      t.scale(i, j) = canonical_bracket_scale(fi, fj);
    }
  }
  return t;
}

enum class GradientMode { Analytic, FiniteDifference };

inline BracketTable numerical_bracket_table(const CurveState& c, double lambda,
                                            GradientMode mode = GradientMode::Analytic, double h = 1e-6) {
  return bracket_table(mode == GradientMode::Analytic ? fm_gradients(c) : fm_gradients_fd(c, h), lambda);
}

// ---------------------------------------------------------------------------
// Closed forms.

namespace detail {

inline void require_bracket_size(std::size_t n, const char* where) {
  if (n <= 3) {
    throw UnsupportedSize(std::string(where) +
                          ": the closed-form bracket relations require N > 3 (got N = " +
                          std::to_string(n) + ")");
  }
}

}  // namespace detail

/// Closed-form value of {p, q} at the state s (its λ included).
inline double closed_form_bracket(const FMState& s, const VarLabel& p, const VarLabel& q) {
  const std::size_t n = s.size();
  detail::require_bracket_size(n, "closed_form_bracket");
  const double lam = s.lambda;
  const auto i = static_cast<long long>(wrap(p.index, n));
  const auto j = static_cast<long long>(wrap(q.index, n));
  const std::size_t d = wrap(j - i, n);
  const std::size_t back = n - 1;
  const auto a = [&](long long k) { return s.a_at(k); };
  const auto b = [&](long long k) { return s.b_at(k); };

  // {a_k, a_{k+1}} and {b_k, b_{k+1}}
  const auto aa = [&](long long k) { return -2.0 * a(k) * a(k + 1) * (b(k + 1) + lam); };
  const auto bb = [&](long long k) { return -a(k) * (b(k) + b(k + 1)) - 2.0 * a(k) * lam; };
  // {b_k, a_{k+offset}} for offset in {-2, -1, 0, 1}
  const auto ba = [&](long long k, std::size_t dd) {
    if (dd == n - 2) return a(k - 2) * a(k - 1);
    if (dd == n - 1) {
      return a(k - 1) * (b(k) * b(k) + a(k - 1)) + 2.0 * b(k) * a(k - 1) * lam + a(k - 1) * lam * lam;
    }
    if (dd == 0) return -a(k) * (b(k) * b(k) + a(k)) - 2.0 * b(k) * a(k) * lam - a(k) * lam * lam;
    if (dd == 1) return -a(k) * a(k + 1);
    return 0.0;
  };

  using K = VarLabel::Kind;
  if (p.kind == K::A && q.kind == K::A) {
    if (d == 1) return aa(i);
    if (d == back) return -aa(j);
    return 0.0;
  }
  if (p.kind == K::B && q.kind == K::B) {
    if (d == 1) return bb(i);
    if (d == back) return -bb(j);
    return 0.0;
  }
  if (p.kind == K::B) return ba(i, d);
  return -ba(j, wrap(i - j, n));
}

inline BracketTable closed_form_table(const FMState& s) {
  const std::size_t n = s.size();
  detail::require_bracket_size(n, "closed_form_table");
  BracketTable t{n, s.lambda, Eigen::MatrixXd::Zero(2 * n, 2 * n), Eigen::MatrixXd::Zero(2 * n, 2 * n)};
  for (std::size_t i = 0; i < 2 * n; ++i)
    for (std::size_t j = 0; j < 2 * n; ++j)
      t.values(i, j) = closed_form_bracket(s, VarLabel::from_flat(i, n), VarLabel::from_flat(j, n));
  return t;
}

/// The λ², λ¹ and λ⁰ coefficient tables of the closed-form bracket, as
/// structure functions in (a, b).
struct GradedStructure {
  PoissonStructure p1;  ///< λ² coefficient (linear)
  PoissonStructure p2;  ///< λ¹ coefficient (quadratic)
  PoissonStructure p3;  ///< λ⁰ coefficient (cubic)

  /// The full bracket at spectral parameter λ: P3 + λ P2 + λ² P1.
  PoissonStructure full(double lambda) const { return p3 + lambda * p2 + (lambda * lambda) * p1; }

  /// The pencil P1 + t P2 + t² P3.
  PoissonStructure pencil(double t) const { return p1 + t * p2 + (t * t) * p3; }
};

inline GradedStructure closed_form_structure(std::size_t n) {
  detail::require_bracket_size(n, "closed_form_structure");
  GradedStructure s{PoissonStructure(2 * n), PoissonStructure(2 * n), PoissonStructure(2 * n)};
  const auto A = [&](long long k) { return wrap(k, n); };
  const auto B = [&](long long k) { return n + wrap(k, n); };
  const auto T = [](double c, Polynomial::Monomial m) { return Polynomial::term(c, std::move(m)); };

  for (std::size_t i = 0; i < n; ++i) {
    const auto k = static_cast<long long>(i);
    // {a_k, a_{k+1}} = −2 a_k a_{k+1} b_{k+1} − 2 a_k a_{k+1} λ
    s.p3.add_antisymmetric(A(k), A(k + 1), T(-2.0, {A(k), A(k + 1), B(k + 1)}));
    s.p2.add_antisymmetric(A(k), A(k + 1), T(-2.0, {A(k), A(k + 1)}));
    // {b_k, b_{k+1}} = −a_k (b_k + b_{k+1}) − 2 a_k λ
    s.p3.add_antisymmetric(B(k), B(k + 1), T(-1.0, {A(k), B(k)}) + T(-1.0, {A(k), B(k + 1)}));
    s.p2.add_antisymmetric(B(k), B(k + 1), T(-2.0, {A(k)}));
    // {b_k, a_{k-2}} = a_{k-2} a_{k-1}
    s.p3.add_antisymmetric(B(k), A(k - 2), T(1.0, {A(k - 2), A(k - 1)}));
    // {b_k, a_{k-1}} = a_{k-1}(b_k² + a_{k-1}) + 2 b_k a_{k-1} λ + a_{k-1} λ²
    s.p3.add_antisymmetric(B(k), A(k - 1), T(1.0, {A(k - 1), B(k), B(k)}) + T(1.0, {A(k - 1), A(k - 1)}));
    s.p2.add_antisymmetric(B(k), A(k - 1), T(2.0, {B(k), A(k - 1)}));
    s.p1.add_antisymmetric(B(k), A(k - 1), T(1.0, {A(k - 1)}));
    // {b_k, a_k} = −a_k(b_k² + a_k) − 2 b_k a_k λ − a_k λ²
    s.p3.add_antisymmetric(B(k), A(k), T(-1.0, {A(k), B(k), B(k)}) + T(-1.0, {A(k), A(k)}));
    s.p2.add_antisymmetric(B(k), A(k), T(-2.0, {B(k), A(k)}));
    s.p1.add_antisymmetric(B(k), A(k), T(-1.0, {A(k)}));
    // {b_k, a_{k+1}} = −a_k a_{k+1}
    s.p3.add_antisymmetric(B(k), A(k + 1), T(-1.0, {A(k), A(k + 1)}));
  }
  return s;
}

// ---------------------------------------------------------------------------
// Verification.

struct Theorem2Report {
  double lambda = 0.0;
  double max_abs_deviation = 0.0;
  double max_rel_deviation = 0.0;
  VarLabel worst_p;
  VarLabel worst_q;
  double tol = 0.0;
  bool pass = false;
};

namespace detail {

// |x − y| relative to the larger of |y| and the rounding scale of x.
inline double relative_deviation(double x, double y, double scale) {
  const double diff = std::abs(x - y);
  const double denom = std::max(std::abs(y), scale);
  return denom > 0.0 ? diff / denom : diff;
}

}  // namespace detail

/// Canonical bracket of every pair among {a_i, b_i} against the closed forms.
inline Theorem2Report verify_theorem2(const CurveState& c, double lambda, double tol,
                                      GradientMode mode = GradientMode::Analytic, double h = 1e-6) {
  const std::size_t n = c.size();
  detail::require_bracket_size(n, "verify_theorem2");
  const auto numeric = numerical_bracket_table(c, lambda, mode, h);
  const auto closed = closed_form_table(fm_map(c, lambda));

  Theorem2Report r;
  r.lambda = lambda;
  r.tol = tol;
  r.worst_p = VarLabel::A(0);
  r.worst_q = VarLabel::A(0);
  for (std::size_t i = 0; i < 2 * n; ++i) {
    for (std::size_t j = 0; j < 2 * n; ++j) {
      const double x = numeric.values(i, j), y = closed.values(i, j);
      r.max_abs_deviation = std::max(r.max_abs_deviation, std::abs(x - y));
      const double rel = detail::relative_deviation(x, y, numeric.scale(i, j));
      if (rel > r.max_rel_deviation) {
        r.max_rel_deviation = rel;
        r.worst_p = VarLabel::from_flat(i, n);
        r.worst_q = VarLabel::from_flat(j, n);
      }
    }
  }
  r.pass = r.max_rel_deviation < tol;
  return r;
}

namespace detail {

// Canonical brackets at a curve whose invariants are (g, u + μ g_{k-1} g_k).
//
// Such a curve is in general only quasi-periodic, but every a_k and b_k is a
// function of at most three consecutive points, so each bracket is evaluated
// on an open window of seven points around the row's site, rebuilt from the
// shifted invariants by the three-term recursion. Brackets of variables whose
// supports wrap around the period pick up one contribution per overlapping
// placement.
inline BracketTable shifted_window_table(const CurveState& c, const DetInvariants& inv, double mu) {
  const std::size_t n = c.size();
  std::vector<double> us(n);
  for (std::size_t k = 0; k < n; ++k) us[k] = inv.u[k] + mu * inv.g_at(static_cast<long long>(k) - 1) * inv.g[k];

  constexpr long long kHalf = 3;
  constexpr std::size_t kSites = 2 * kHalf + 1;
  BracketTable t{n, mu, Eigen::MatrixXd::Zero(2 * n, 2 * n), Eigen::MatrixXd::Zero(2 * n, 2 * n)};

  for (std::size_t site = 0; site < n; ++site) {
    const auto i = static_cast<long long>(site);
    std::array<Point, kSites> w;
    w[0] = c.point(i - kHalf);
    w[1] = c.point(i - kHalf + 1);
    for (std::size_t s = 1; s + 1 < kSites; ++s) {
      const long long m = i - kHalf + static_cast<long long>(s);
      w[s + 1] = (us[wrap(m, n)] * w[s] - inv.g_at(m) * w[s - 1]) / inv.g_at(m - 1);
    }
    auto pt = [&](long long k) { return w[static_cast<std::size_t>(k - (i - kHalf))]; };
    auto slot = [&](long long k) { return static_cast<std::size_t>(k - (i - kHalf)); };

    auto local_gradient = [&](VarLabel::Kind kind, long long k) {
      Eigen::Matrix<double, 1, 2 * kSites> row = Eigen::Matrix<double, 1, 2 * kSites>::Zero();
      if (kind == VarLabel::Kind::A) {
        add_a_gradient(row, kSites, pt, slot, k);
      } else {
        add_b_gradient(row, kSites, pt, slot, k);
      }
      return row;
    };

    for (auto pk : {VarLabel::Kind::A, VarLabel::Kind::B}) {
      const auto fp = local_gradient(pk, i);
      const std::size_t row = VarLabel{pk, i}.flat(n);
      for (auto qk : {VarLabel::Kind::A, VarLabel::Kind::B}) {
        for (long long j = i - 2; j <= i + 2; ++j) {
          const auto fq = local_gradient(qk, j);
          const std::size_t col = VarLabel{qk, j}.flat(n);
          const std::span<const double> sp(fp.data(), fp.size()), sq(fq.data(), fq.size());
          t.values(row, col) += canonical_bracket(sp, sq);
          t.scale(row, col) += canonical_bracket_scale(sp, sq);
        }
      }
    }
  }
  return t;
}

}  // namespace detail

/// Result of splitting the bracket into powers of λ.
struct GradedBrackets {
  /// Fitted coefficient tables (λ², λ¹, λ⁰) from numerical brackets.
  Eigen::MatrixXd p1, p2, p3;
  /// The same tables from the closed-form structure functions.
  Eigen::MatrixXd closed_p1, closed_p2, closed_p3;
  /// The λ⁰ part of b (held fixed as the state variable) together with a.
  FMState state;
  double fit_deviation = 0.0;
  double reconstruction_deviation = 0.0;
  double tol = 0.0;
  bool pass = false;
};

inline constexpr std::array<double, 3> kGradingSamples{0.0, 1.0, -1.0};
inline constexpr double kGradingCheckLambda = 2.0;

/// Grades the bracket by powers of λ at fixed (a, b|_{λ=0}).
///
/// The bracket at λ on that state is the canonical bracket on a curve whose
/// u_k are shifted by λ g_{k-1} g_k; it is sampled at λ ∈ {0, 1, −1}, fitted
/// with the interpolating quadratic, checked against a fourth sample at λ = 2,
/// and compared with the closed-form coefficient tables.
inline GradedBrackets lambda_grade(const CurveState& c, double tol) {
  const std::size_t n = c.size();
  detail::require_bracket_size(n, "lambda_grade");
  const auto inv = compute_invariants(c);
  inv.require_all_g("lambda_grade");

  std::array<BracketTable, 3> sample;
  for (std::size_t s = 0; s < kGradingSamples.size(); ++s) {
    sample[s] = detail::shifted_window_table(c, inv, kGradingSamples[s]);
  }
  const auto check = detail::shifted_window_table(c, inv, kGradingCheckLambda);

  GradedBrackets out;
  out.tol = tol;
  out.state = fm_map(c, 0.0);
  const Eigen::MatrixXd& f0 = sample[0].values;
  const Eigen::MatrixXd& fp = sample[1].values;
  const Eigen::MatrixXd& fm = sample[2].values;
  out.p3 = f0;
  out.p2 = 0.5 * (fp - fm);
  out.p1 = 0.5 * (fp + fm) - f0;

  const auto structure = closed_form_structure(n);
  const auto z = out.state.coordinates();
  out.closed_p1 = structure.p1.evaluate(z);
  out.closed_p2 = structure.p2.evaluate(z);
  out.closed_p3 = structure.p3.evaluate(z);

  const double l = kGradingCheckLambda;
  for (std::size_t i = 0; i < 2 * n; ++i) {
    for (std::size_t j = 0; j < 2 * n; ++j) {
      double scale = check.scale(i, j);
      for (const auto& smp : sample) scale = std::max(scale, smp.scale(i, j));
      const auto dev = [&](double x, double y) { return detail::relative_deviation(x, y, scale); };
      out.fit_deviation = std::max({out.fit_deviation, dev(out.p1(i, j), out.closed_p1(i, j)),
                                    dev(out.p2(i, j), out.closed_p2(i, j)),
                                    dev(out.p3(i, j), out.closed_p3(i, j))});
      const double rebuilt = out.p3(i, j) + l * out.p2(i, j) + l * l * out.p1(i, j);
      out.reconstruction_deviation =
          std::max(out.reconstruction_deviation, dev(rebuilt, check.values(i, j)));
    }
  }
  out.pass = out.fit_deviation < tol && out.reconstruction_deviation < tol;
  return out;
}

}  // namespace toda_curves
