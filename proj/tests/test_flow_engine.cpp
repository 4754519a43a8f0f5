#include "toda_curves/cli_verify.hpp"
#include "toda_curves/flow_engine.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace toda_curves;

namespace {

const double kSqrt3 = std::sqrt(3.0);

FlowCoefficients constant_flow(std::size_t n, double a, double b) {
  return {std::vector<double>(n, a), std::vector<double>(n, b)};
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// Forward-difference rate of change of g and u along one Euler step.
struct FdRates {
  std::vector<double> g, u;
};

FdRates fd_rates(const CurveState& c, const FlowCoefficients& f, double dt) {
  const auto before = compute_invariants(c);
  const auto after = compute_invariants(euler_step(c, f, dt));
  FdRates r{std::vector<double>(c.size()), std::vector<double>(c.size())};
  for (std::size_t k = 0; k < c.size(); ++k) {
    r.g[k] = (after.g[k] - before.g[k]) / dt;
    r.u[k] = (after.u[k] - before.u[k]) / dt;
  }
  return r;
}

}  // namespace

TEST(CurveVelocity, TrivialFlows) {
  const auto c = generate_curve(5, 1);
  for (const auto& v : curve_velocity(c, FlowCoefficients::zero(5))) EXPECT_EQ(v, Point(0, 0));
  const auto v = curve_velocity(c, constant_flow(5, 1.0, 0.0));
  for (long long k = 0; k < 5; ++k) EXPECT_EQ(v[static_cast<std::size_t>(k)], c.point(k));
}

TEST(CurveVelocity, HexagonTangentFlow) {
  const auto hex = regular_polygon(6);
  const auto v = curve_velocity(hex, constant_flow(6, 0.0, 1.0));
  for (long long k = 0; k < 6; ++k) {
    const Point expected = (hex.point(k + 1) - hex.point(k - 1)) / (kSqrt3 / 2);
    EXPECT_LT((v[static_cast<std::size_t>(k)] - expected).cwiseAbs().maxCoeff(), 1e-14);
  }
}

TEST(CurveVelocity, DegenerateUOnlyMattersWhereBetaIsNonzero) {
  // γ_0 and γ_2 are parallel, so u_1 = 0.
  const CurveState c({1.0, 0.0, 2.0, -1.0}, {0.0, 1.0, 0.0, -1.0});
  ASSERT_EQ(compute_invariants(c).u[1], 0.0);
  EXPECT_NO_THROW(curve_velocity(c, constant_flow(4, 1.0, 0.0)));
  auto f = FlowCoefficients::zero(4);
  f.beta[1] = 1.0;
  EXPECT_THROW(curve_velocity(c, f), DegenerateInvariant);
}

TEST(VMatrix, PureScalingIsMultipleOfIdentity) {
  const auto inv = compute_invariants(generate_curve(6, 2));
  for (long long k = 0; k < 6; ++k) EXPECT_EQ(v_matrix(inv, constant_flow(6, 2.5, 0.0), k), 2.5 * Mat2::Identity());
}

TEST(VMatrix, HexagonEntrywise) {
  // g = u = √3/2 everywhere: V11 = 1/g, V12 = −2/u, V21 = 2/u, V22 = −1/g.
  const auto inv = compute_invariants(regular_polygon(6));
  const double g = kSqrt3 / 2;
  Mat2 expected;
  expected << 1 / g, -2 / g, 2 / g, -1 / g;
  for (long long k = 0; k < 6; ++k) EXPECT_LT(max_abs(v_matrix(inv, constant_flow(6, 0.0, 1.0), k) - expected), 1e-14);
}

TEST(VMatrix, FrameVelocityIsVTimesFrame) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto c = generate_curve(6, seed);
    const auto f = random_flow(6, seed + 100);
    const auto inv = compute_invariants(c);
    const auto v = curve_velocity(c, f);
    for (long long k = 0; k < 6; ++k) {
      Mat2 fdot;
      fdot << v[wrap(k, 6)].x(), v[wrap(k, 6)].y(), v[wrap(k - 1, 6)].x(), v[wrap(k - 1, 6)].y();
      const Mat2 vf = v_matrix(inv, f, k) * frame(c, k);
      EXPECT_LT(max_abs(fdot - vf) / std::max(1.0, max_abs(fdot)), 1e-10);
    }
  }
}

TEST(GDot, ClosedFormCases) {
  const auto inv = compute_invariants(generate_curve(7, 3));
  for (double v : g_dot(inv, constant_flow(7, 0.0, 0.37))) EXPECT_EQ(v, 0.0);
  const auto doubled = g_dot(inv, constant_flow(7, 1.0, 0.0));
  for (std::size_t k = 0; k < 7; ++k) EXPECT_EQ(doubled[k], 2.0 * inv.g[k]);
}

TEST(UDot, ClosedFormCases) {
  const auto inv = compute_invariants(generate_curve(7, 4));
  for (double v : u_dot(inv, FlowCoefficients::zero(7))) EXPECT_EQ(v, 0.0);
  const auto doubled = u_dot(inv, constant_flow(7, 1.0, 0.0));
  for (std::size_t k = 0; k < 7; ++k) EXPECT_EQ(doubled[k], 2.0 * inv.u[k]);
}

TEST(ChainRule, FiniteDifferencesConvergeToLemmaRates) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto c = generate_curve(4 + seed % 8, seed);
    const auto f = random_flow(c.size(), seed + 1000);
    const auto inv = compute_invariants(c);
    const auto gd = g_dot(inv, f);
    const auto ud = u_dot(inv, f);
    const auto coarse = fd_rates(c, f, 1e-4);
    const auto fine = fd_rates(c, f, 1e-5);
    const double eg1 = max_abs_diff(coarse.g, gd), eg2 = max_abs_diff(fine.g, gd);
    const double eu1 = max_abs_diff(coarse.u, ud), eu2 = max_abs_diff(fine.u, ud);
    // First-order: ten times smaller step, about ten times smaller error.
    EXPECT_GT(eg1 / eg2, 8.0) << seed;
    EXPECT_LT(eg1 / eg2, 12.0) << seed;
    EXPECT_GT(eu1 / eu2, 8.0) << seed;
    EXPECT_LT(eu1 / eu2, 12.0) << seed;
  }
}

TEST(Linearity, VelocityAndRatesSuperpose) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto c = generate_curve(6, seed);
    const auto inv = compute_invariants(c);
    const auto f1 = random_flow(6, seed + 1), f2 = random_flow(6, seed + 2);
    const double s = 0.7;
    auto combo = FlowCoefficients::zero(6);
    for (std::size_t k = 0; k < 6; ++k) {
      combo.alpha[k] = f1.alpha[k] + s * f2.alpha[k];
      combo.beta[k] = f1.beta[k] + s * f2.beta[k];
    }
    const auto v1 = curve_velocity(c, f1), v2 = curve_velocity(c, f2), vc = curve_velocity(c, combo);
    for (std::size_t k = 0; k < 6; ++k) {
      const Point expect = v1[k] + s * v2[k];
      EXPECT_LT((vc[k] - expect).cwiseAbs().maxCoeff() / std::max(1.0, expect.cwiseAbs().maxCoeff()), 1e-12);
    }
    for (auto rate : {&g_dot, &u_dot}) {
      const auto r1 = (*rate)(inv, f1), r2 = (*rate)(inv, f2), rc = (*rate)(inv, combo);
      for (std::size_t k = 0; k < 6; ++k) {
        const double expect = r1[k] + s * r2[k];
        EXPECT_LT(std::abs(rc[k] - expect) / std::max(1.0, std::abs(expect)), 1e-12);
      }
    }
  }
}

TEST(AlphaBetaFromV, DiagonalOnly) {
  const auto inv = compute_invariants(generate_curve(5, 9));
  const auto f = alpha_beta_from_v(inv, {std::vector<double>(5, 1.25), std::vector<double>(5, 0.0)});
  for (std::size_t k = 0; k < 5; ++k) {
    EXPECT_EQ(f.alpha[k], 1.25);
    EXPECT_EQ(std::abs(f.beta[k]), 0.0);
  }
}

TEST(AlphaBetaFromV, HexagonSubstitution) {
  const auto inv = compute_invariants(regular_polygon(6));
  const auto f = alpha_beta_from_v(inv, {std::vector<double>(6, 0.0), std::vector<double>(6, 1.0)});
  for (std::size_t k = 0; k < 6; ++k) {
    EXPECT_NEAR(f.alpha[k], 0.5, 1e-15);
    EXPECT_NEAR(f.beta[k], -kSqrt3 / 4, 1e-15);
  }
}

TEST(AlphaBetaFromV, RoundTripThroughVMatrix) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto c = generate_curve(4 + seed % 9, seed);
    const auto v = random_flow(c.size(), seed + 7);
    EXPECT_LT(alpha_beta_roundtrip_error(c, {v.alpha, v.beta}), 1e-12) << seed;
  }
}

TEST(AlphaBetaFromV, DegenerateSumThrows) {
  const auto inv = DetInvariants::from_sequences({1.0, -1.0, 2.0, 1.0}, {1.0, 1.0, 1.0, 1.0});
  EXPECT_THROW(alpha_beta_from_v(inv, {std::vector<double>(4, 0.0), std::vector<double>(4, 1.0)}), DegenerateSum);
}

TEST(ZeroCurvature, TrivialFlowIsExactlyZero) {
  const auto c = generate_curve(6, 11);
  EXPECT_EQ(zero_curvature_residual(c, FlowCoefficients::zero(6), 0.0), 0.0);
}

TEST(ZeroCurvature, AnalyticResidualOnRandomFlows) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto c = generate_curve(4 + seed % 9, seed);
    EXPECT_LT(zero_curvature_residual(c, random_flow(c.size(), seed + 5), 0.0), 1e-9) << seed;
  }
}

TEST(ZeroCurvature, FiniteDifferenceModeIsFirstOrder) {
  const auto c = jittered_polygon(6, 3);
  const auto f = random_flow(6, 3);
  const double r5 = zero_curvature_residual(c, f, 1e-5, LaxDotMode::FiniteDifference);
  const double r6 = zero_curvature_residual(c, f, 1e-6, LaxDotMode::FiniteDifference);
  EXPECT_LT(r6, 1e-4);
  EXPECT_NEAR(r5 / r6, 10.0, 1.0);
}
