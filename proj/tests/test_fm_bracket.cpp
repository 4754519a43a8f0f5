#include "toda_curves/cli_verify.hpp"
#include "toda_curves/fm_bracket.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace toda_curves;

namespace {

const double kSqrt3 = std::sqrt(3.0);

// Hand-written gradient of g_k = x_k y_{k+1} − y_k x_{k+1}.
std::vector<double> g_gradient(const CurveState& c, long long k) {
  const std::size_t n = c.size();
  std::vector<double> grad(2 * n, 0.0);
  const std::size_t i = wrap(k, n), j = wrap(k + 1, n);
  grad[i] += c.y(k + 1);
  grad[n + i] += -c.x(k + 1);
  grad[j] += -c.y(k);
  grad[n + j] += c.x(k);
  return grad;
}

std::vector<double> unit(std::size_t dim, std::size_t i) {
  std::vector<double> e(dim, 0.0);
  e[i] = 1.0;
  return e;
}

}  // namespace

TEST(FmMap, HexagonValues) {
  const auto s0 = fm_map(regular_polygon(6), 0.0);
  const auto s1 = fm_map(regular_polygon(6), 1.0);
  for (std::size_t k = 0; k < 6; ++k) {
    EXPECT_NEAR(s0.a[k], 4.0 / 3.0, 1e-14);
    EXPECT_NEAR(s0.b[k], 2.0 / kSqrt3, 1e-14);
    EXPECT_NEAR(s1.a[k], 4.0 / 3.0, 1e-14);
    EXPECT_NEAR(s1.b[k], 2.0 / kSqrt3 - 1.0, 1e-14);
  }
}

TEST(FmMap, DefiningIdentities) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto c = generate_curve(5 + seed % 6, seed);
    const double lam = -1.5 + 0.1 * static_cast<double>(seed);
    const auto s = fm_map(c, lam);
    const auto inv = compute_invariants(c);
    for (long long k = 0; k < static_cast<long long>(c.size()); ++k) {
      EXPECT_NEAR(s.a_at(k) * inv.g_at(k) * inv.g_at(k), 1.0, 1e-12);
      const double lhs = (s.b_at(k) + lam) * inv.g_at(k - 1) * inv.g_at(k);
      EXPECT_NEAR(lhs, inv.u_at(k), 1e-12 * std::max(1.0, std::abs(inv.u_at(k))));
      EXPECT_GT(s.a_at(k), 0.0);
    }
  }
}

TEST(FmMap, DegenerateCurveThrows) {
  EXPECT_THROW(fm_map(CurveState({1, 2, 0, -1}, {1, 2, 1, 0}), 0.0), DegenerateInvariant);
}

TEST(FmGradients, DeterminantGradientIsBilinear) {
  const auto c = generate_curve(5, 2);
  Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(10);
  auto pt = [&](long long k) { return c.point(k); };
  auto slot = [&](long long k) { return wrap(k, 5); };
  detail::add_det_gradient(row, 5, pt, slot, 2, 3, 1.0);
  EXPECT_EQ(row(2), c.y(3));   // ∂g_2/∂x_2
  EXPECT_EQ(row(7), -c.x(3));  // ∂g_2/∂y_2
  EXPECT_EQ(row(3), -c.y(2));
  EXPECT_EQ(row(8), c.x(2));
}

TEST(FmGradients, Sparsity) {
  const auto c = generate_curve(8, 4);
  const auto grad = fm_gradients(c);
  for (long long k = 0; k < 8; ++k) {
    for (long long j = 0; j < 8; ++j) {
      const bool in_a = wrap(j - k, 8) <= 1;
      const bool in_b = wrap(j - k + 1, 8) <= 2;
      for (std::size_t off : {std::size_t{0}, std::size_t{8}}) {
        if (!in_a) EXPECT_EQ(grad(k, off + j), 0.0);
        if (!in_b) EXPECT_EQ(grad(8 + k, off + j), 0.0);
      }
    }
  }
}

TEST(FmGradients, MatchCentralDifferencesOnModerateCurves) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    EXPECT_LT(gradient_oracle_error(jittered_polygon(4 + seed % 9, seed)), 1e-6) << seed;
  }
}

TEST(FmGradients, CentralDifferenceErrorIsSecondOrder) {
  // Near-collinear neighbours make the truncation term large, but it must
  // still shrink like h^2 towards the analytic gradient.
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto c = generate_curve(4 + seed % 9, seed);
    const double e4 = gradient_oracle_error(c, 1e-4), e5 = gradient_oracle_error(c, 1e-5);
    EXPECT_GT(e4 / e5, 80.0) << seed;
    EXPECT_LT(e4 / e5, 120.0) << seed;
  }
}

TEST(CanonicalBracket, CoordinateRelations) {
  const std::size_t dim = 8;  // N = 4
  EXPECT_EQ(canonical_bracket(unit(dim, 0), unit(dim, 4)), 0.5);   // {x_0, y_0}
  EXPECT_EQ(canonical_bracket(unit(dim, 4), unit(dim, 0)), -0.5);  // {y_0, x_0}
  EXPECT_EQ(canonical_bracket(unit(dim, 0), unit(dim, 5)), 0.0);   // {x_0, y_1}
  EXPECT_EQ(canonical_bracket(unit(dim, 0), unit(dim, 1)), 0.0);   // {x_0, x_1}
}

TEST(CanonicalBracket, NeighbouringDeterminants) {
  // Only site 1 is shared: {g_0, g_1} = −u_1 / 2.
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto c = generate_curve(6, seed);
    const auto u = compute_invariants(c).u[1];
    EXPECT_NEAR(canonical_bracket(g_gradient(c, 0), g_gradient(c, 1)), -u / 2, 1e-15);
  }
}

TEST(ClosedForm, HexagonValuesAndZeros) {
  const auto s = fm_map(regular_polygon(6), 0.0);
  for (long long k = 0; k < 6; ++k) {
    EXPECT_NEAR(closed_form_bracket(s, VarLabel::B(k), VarLabel::A(k + 1)), -16.0 / 9.0, 1e-14);
    EXPECT_EQ(closed_form_bracket(s, VarLabel::A(k), VarLabel::A(k + 3)), 0.0);
  }
}

TEST(ClosedForm, AntisymmetricImage) {
  FMState s = random_fm_state(7, 3);
  s.lambda = 0.4;
  for (long long k = 0; k < 7; ++k) {
    const double ak = s.a_at(k), ak1 = s.a_at(k + 1), bk1 = s.b_at(k + 1);
    EXPECT_DOUBLE_EQ(closed_form_bracket(s, VarLabel::A(k + 1), VarLabel::A(k)),
                     2 * ak * ak1 * bk1 + 2 * ak * ak1 * s.lambda);
  }
  const auto t = closed_form_table(s);
  EXPECT_EQ((t.values + t.values.transpose()).cwiseAbs().maxCoeff(), 0.0);
}

TEST(ClosedForm, RefusesSmallN) {
  for (std::size_t n : {1, 2, 3}) {
    FMState s = random_fm_state(n, 1);
    EXPECT_THROW(closed_form_bracket(s, VarLabel::A(0), VarLabel::B(0)), UnsupportedSize);
  }
  EXPECT_THROW(verify_theorem2(generate_curve(3, 0), 0.0, 1e-9), UnsupportedSize);
}

TEST(ClosedForm, StructureTablesAgreeWithDirectFormulas) {
  for (std::size_t n : {4, 5, 9}) {
    const auto st = closed_form_structure(n);
    for (double lam : {0.0, 1.0, -2.5}) {
      FMState s = random_fm_state(n, n);
      s.lambda = lam;
      const auto direct = closed_form_table(s).values;
      const auto poly = st.full(lam).evaluate(s.coordinates());
      EXPECT_LT((direct - poly).cwiseAbs().maxCoeff(), 1e-13) << n << " " << lam;
    }
  }
}

TEST(ClosedForm, GradeDegrees) {
  const auto st = closed_form_structure(6);
  for (std::size_t i = 0; i < 12; ++i) {
    for (std::size_t j = 0; j < 12; ++j) {
      EXPECT_LE(st.p1.at(i, j).degree(), 1);
      EXPECT_LE(st.p2.at(i, j).degree(), 2);
      EXPECT_LE(st.p3.at(i, j).degree(), 3);
    }
  }
}

TEST(Theorem2, RandomCurvesAtSeveralLambdas) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto c = generate_curve(6, seed);
    for (double lam : {0.0, 1.0, -1.0}) {
      const auto r = verify_theorem2(c, lam, 1e-9);
      EXPECT_TRUE(r.pass) << "seed " << seed << " lambda " << lam << " worst " << to_string(r.worst_p) << ","
                          << to_string(r.worst_q) << " rel " << r.max_rel_deviation;
    }
  }
}

TEST(Theorem2, SmallestSupportedSize) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    EXPECT_TRUE(verify_theorem2(generate_curve(4, seed), 0.3, 1e-9).pass) << seed;
    EXPECT_TRUE(verify_theorem2(generate_curve(5, seed), -0.3, 1e-9).pass) << seed;
  }
}

TEST(Theorem2, FiniteDifferenceGradients) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto c = jittered_polygon(6, seed);
    EXPECT_LT(verify_theorem2(c, 0.0, 1e-5, GradientMode::FiniteDifference).max_rel_deviation, 1e-5);
  }
}

TEST(Theorem2, NumericalTableIsAntisymmetricAndLocal) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const std::size_t n = 5 + seed % 5;
    const auto c = generate_curve(n, seed);
    const auto t = numerical_bracket_table(c, 0.0);
    EXPECT_LE((t.values + t.values.transpose()).cwiseAbs().maxCoeff(), 1e-12 * t.scale.maxCoeff());
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const auto d = wrap(static_cast<long long>(j) - static_cast<long long>(i), n);
        const auto aa = t.values(i, j), bb = t.values(n + i, n + j), ba = t.values(n + i, j);
        if (d != 1 && d != n - 1) {
          EXPECT_LE(std::abs(aa), 1e-10 * std::max(1.0, t.scale(i, j)));
          EXPECT_LE(std::abs(bb), 1e-10 * std::max(1.0, t.scale(n + i, n + j)));
        }
        if (d != n - 2 && d != n - 1 && d != 0 && d != 1) {
          EXPECT_LE(std::abs(ba), 1e-10 * std::max(1.0, t.scale(n + i, j)));
        }
      }
    }
  }
}

TEST(Theorem2, TranslationCovariance) {
  const auto c = generate_curve(7, 21);
  const auto t = numerical_bracket_table(c, 0.0).values;
  const auto ts = numerical_bracket_table(shifted(c, 1), 0.0).values;
  for (std::size_t i = 0; i < 14; ++i) {
    for (std::size_t j = 0; j < 14; ++j) {
      const auto p = VarLabel::from_flat(i, 7), q = VarLabel::from_flat(j, 7);
      const VarLabel p1{p.kind, p.index + 1}, q1{q.kind, q.index + 1};
      EXPECT_NEAR(ts(i, j), t(p1.flat(7), q1.flat(7)), 1e-12 * std::max(1.0, std::abs(ts(i, j))));
    }
  }
}

TEST(LambdaGrade, HexagonLinearTable) {
  const auto g = lambda_grade(regular_polygon(6), 1e-9);
  EXPECT_TRUE(g.pass) << g.fit_deviation << " " << g.reconstruction_deviation;
  for (std::size_t i = 0; i < 12; ++i) {
    for (std::size_t j = 0; j < 12; ++j) {
      double expected = 0.0;
      if (i == VarLabel::B(1).flat(6) && j == VarLabel::A(0).flat(6)) expected = 4.0 / 3.0;
      if (i == VarLabel::A(0).flat(6) && j == VarLabel::B(1).flat(6)) expected = -4.0 / 3.0;
      if (i == VarLabel::B(1).flat(6) && j == VarLabel::A(1).flat(6)) expected = -4.0 / 3.0;
      if (i == VarLabel::A(1).flat(6) && j == VarLabel::B(1).flat(6)) expected = 4.0 / 3.0;
      const bool touches_b1 = i == VarLabel::B(1).flat(6) || j == VarLabel::B(1).flat(6);
      if (touches_b1) EXPECT_NEAR(g.p1(i, j), expected, 1e-12) << i << "," << j;
    }
  }
}

TEST(LambdaGrade, RandomCurvesFitAndReconstruct) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto g = lambda_grade(generate_curve(4 + seed % 6, seed), 1e-9);
    EXPECT_LT(g.fit_deviation, 1e-9) << seed;
    EXPECT_LT(g.reconstruction_deviation, 1e-9) << seed;
  }
}

TEST(LambdaGrade, SecondNeighbourRelationHasNoLambdaTerms) {
  const auto c = generate_curve(7, 8);
  const auto g = lambda_grade(c, 1e-9);
  for (long long k = 0; k < 7; ++k) {
    const auto i = VarLabel::B(k).flat(7), j = VarLabel::A(k - 2).flat(7);
    const double scale = std::max(1.0, std::abs(g.p3(i, j)));
    EXPECT_LT(std::abs(g.p1(i, j)) / scale, 1e-9);
    EXPECT_LT(std::abs(g.p2(i, j)) / scale, 1e-9);
    EXPECT_GT(std::abs(g.p3(i, j)), 0.0);
  }
}

TEST(Jacobi, GradedTablesAndPencils) {
  for (std::size_t n : {4, 5, 8}) {
    const auto st = closed_form_structure(n);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto z = random_fm_state(n, seed).coordinates();
      EXPECT_LT(jacobi_residual(st.p1, z), 1e-10);
      EXPECT_LT(jacobi_residual(st.p2, z), 1e-9);
      EXPECT_LT(jacobi_residual(st.p3, z), 1e-9);
      EXPECT_LT(jacobi_residual(st.pencil(0.5), z), 1e-9);
      EXPECT_LT(jacobi_residual(st.pencil(2.0), z), 1e-9);
      EXPECT_LT(jacobi_residual(st.full(0.8), z), 1e-9);
    }
  }
}

TEST(Jacobi, DetectsNonPoissonStructure) {
  // {z0, z1} = z0 z2, {z0, z2} = −1: the cyclic sum on (0, 1, 2) is z2.
  PoissonStructure p(3);
  p.add_antisymmetric(0, 1, Polynomial::term(1.0, {0, 2}));
  p.add_antisymmetric(0, 2, Polynomial::constant(-1.0));
  const std::vector<double> z{0.3, -0.2, 1.7};
  EXPECT_NEAR(jacobi_residual(p, z), 1.7, 1e-15);
  EXPECT_NEAR(jacobi_residual(p, z, 200, 5), 1.7, 1e-15);
}

TEST(Polynomial, DerivativeAndGradientAgree) {
  const auto p = Polynomial::term(2.0, {0, 0, 1}) + Polynomial::term(-3.0, {1, 2}) + Polynomial::constant(4.0);
  const std::vector<double> z{1.5, -2.0, 0.5};
  std::vector<double> grad(3, 0.0);
  p.add_gradient(z, grad);
  for (std::size_t v = 0; v < 3; ++v) EXPECT_DOUBLE_EQ(grad[v], p.derivative(v).evaluate(z));
  EXPECT_DOUBLE_EQ(grad[0], 2.0 * 2.0 * 1.5 * -2.0);
  EXPECT_EQ(p.degree(), 3);
  EXPECT_TRUE((p + -p).is_zero());
}
