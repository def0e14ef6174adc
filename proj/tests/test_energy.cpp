#include "axibern/energy.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace axibern;

namespace {

GridSpec unit(int n) { return GridSpec::rectangle(0, 1, 0, 1, 1.0 / n); }

RegularizationParams sharp(double m = 0.0, double d0 = 0.0, PhaseMeasure pm = PhaseMeasure::nodal) {
  RegularizationParams r;
  r.m = m;
  r.delta0 = d0;
  r.measure = pm;
  return r;
}

}  // namespace

TEST(Functional, ConstantMinusOne) {
  PhaseParams p{1.0, 1.0};
  for (auto pm : {PhaseMeasure::nodal, PhaseMeasure::subcell})
    EXPECT_NEAR(eval_functional(ScalarField(unit(32), -1.0), p, sharp(0, 0, pm)), 0.5, 1e-12);
}

TEST(Functional, QuadraticProfile) {
  PhaseParams p{2.0, 1.0};
  auto u = ScalarField::from_function(unit(32), [](double, double x2) { return x2 * x2; });
  for (auto pm : {PhaseMeasure::nodal, PhaseMeasure::subcell})
    EXPECT_NEAR(eval_functional(u, p, sharp(0, 0, pm)), 4.0, 1e-12);
}

TEST(Functional, ZeroField) {
  PhaseParams p{3.0, 2.0};
  EXPECT_EQ(eval_functional(ScalarField(unit(16), 0.0), p, sharp()), 0.0);
}

TEST(Functional, AxisGuard) {
  PhaseParams p{1.0, 1.0};
  auto u = ScalarField::from_function(unit(8), [](double x1, double) { return x1; });
  EXPECT_THROW(eval_functional(u, p, sharp(0.0)), DegenerateAxisError);
  EXPECT_NO_THROW(eval_functional(u, p, sharp(1e-3)));
}

TEST(Functional, RejectsOrderViolation) {
  PhaseParams p{1.0, 2.0};
  EXPECT_THROW(eval_functional(ScalarField(unit(8), 0.0), p, sharp()), PreconditionError);
}

TEST(Functional, ScalingSplitsIntoDirichletAndPhase) {
  PhaseParams p{2.5, 1.5};
  auto u = ScalarField::from_function(unit(24), [](double x1, double x2) {
    return std::sin(4 * x1) * x2 - 0.3 + x2 * x2;
  });
  for (auto pm : {PhaseMeasure::nodal, PhaseMeasure::subcell}) {
    const auto reg = sharp(0.01, 0.0, pm);
    EnergyModel model(u.grid(), p, 0.01, 0.0, pm);
    const EnergyValue e = model.evaluate(u.values(), 0.0, nullptr);
    for (double c : {0.5, 2.0, 7.0}) {
      ScalarField cu = u;
      for (auto& v : cu.values()) v *= c;
      EXPECT_NEAR(eval_functional(cu, p, reg) - c * c * e.dirichlet, e.phase, 1e-11 * (1 + c * c * e.dirichlet));
    }
  }
}

TEST(Regularized, SaturatedMinusOne) {
  PhaseParams p{1.0, 1.0};
  RegularizationParams r = sharp(0.0, 0.0);
  r.eps = 1e-3;
  for (auto pm : {PhaseMeasure::nodal, PhaseMeasure::subcell}) {
    r.measure = pm;
    EXPECT_NEAR(eval_regularized(ScalarField(unit(16), -1.0), p, r).value, 0.5, 1e-9);
  }
}

TEST(Regularized, GradientAtConstantHalf) {
  PhaseParams p{2.0, 1.0};
  RegularizationParams r = sharp(0.05, 0.1);
  r.eps = 1.0;
  const ScalarField u(unit(8), 0.5);
  for (auto pm : {PhaseMeasure::nodal, PhaseMeasure::subcell}) {
    r.measure = pm;
    auto rv = eval_regularized(u, p, r);
    for (std::size_t k : {std::size_t{0}, std::size_t{10}, std::size_t{40}, u.grid().size() - 1}) {
      const double dh = 1e-6;
      ScalarField a = u, b = u;
      a[k] += dh;
      b[k] -= dh;
      const double fd = (eval_regularized(a, p, r).value - eval_regularized(b, p, r).value) / (2 * dh);
      EXPECT_NEAR(rv.gradient[k], fd, 1e-6 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST(Regularized, GradientMatchesFiniteDifferencesOnRandomFields) {
  PhaseParams p{3.0, 2.0};
  std::mt19937_64 rng(20240611);
  std::uniform_real_distribution<double> U(-0.3, 0.3);
  const GridSpec g = unit(10);
  for (auto pm : {PhaseMeasure::nodal, PhaseMeasure::subcell}) {
    RegularizationParams r = sharp(0.01, 0.01, pm);
    r.eps = 0.2;
    ScalarField u(g);
    for (auto& v : u.values()) v = U(rng);
    auto rv = eval_regularized(u, p, r);
    int checked = 0;
    for (std::size_t k = 0; k < g.size(); k += 7) {
      const double dh = 1e-7;
      ScalarField a = u, b = u;
      a[k] += dh;
      b[k] -= dh;
      const double fd = (eval_regularized(a, p, r).value - eval_regularized(b, p, r).value) / (2 * dh);
      EXPECT_NEAR(rv.gradient[k], fd, 1e-6 * std::max(1.0, std::abs(fd))) << "node " << k;
      ++checked;
    }
    EXPECT_GT(checked, 10);
  }
}

TEST(Regularized, SharpLimitOnSeparatedFields) {
  PhaseParams p{2.0, 1.0};
  auto u = ScalarField::from_function(unit(32), [](double x1, double x2) {
    return (x2 > 0.5 ? 1.0 : -1.0) * (0.2 + x1 * x2);
  });
  RegularizationParams r = sharp(0.01, 0.0);
  const double J = eval_functional(u, p, r);
  double prev = 1e9;
  for (double eps : {1e-1, 1e-2, 1e-3}) {
    r.eps = eps;
    const double d = std::abs(eval_regularized(u, p, r).value - J);
    EXPECT_LE(d, prev);
    prev = d;
  }
  EXPECT_LT(prev, 1e-12);
}

TEST(SubcellFraction, MatchesBarycentricLattice) {
  const std::vector<std::array<double, 3>> cases = {{0.0, 1.0, 3.0}, {2.0, -1.0, 0.5}, {0.2, 0.2, 1.0}, {1.0, -1.0, -1.0}};
  const int n = 1200;
  for (const auto& v : cases)
    for (double c : {-0.5, 0.1, 0.35, 0.9, 1.5}) {
      // midpoint lattice over the reference triangle
      long above = 0, total = 0;
      for (int a = 0; a < n; ++a)
        for (int b = 0; a + b < n; ++b) {
          for (int up = 0; up < 2; ++up) {
            if (up && a + b + 1 >= n) continue;
            const double s = (a + (up ? 2.0 : 1.0) / 3.0) / n, t = (b + (up ? 2.0 : 1.0) / 3.0) / n;
            const double val = v[0] * (1 - s - t) + v[1] * s + v[2] * t;
            above += val > c;
            ++total;
          }
        }
      const double expect = static_cast<double>(above) / total;
      EXPECT_NEAR(detail::tri_fraction_above(v, c, nullptr), expect, 3e-3) << v[0] << "," << v[1] << "," << v[2] << " c=" << c;
    }
}

TEST(SubcellFraction, DerivativesMatchDifferences) {
  const std::array<double, 3> v{0.3, -0.4, 1.1};
  for (double c : {-0.2, 0.0, 0.5, 0.9}) {
    std::array<double, 3> dv{};
    detail::tri_fraction_above(v, c, &dv);
    for (int k = 0; k < 3; ++k) {
      auto a = v, b = v;
      a[k] += 1e-7;
      b[k] -= 1e-7;
      const double fd = (detail::tri_fraction_above(a, c, nullptr) - detail::tri_fraction_above(b, c, nullptr)) / 2e-7;
      EXPECT_NEAR(dv[k], fd, 1e-6);
    }
  }
}

TEST(PhaseVolumes, HalfPlane) {
  auto u = ScalarField::from_function(unit(64), [](double, double x2) { return x2 - 0.5; });
  auto pv = phase_volumes(u, 0.0);
  const double h = 1.0 / 64;
  EXPECT_NEAR(pv.plus, 0.5, 2 * h);
  EXPECT_NEAR(pv.minus, 0.5, 2 * h);
  EXPECT_NEAR(pv.zero, 0.0, 2 * h);
  auto z = phase_volumes(ScalarField(unit(16), 0.0), 0.0);
  EXPECT_NEAR(z.zero, 1.0, 1e-12);
  EXPECT_EQ(z.plus, 0.0);
}

TEST(PhaseVolumes, TwoPlaneHasNoZeroSet) {
  const double h = 1.0 / 64;
  auto u = ScalarField::from_function(unit(64), [](double x1, double x2) {
    const double t = 0.6 * (x1 - 0.5) + 0.8 * (x2 - 0.5);
    return t > 0 ? 0.5 * 2.0 * t : 0.5 * 1.5 * t;
  });
  EXPECT_LE(phase_volumes(u, 0.0).zero, 2 * h);
}

TEST(PhaseVolumes, MonotoneInThreshold) {
  auto u = ScalarField::from_function(unit(40), [](double x1, double x2) { return std::sin(6 * x1) * (x2 - 0.4); });
  PhaseVolumes prev = phase_volumes(u, 0.0);
  for (double d0 : {0.01, 0.05, 0.1, 0.3}) {
    PhaseVolumes pv = phase_volumes(u, d0);
    EXPECT_LE(pv.plus, prev.plus);
    EXPECT_LE(pv.minus, prev.minus);
    EXPECT_GE(pv.zero, prev.zero);
    EXPECT_NEAR(pv.plus + pv.minus + pv.zero, 1.0, 1e-12);
    prev = pv;
  }
}
