#include "axibern/blowup.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace axibern;

namespace {

const PhaseParams P21{2.0, 1.0};

LocalField local_from(double w, int res, const std::function<double(Vec2)>& f) {
  LocalField u(w, res);
  for (int j = 0; j < u.n(); ++j)
    for (int i = 0; i < u.n(); ++i) u(i, j) = f(u.node(i, j));
  return u;
}

}  // namespace

TEST(Rescale, LinearMapIsInvariant) {
  const GridSpec g = GridSpec::rectangle(0, 1, 0, 1, 1.0 / 64);
  const Vec2 x0{0.5, 0.5}, grad{1.5, -0.7};
  const ScalarField u = ScalarField::from_function(g, [&](double a, double b) { return dot(grad, Vec2{a, b} - x0); });
  for (double r : {0.3, 0.1, 0.017}) {
    const LocalField ur = rescale(u, x0, r);
    for (int j = 0; j < ur.n(); ++j)
      for (int i = 0; i < ur.n(); ++i) EXPECT_NEAR(ur(i, j), dot(grad, ur.node(i, j)), 1e-12);
  }
}

TEST(Rescale, TwoPlaneOnItsInterfaceIsExact) {
  const GridSpec g = GridSpec::rectangle(0, 1, 0, 1, 1.0 / 64);
  const Vec2 x0{0.5, 0.5};
  const TwoPlane H = TwoPlane::make(P21, 0.5, 2.5, {0, 1});
  const ScalarField u = ScalarField::from_function(g, [&](double a, double b) { return H(Vec2{a, b} - x0); });
  for (double r : {0.25, 0.0625}) {
    const LocalField ur = rescale(u, x0, r);
    for (int j = 0; j < ur.n(); ++j)
      for (int i = 0; i < ur.n(); ++i) EXPECT_NEAR(ur(i, j), H(ur.node(i, j)), 1e-12);
  }
}

TEST(Rescale, ComposesWithinInterpolationTolerance) {
  const double h = 1.0 / 128;
  const GridSpec g = GridSpec::rectangle(0, 1, 0, 1, h);
  const ScalarField u = ScalarField::from_function(g, [](double a, double b) { return std::sin(3 * a) * b * b + a; });
  const Vec2 x0{0.45, 0.55};
  const double r = 0.2, s = 0.5;
  const LocalField direct = rescale(u, x0, r * s);
  const LocalField outer = rescale(u, x0, r, {16, 1.0});
  const LocalField nested = rescale(outer, {0, 0}, s);
  double err = 0.0;
  for (std::size_t k = 0; k < direct.values().size(); ++k)
    err = std::max(err, std::abs(direct.values()[k] - nested.values()[k]));
  EXPECT_LE(err, 2 * h / r);
}

TEST(Rescale, BoxLeavingGridThrows) {
  const ScalarField u(GridSpec::rectangle(0, 1, 0, 1, 1.0 / 32), 1.0);
  EXPECT_THROW(rescale(u, {0.1, 0.5}, 0.2), GeometryError);
}

TEST(Rescale, ShrinkRemovesTheBand) {
  const ScalarField u(GridSpec::rectangle(0, 1, 0, 1, 1.0 / 32), 0.3);
  const LocalField ur = rescale(u, {0.5, 0.5}, 0.1, {8, 1.0, 0.1});
  for (double v : ur.values()) EXPECT_NEAR(v, 2.0, 1e-12);
}

TEST(TwoPlane, ConstraintHoldsByConstruction) {
  const PhaseParams p{6.0, 5.0};
  for (double a : {6.0, 6.3, 9.1, 40.0}) {
    const TwoPlane H = TwoPlane::make(p, 0.7, a, {3, 4});
    EXPECT_NEAR(H.alpha * H.alpha - H.beta * H.beta, 11.0, 1e-12 * a * a);
    EXPECT_NEAR(norm(H.e), 1.0, 1e-12);
  }
  EXPECT_THROW(TwoPlane::make(p, 0.7, 5.9, {0, 1}), PreconditionError);
}

TEST(Fit, SelfFitAxisDirection) {
  const TwoPlane H = TwoPlane::make(P21, 1.0, 2.0, {0, 1});
  const LocalField ur = local_from(1.0, 16, H);
  const FitResult f = fit_two_plane(ur, P21, 1.0);
  EXPECT_NEAR(f.plane.alpha, 2.0, 1e-9);
  EXPECT_NEAR(f.plane.e.x1, 0.0, 1e-9);
  EXPECT_NEAR(f.plane.e.x2, 1.0, 1e-9);
  EXPECT_LE(f.eps, 1e-9);
}

TEST(Fit, SelfFitOffGridAngle) {
  const double th = 0.6459;
  const TwoPlane H = TwoPlane::make(P21, 0.8, 2.7, {std::cos(th), std::sin(th)});
  const FitResult f = fit_two_plane(local_from(1.0, 16, H), P21, 0.8);
  EXPECT_NEAR(f.plane.alpha, 2.7, 1e-5);
  EXPECT_NEAR(norm(f.plane.e - H.e), 0.0, 1e-5);
  EXPECT_LE(f.eps, 1e-5);
}

TEST(Fit, PerturbationBoundedByTriangleInequality) {
  const TwoPlane H = TwoPlane::make(P21, 1.0, 2.4, {0.6, 0.8});
  const LocalField ur = local_from(1.0, 16, [&](Vec2 x) { return H(x) + 0.01 * std::sin(7 * x.x1 + 3 * x.x2); });
  EXPECT_LE(fit_two_plane(ur, P21, 1.0).eps, 0.01 + 1e-6);
}

TEST(Fit, NegationSwapsRolesExactly) {
  const PhaseParams p{3.0, 2.0};
  const LocalField ur = local_from(1.0, 16, [](Vec2 x) {
    return x.x1 + 0.3 * x.x2 > 0 ? 3.4 * (x.x1 + 0.3 * x.x2) + 0.05 * x.x2 * x.x2 : 2.1 * (x.x1 + 0.3 * x.x2);
  });
  LocalField neg = ur;
  for (double& v : neg.values()) v = -v;
  const FitResult a = fit_two_plane(ur, p, 1.0);
  FitOptions sw;
  sw.swap_roles = true;
  const FitResult b = fit_two_plane(neg, p, 1.0, sw);
  EXPECT_EQ(a.eps, b.eps);
  EXPECT_EQ(a.plane.alpha, b.plane.alpha);
  EXPECT_EQ(a.plane.e.x1, -b.plane.e.x1);
  EXPECT_EQ(a.plane.e.x2, -b.plane.e.x2);
}

TEST(Flatness, ExactTwoPlaneGivesZeroOnEveryRung) {
  const GridSpec g = GridSpec::rectangle(0, 1, 0, 1, 1.0 / 256);
  const Vec2 x0{0.5, 0.5};
  const TwoPlane H = TwoPlane::make(P21, 0.5, 2.2, {0, 1});
  const ScalarField u = ScalarField::from_function(g, [&](double a, double b) { return H(Vec2{a, b} - x0); });
  FlatnessOptions o;
  o.r0 = 0.2;
  o.rho = 0.5;
  const FlatnessReport rep = flatness_trace(u, x0, P21, o);
  ASSERT_GE(rep.rungs.size(), 3u);
  for (const auto& r : rep.rungs) {
    EXPECT_LE(r.fit.eps, 1e-12);
    EXPECT_NEAR(r.fit.plane.alpha, 2.2, 1e-9);
  }
  EXPECT_TRUE(rep.floor_reached);
  for (std::size_t k = 1; k < rep.rungs.size(); ++k) EXPECT_LT(rep.rungs[k].r, rep.rungs[k - 1].r);
  EXPECT_GE(rep.rungs.back().r, 8.0 / 256);
}

TEST(Flatness, StartRadiusMustRespectBoundary) {
  const ScalarField u(GridSpec::rectangle(0, 1, 0, 1, 1.0 / 32), 1.0);
  FlatnessOptions o;
  o.r0 = 0.3;
  EXPECT_THROW(flatness_trace(u, {0.5, 0.5}, P21, o), PreconditionError);
}

TEST(Linearize, ExactInputIsConverged) {
  const TwoPlane H = TwoPlane::make(P21, 1.0, 2.0, {0, 1});
  const LocalField ur = local_from(1.0, 16, H);
  const auto res = linearize_sequence({{0.01, ur, fit_two_plane(ur, P21, 1.0)}}, P21);
  EXPECT_TRUE(res.converged);
  EXPECT_TRUE(res.rungs.empty());
  EXPECT_FALSE(res.l_estimate.has_value());
}

TEST(Linearize, BranchFamilyRecoversLambdaSquared) {
  std::vector<RungInput> in;
  for (double eps : {0.2, 0.1, 0.05, 0.025}) {
    const TwoPlane H = TwoPlane::make(P21, 1.0, 2.0 * (1 + eps), {0, 1});
    in.push_back({eps * eps, local_from(1.0, 8, H), FitResult{H, eps}});
  }
  const auto res = linearize_sequence(in, P21);
  ASSERT_EQ(res.rungs.size(), 4u);
  ASSERT_TRUE(res.l_estimate.has_value());
  EXPECT_FALSE(res.divergent);
  EXPECT_NEAR(*res.l_estimate, 4.0, 1e-9);
}

TEST(Linearize, NonBranchFamilyIsDivergent) {
  std::vector<RungInput> in;
  for (double eps : {0.1, 0.02, 0.004}) {
    const TwoPlane H = TwoPlane::make(P21, 1.0, 3.0, {0, 1});
    in.push_back({eps * eps, local_from(1.0, 8, H), FitResult{H, eps}});
  }
  EXPECT_TRUE(linearize_sequence(in, P21).divergent);
}

TEST(Linearize, AdmissionAndReflection) {
  const TwoPlane H = TwoPlane::make(P21, 1.0, 2.1, {0.6, -0.8});
  const LocalField ur = local_from(1.0, 8, [&](Vec2 x) { return H(x) + 0.01 * x.x1 * x.x1; });
  const FitResult fit{H, 0.01};
  const auto res = linearize_sequence({{0.5, ur, fit}, {1e-3, ur, fit}}, P21);
  ASSERT_EQ(res.rejected_radii.size(), 1u);
  ASSERT_EQ(res.rungs.size(), 1u);
  const auto& r = res.rungs[0];
  EXPECT_TRUE(r.reflected);
  EXPECT_NEAR(r.fit.plane.e.x2, 0.8, 1e-15);
  // reflected field minus reflected plane, divided by x₂⁰αε, is x₁²/α on the plus phase
  for (int j = 0; j < ur.n(); ++j)
    for (int i = 0; i < ur.n(); ++i) {
      const std::size_t k = static_cast<std::size_t>(j) * ur.n() + i;
      const Vec2 x = ur.node(i, j);
      if (r.plus_mask[k]) {
        EXPECT_NEAR(r.v_plus(i, j), x.x1 * x.x1 / 2.1, 1e-12);
      }
      if (r.minus_mask[k]) {
        EXPECT_NEAR(r.v_minus(i, j), x.x1 * x.x1 / H.beta, 1e-12);
      }
    }
}

TEST(Acf, DiscRectangleAreas) {
  EXPECT_NEAR(detail::disc_rect_area({0, 0}, 1.0, -2, 2, -2, 2), std::numbers::pi, 1e-14);
  EXPECT_NEAR(detail::disc_rect_area({0, 0}, 1.0, 0, 2, -2, 2), std::numbers::pi / 2, 1e-14);
  EXPECT_NEAR(detail::disc_rect_area({0, 0}, 1.0, 0, 2, 0, 2), std::numbers::pi / 4, 1e-14);
  // independent midpoint quadrature over a cut square
  const Vec2 c{0.13, -0.07};
  const double r = 0.4, x0 = 0.2, x1 = 0.45, y0 = -0.1, y1 = 0.3;
  const int n = 2000;
  double q = 0.0;
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) {
      const Vec2 p{x0 + (a + 0.5) * (x1 - x0) / n, y0 + (b + 0.5) * (y1 - y0) / n};
      if (norm(p - c) <= r) q += (x1 - x0) * (y1 - y0) / (double(n) * n);
    }
  EXPECT_NEAR(detail::disc_rect_area(c, r, x0, x1, y0, y1), q, 1e-4);
}

TEST(Acf, ClosedFormPair) {
  const GridSpec g = GridSpec::rectangle(0, 1, 0, 1, 1.0 / 256);
  const ScalarField up = ScalarField::from_function(g, [](double, double b) { return std::max(b - 0.5, 0.0); });
  const ScalarField um = ScalarField::from_function(g, [](double, double b) { return std::max(0.5 - b, 0.0); });
  std::vector<double> radii;
  for (int k = 1; k <= 20; ++k) radii.push_back(0.5 * k / 20);
  const auto tr = acf_phi(up, um, {0.5, 0.5}, radii, 1.0, 0.5);
  ASSERT_EQ(tr.samples.size(), 20u);
  for (const auto& s : tr.samples) {
    const double exact = std::numbers::pi * std::numbers::pi / 4 * std::exp(std::sqrt(s.r));
    EXPECT_NEAR(s.phi / exact, 1.0, 1e-3);
  }
  EXPECT_NEAR(tr.samples.back().phi, 5.004, 5e-3);
  EXPECT_TRUE(tr.monotone());
}

TEST(Acf, OnePhaseIsIdenticallyZero) {
  const GridSpec g = GridSpec::rectangle(0, 1, 0, 1, 1.0 / 64);
  const ScalarField up = ScalarField::from_function(g, [](double, double b) { return std::max(b - 0.5, 0.0); });
  const auto tr = acf_phi(up, ScalarField(g, 0.0), {0.5, 0.5}, {0.1, 0.2, 0.4}, 1.0, 0.5);
  for (const auto& s : tr.samples) EXPECT_EQ(s.phi, 0.0);
  EXPECT_TRUE(tr.monotone());
}

TEST(Acf, CenterMustBeCommonZero) {
  const GridSpec g = GridSpec::rectangle(0, 1, 0, 1, 1.0 / 64);
  const ScalarField up = ScalarField::from_function(g, [](double, double b) { return std::max(b - 0.4, 0.0); });
  EXPECT_THROW(acf_phi(up, ScalarField(g, 0.0), {0.5, 0.5}, {0.1}, 1.0, 0.5), PreconditionError);
}

TEST(PhiTest, PointValues) {
  const PhiTestFunction phi({0.6, 0.8});
  EXPECT_EQ(phi(phi.Q), 1.0);
  EXPECT_NEAR(phi(phi.Q + Vec2{0.75, 0.0}), 0.0, 1e-15);
  EXPECT_NEAR(phi(phi.Q + Vec2{0.0, 0.05 + 1e-12}), 1.0, 1e-9);
}

TEST(PhiTest, PropertyReportWithContinuousKappa) {
  for (Vec2 e : {Vec2{0, 1}, Vec2{0.6, 0.8}, Vec2{-1, 0.2}}) {
    const PhiTestFunction phi(e);
    const auto rep = phi_property_report(phi);
    EXPECT_TRUE(rep.all_pass()) << to_string(e);
    EXPECT_GT(rep.lk_points, 1000u);
    EXPECT_GT(rep.de_points, 1000u);
    // farthest point of B_{1/6} from Q is at distance 1/5 + 1/6 = 11/30
    const double c_exact = (900.0 / 121 - 16.0 / 9) / (400.0 - 16.0 / 9);
    EXPECT_NEAR(c_exact, 0.0142138, 1e-6);
    EXPECT_GE(rep.c, c_exact - 1e-12);
    EXPECT_LE(rep.c, c_exact + 2e-4);
  }
}

TEST(PhiTest, PrintedKappaIsDiscontinuous) {
  const PhiTestFunction phi({0, 1}, true);
  const auto rep = phi_property_report(phi);
  EXPECT_FALSE(rep.continuous());
  EXPECT_NEAR(rep.inner_jump, 1.0 - (400.0 - 16.0 / 9) / (400.0 - 9.0 / 16), 1e-15);
  EXPECT_FALSE(rep.all_pass());
}

TEST(Harnack, ExactTwoPlaneCollapsesTrap) {
  const TwoPlane H = TwoPlane::make(P21, 1.0, 2.0, {0.6, 0.8});
  const LocalField ur = local_from(4.0, 16, H);
  const double s = 0.05;
  const auto res = harnack_probe(ur, H, P21, {s, -s, s, -s});
  ASSERT_TRUE(res.applicable) << res.reason;
  EXPECT_LE(res.contraction, 2 * ur.spacing() / s);
  EXPECT_LE(res.contraction, 1e-12);
}

TEST(Harnack, ViolatedTrapIsInapplicable) {
  const TwoPlane H = TwoPlane::make(P21, 1.0, 2.0, {0, 1});
  const LocalField ur = local_from(4.0, 8, [&](Vec2 x) { return H(x + Vec2{0, 0.2}); });
  const auto res = harnack_probe(ur, H, P21, {0.05, -0.05, 0.05, -0.05});
  EXPECT_FALSE(res.applicable);
  EXPECT_EQ(res.reason, "trap violated on B_4");
}

TEST(Harnack, ShiftedPlaneContractsToShift) {
  const TwoPlane H = TwoPlane::make(P21, 1.0, 2.0, {0, 1});
  // a shift that varies with x₁ leaves a wider trap on B₄ than on B_{1/6}
  const LocalField ur = local_from(4.0, 24, [&](Vec2 x) { return H(x + Vec2{0, 0.01 * x.x1}); });
  const Trap t0 = tightest_trap(ur, H, P21, 4.0, HarnackForm::branch);
  const auto res = harnack_probe(ur, H, P21, t0);
  ASSERT_TRUE(res.applicable) << res.reason;
  EXPECT_NEAR(t0.a - t0.b, 0.08, 1e-3);
  EXPECT_NEAR(res.after.a - res.after.b, 0.02 / 6, 1e-12);
  EXPECT_NEAR(res.contraction, (0.02 / 6) / (t0.a - t0.b), 1e-12);
  EXPECT_LT(res.contraction, 0.05);
}

TEST(Holder, PlantedExponent) {
  const PhaseParams p{6.0, 5.0};
  std::vector<VertexFit> v;
  for (int k = 0; k <= 80; ++k) {
    const Vec2 x{0.5 + 0.6 * k / 80, 0.5};
    const double alpha = 7.0 + 0.8 * std::pow(norm(x - Vec2{0.5, 0.5}), 0.5);
    v.push_back({x, FitResult{TwoPlane::make(p, 0.5, alpha, {0, 1}), 0.0}});
  }
  HolderOptions o;
  o.min_distance = 4.0 / 256;
  const auto [fa, fe] = holder_estimate(v, o);
  EXPECT_GE(fa.eta, 0.4);
  EXPECT_LE(fa.eta, 0.6);
  EXPECT_TRUE(fe.zero_variation);
  EXPECT_EQ(fe.eta, 1.0);
}

TEST(Holder, ConstantParametersAreZeroVariation) {
  const PhaseParams p{6.0, 5.0};
  std::vector<VertexFit> v;
  for (int k = 0; k < 10; ++k) v.push_back({{0.1 * k, 0.5}, FitResult{TwoPlane::make(p, 0.5, 6.5, {0, 1}), 0.0}});
  const auto [fa, fe] = holder_estimate(v);
  EXPECT_TRUE(fa.zero_variation);
  EXPECT_EQ(fa.eta, 1.0);
  EXPECT_TRUE(fe.zero_variation);
  EXPECT_THROW(holder_estimate(std::vector<VertexFit>(v.begin(), v.begin() + 5)), PreconditionError);
}
