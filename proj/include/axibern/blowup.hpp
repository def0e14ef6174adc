#pragma once

/// Blow-up analysis: rescaling, two-plane fits, flatness ladders, the
/// linearizing sequence, ACF monotonicity, the Harnack test function and
/// Hölder estimates of the fitted parameters along the free boundary.

#include "axibern/freeboundary.hpp"

#include <concepts>
#include <optional>

namespace axibern {

/// Square sample grid [−w, w]² with spacing 1/resolution, centred at 0.
class LocalField {
 public:
  LocalField() = default;
  LocalField(double half_width, int resolution) : res_(resolution) {
    if (!(half_width > 0.0) || resolution < 1) throw PreconditionError("local field needs w > 0 and resolution >= 1");
    n_ = 2 * static_cast<int>(std::lround(half_width * resolution)) + 1;
    if (n_ < 3) throw PreconditionError("local field too coarse");
    values_.assign(static_cast<std::size_t>(n_) * n_, 0.0);
  }

  int n() const { return n_; }
  int resolution() const { return res_; }
  double spacing() const { return 1.0 / res_; }
  double half_width() const { return (n_ - 1) / 2 * spacing(); }
  Vec2 node(int i, int j) const { return {-half_width() + i * spacing(), -half_width() + j * spacing()}; }
  double& operator()(int i, int j) { return values_[static_cast<std::size_t>(j) * n_ + i]; }
  double operator()(int i, int j) const { return values_[static_cast<std::size_t>(j) * n_ + i]; }
  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

  double sample(Vec2 p) const {
    const double w = half_width();
    if (std::abs(p.x1) > w * (1 + 1e-12) || std::abs(p.x2) > w * (1 + 1e-12))
      throw GeometryError("sample point " + to_string(p) + " outside local field");
    const double s = (p.x1 + w) * res_, t = (p.x2 + w) * res_;
    const int i = std::clamp(static_cast<int>(std::floor(s)), 0, n_ - 2);
    const int j = std::clamp(static_cast<int>(std::floor(t)), 0, n_ - 2);
    const double a = std::clamp(s - i, 0.0, 1.0), b = std::clamp(t - j, 0.0, 1.0);
    const auto& u = *this;
    return (1 - b) * ((1 - a) * u(i, j) + a * u(i + 1, j)) + b * ((1 - a) * u(i, j + 1) + a * u(i + 1, j + 1));
  }

  /// f(x, value) for every node with |x| ≤ radius.
  template <class F>
  void for_each_in_ball(double radius, F&& f) const {
    const double r2 = radius * radius * (1 + 1e-12);
    for (int j = 0; j < n_; ++j)
      for (int i = 0; i < n_; ++i) {
        const Vec2 x = node(i, j);
        if (dot(x, x) <= r2) f(x, (*this)(i, j));
      }
  }

  /// Mirror image in x₂.
  LocalField reflected() const {
    LocalField r = *this;
    for (int j = 0; j < n_; ++j)
      for (int i = 0; i < n_; ++i) r(i, j) = (*this)(i, n_ - 1 - j);
    return r;
  }

 private:
  int res_ = 0;
  int n_ = 0;
  std::vector<double> values_;
};

template <class S>
concept PointSampler = requires(const S& s, Vec2 p) {
  { s.sample(p) } -> std::convertible_to<double>;
};

inline double shrink_value(double v, double delta0) {
  if (v > delta0) return v - delta0;
  if (v < -delta0) return v + delta0;
  return 0.0;
}

struct RescaleOptions {
  int resolution = 16;      ///< samples per unit length of the rescaled ball
  double half_width = 1.0;  ///< sampling box [−w, w]²
  double shrink = 0.0;      ///< band δ₀ removed from the interpolated values before scaling
};

/// u_{x₀,r}(x) = u(x₀ + r x)/r on the sampling box, by bilinear sampling.
template <PointSampler S>
LocalField rescale(const S& u, Vec2 x0, double r, const RescaleOptions& o = {}) {
  if (!(r > 0.0)) throw PreconditionError("rescale radius must be positive");
  LocalField out(o.half_width, o.resolution);
  const double w = out.half_width();
  for (Vec2 c : {Vec2{-w, -w}, Vec2{w, w}}) {
    const Vec2 p = x0 + r * c;
    try {
      (void)u.sample(p);
    } catch (const GeometryError&) {
      throw GeometryError("rescaling box of radius " + format_double(r * w) + " at " + to_string(x0) +
                          " leaves the grid");
    }
  }
  for (int j = 0; j < out.n(); ++j)
    for (int i = 0; i < out.n(); ++i) {
      const double v = u.sample(x0 + r * out.node(i, j));
      out(i, j) = (o.shrink > 0.0 ? shrink_value(v, o.shrink) : v) / r;
    }
  return out;
}

inline double tied_beta(const PhaseParams& p, double alpha) {
  return std::sqrt(alpha * alpha - p.lambda_plus * p.lambda_plus + p.lambda_minus * p.lambda_minus);
}

/// H_{α,e}(x) = x₂⁰(α(x·e)⁺ − β(x·e)⁻) with α² − β² = λ₊² − λ₋².
struct TwoPlane {
  double x2_0 = 1.0;
  double alpha = 1.0;
  double beta = 1.0;
  Vec2 e{0.0, 1.0};

  static TwoPlane make(const PhaseParams& p, double x2_0, double alpha, Vec2 e) {
    if (!(x2_0 > 0.0)) throw PreconditionError("two-plane height x2_0 must be positive");
    if (!(alpha >= p.lambda_plus)) throw PreconditionError("two-plane slope alpha must be >= lambda_plus");
    const double ne = norm(e);
    if (!(ne > 0.0)) throw PreconditionError("two-plane direction must be nonzero");
    return TwoPlane{x2_0, alpha, tied_beta(p, alpha), (1.0 / ne) * e};
  }

  double operator()(Vec2 x) const {
    const double t = dot(x, e);
    return x2_0 * (t > 0.0 ? alpha * t : beta * t);
  }
};

struct FitOptions {
  int n_angles = 720;
  int alpha_iters = 80;   ///< golden-section steps in α per angle
  int angle_iters = 60;   ///< golden-section steps refining the best grid angle
  double alpha_max = 0.0; ///< upper end L of the α range; 0 picks max(2λ₊, 2 max|u|/x₂⁰)
  double radius = 1.0;    ///< fit on samples with |x| ≤ radius
  bool swap_roles = false;  ///< fit x₂⁰(β(x·e)⁺ − α(x·e)⁻), the model for −u
};

struct FitResult {
  TwoPlane plane;
  double eps = 0.0;  ///< achieved sup-norm on the sample ball
};

namespace detail {

struct FitSamples {
  std::vector<Vec2> x;
  std::vector<double> v;
};

class TwoPlaneSearch {
 public:
  TwoPlaneSearch(const FitSamples& s, const PhaseParams& p, double x2_0, double lo, double hi, int iters)
      : s_(s), p_(p), x2_0_(x2_0), lo_(lo), hi_(hi), iters_(iters) {}

  double error(double theta, double alpha) const {
    const double c = std::cos(theta), sn = std::sin(theta);
    const double a = x2_0_ * alpha, b = x2_0_ * tied_beta(p_, alpha);
    double err = 0.0;
    for (std::size_t k = 0; k < s_.x.size(); ++k) {
      const double t = s_.x[k].x1 * c + s_.x[k].x2 * sn;
      err = std::max(err, std::abs(s_.v[k] - (t > 0.0 ? a * t : b * t)));
    }
    return err;
  }

  /// Best α for a fixed angle (the error is quasi-convex in α).
  std::pair<double, double> best_alpha(double theta) const {
    constexpr double g = 0.6180339887498949;
    double a = lo_, b = hi_;
    double x1 = b - g * (b - a), x2 = a + g * (b - a);
    double f1 = error(theta, x1), f2 = error(theta, x2);
    for (int it = 0; it < iters_; ++it) {
      if (f1 <= f2) {
        b = x2, x2 = x1, f2 = f1;
        x1 = b - g * (b - a), f1 = error(theta, x1);
      } else {
        a = x1, x1 = x2, f1 = f2;
        x2 = a + g * (b - a), f2 = error(theta, x2);
      }
    }
    std::pair<double, double> best = f1 <= f2 ? std::pair{x1, f1} : std::pair{x2, f2};
    for (double end : {lo_, hi_}) {
      const double fe = error(theta, end);
      if (fe < best.second) best = {end, fe};
    }
    return best;
  }

 private:
  const FitSamples& s_;
  const PhaseParams& p_;
  double x2_0_, lo_, hi_;
  int iters_;
};

}  // namespace detail

inline FitResult fit_two_plane(const LocalField& ur, const PhaseParams& p, double x2_0, const FitOptions& o = {}) {
  p.validate();
  if (!(x2_0 > 0.0)) throw PreconditionError("fit needs x2_0 > 0");
  if (o.n_angles < 4) throw PreconditionError("fit needs at least 4 angles");
  detail::FitSamples s;
  const double sign = o.swap_roles ? -1.0 : 1.0;
  ur.for_each_in_ball(o.radius, [&](Vec2 x, double v) {
    s.x.push_back(x);
    s.v.push_back(sign * v);
  });
  if (s.x.empty()) throw PreconditionError("no samples in the fitting ball");
  double vmax = 0.0;
  for (double v : s.v) vmax = std::max(vmax, std::abs(v));
  const double L = o.alpha_max > 0.0 ? o.alpha_max
                                     : std::max(2.0 * p.lambda_plus, 2.0 * vmax / (x2_0 * o.radius));
  if (!(L >= p.lambda_plus)) throw PreconditionError("alpha_max must be >= lambda_plus");
  const detail::TwoPlaneSearch search(s, p, x2_0, p.lambda_plus, L, o.alpha_iters);

  const double dth = 2.0 * std::numbers::pi / o.n_angles;
  double best_th = 0.0, best_a = p.lambda_plus, best_f = std::numeric_limits<double>::infinity();
  for (int k = 0; k < o.n_angles; ++k) {
    const auto [a, f] = search.best_alpha(k * dth);
    if (f < best_f) best_th = k * dth, best_a = a, best_f = f;
  }
  {
    constexpr double g = 0.6180339887498949;
    double lo = best_th - dth, hi = best_th + dth;
    double t1 = hi - g * (hi - lo), t2 = lo + g * (hi - lo);
    auto r1 = search.best_alpha(t1), r2 = search.best_alpha(t2);
    for (int it = 0; it < o.angle_iters; ++it) {
      if (r1.second <= r2.second) {
        hi = t2, t2 = t1, r2 = r1;
        t1 = hi - g * (hi - lo), r1 = search.best_alpha(t1);
      } else {
        lo = t1, t1 = t2, r1 = r2;
        t2 = lo + g * (hi - lo), r2 = search.best_alpha(t2);
      }
      if (r1.second < best_f) best_th = t1, best_a = r1.first, best_f = r1.second;
      if (r2.second < best_f) best_th = t2, best_a = r2.first, best_f = r2.second;
    }
  }
  FitResult res;
  res.plane = TwoPlane::make(p, x2_0, best_a, {std::cos(best_th), std::sin(best_th)});
  if (o.swap_roles) res.plane.e = -1.0 * res.plane.e;
  res.eps = best_f;
  return res;
}

// ---------------------------------------------------------------- flatness

struct FlatnessOptions {
  double r0 = 0.1;
  double rho = 0.25;
  int max_rungs = 8;
  double floor_cells = 8.0;  ///< rungs stop below floor_cells · h
  double m = 0.0;            ///< x₂⁰ = x₀₂ + m
  double shrink = 0.0;       ///< band δ₀ removed before fitting
  int resolution = 16;
  FitOptions fit;
};

struct FlatnessRung {
  double r = 0.0;
  FitResult fit;
  double ratio = std::numeric_limits<double>::quiet_NaN();  ///< eps(r)/eps(r/ρ)
  double drift = std::numeric_limits<double>::quiet_NaN();  ///< |Δα| + |Δe| from the previous rung
};

struct FlatnessReport {
  Vec2 x0;
  double x2_0 = 0.0;
  double rho = 0.25;
  std::vector<FlatnessRung> rungs;
  bool floor_reached = false;
  double floor_radius = 0.0;

  void write_csv(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path);
    os << "r,eps,alpha,e1,e2,ratio\n";
    for (const auto& g : rungs)
      os << format_double(g.r) << ',' << format_double(g.fit.eps) << ',' << format_double(g.fit.plane.alpha) << ','
         << format_double(g.fit.plane.e.x1) << ',' << format_double(g.fit.plane.e.x2) << ','
         << (std::isnan(g.ratio) ? std::string() : format_double(g.ratio)) << '\n';
  }
};

inline double boundary_distance(const GridSpec& g, Vec2 x) {
  return std::min({x.x1 - g.x1_lo(), g.x1_hi() - x.x1, x.x2 - g.x2_lo(), g.x2_hi() - x.x2});
}

inline FlatnessReport flatness_trace(const ScalarField& u, Vec2 x0, const PhaseParams& p, const FlatnessOptions& o) {
  if (!(o.rho > 0.0 && o.rho < 1.0)) throw PreconditionError("ladder ratio rho must lie in (0, 1)");
  if (!(o.r0 > 0.0)) throw PreconditionError("ladder start r0 must be positive");
  if (o.r0 > 0.5 * boundary_distance(u.grid(), x0) * (1 + 1e-12))
    throw PreconditionError("ladder start r0 exceeds half the distance to the grid boundary");
  FlatnessReport rep;
  rep.x0 = x0;
  rep.x2_0 = x0.x2 + o.m;
  rep.rho = o.rho;
  rep.floor_radius = o.floor_cells * u.grid().h();
  RescaleOptions ro{o.resolution, 1.0, o.shrink};
  double r = o.r0;
  for (int n = 0; n < o.max_rungs; ++n, r *= o.rho) {
    if (r < rep.floor_radius) {
      rep.floor_reached = true;
      break;
    }
    FlatnessRung g;
    g.r = r;
    g.fit = fit_two_plane(rescale(u, x0, r, ro), p, rep.x2_0, o.fit);
    if (!rep.rungs.empty()) {
      const auto& prev = rep.rungs.back().fit;
      g.ratio = prev.eps > 0.0 ? g.fit.eps / prev.eps : (g.fit.eps > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
      g.drift = std::abs(g.fit.plane.alpha - prev.plane.alpha) + norm(g.fit.plane.e - prev.plane.e);
    }
    rep.rungs.push_back(g);
  }
  return rep;
}

// ------------------------------------------------------ linearizing sequence

struct RungInput {
  double r = 0.0;
  LocalField u;  ///< rescaled field u_k
  FitResult fit;
};

struct LinearizeOptions {
  double admission_K = 10.0;      ///< admit rungs with r ≤ K·eps²
  double converged_eps = 1e-10;
  double divergence_ratio = 10.0; ///< divergent when (α−λ₊)/ε > ratio·λ₊ on the flattest rung
};

struct LinearizedRung {
  double r = 0.0;
  FitResult fit;        ///< after reflection, e₂ ≥ 0
  bool reflected = false;
  LocalField v_plus, v_minus;
  NodeMask plus_mask, minus_mask;
  double l = 0.0;       ///< λ₊(α_k − λ₊)/ε_k
};

struct LinearizationResult {
  std::vector<LinearizedRung> rungs;
  std::vector<double> rejected_radii;  ///< rungs failing r ≤ K·eps²
  bool converged = false;              ///< some ε_k fell below the threshold
  bool divergent = false;
  std::optional<double> l_estimate;
};

inline LinearizationResult linearize_sequence(const std::vector<RungInput>& rungs, const PhaseParams& p,
                                              const LinearizeOptions& o = {}) {
  LinearizationResult out;
  for (const auto& in : rungs) {
    if (in.fit.eps < o.converged_eps) {
      out.converged = true;
      break;
    }
    if (in.r > o.admission_K * in.fit.eps * in.fit.eps) {
      out.rejected_radii.push_back(in.r);
      continue;
    }
    LinearizedRung lr;
    lr.r = in.r;
    lr.fit = in.fit;
    LocalField u = in.u;
    if (lr.fit.plane.e.x2 < 0.0) {
      lr.reflected = true;
      u = u.reflected();
      lr.fit.plane.e.x2 = -lr.fit.plane.e.x2;
    }
    const TwoPlane& H = lr.fit.plane;
    const double eps = lr.fit.eps;
    lr.v_plus = lr.v_minus = LocalField(u.half_width(), u.resolution());
    const std::size_t N = u.values().size();
    lr.plus_mask.assign(N, 0);
    lr.minus_mask.assign(N, 0);
    for (int j = 0; j < u.n(); ++j)
      for (int i = 0; i < u.n(); ++i) {
        const std::size_t k = static_cast<std::size_t>(j) * u.n() + i;
        const double v = u(i, j), d = v - H(u.node(i, j));
        if (v > 0.0) {
          lr.v_plus(i, j) = d / (H.x2_0 * H.alpha * eps);
          lr.plus_mask[k] = 1;
        } else if (v < 0.0) {
          lr.v_minus(i, j) = d / (H.x2_0 * H.beta * eps);
          lr.minus_mask[k] = 1;
        }
      }
    lr.l = p.lambda_plus * (H.alpha - p.lambda_plus) / eps;
    out.rungs.push_back(std::move(lr));
  }
  if (out.rungs.empty()) return out;
  const auto flattest = std::min_element(out.rungs.begin(), out.rungs.end(),
                                         [](const auto& a, const auto& b) { return a.fit.eps < b.fit.eps; });
  if (flattest->l > o.divergence_ratio * p.lambda_plus * p.lambda_plus) {
    out.divergent = true;
    return out;
  }
  if (out.rungs.size() == 1) {
    out.l_estimate = out.rungs[0].l;
    return out;
  }
  // least-squares line l(ε), evaluated at ε = 0
  double se = 0, sl = 0, see = 0, sel = 0;
  const double n = static_cast<double>(out.rungs.size());
  for (const auto& r : out.rungs) {
    se += r.fit.eps, sl += r.l, see += r.fit.eps * r.fit.eps, sel += r.fit.eps * r.l;
  }
  const double den = n * see - se * se;
  const double slope = std::abs(den) > 1e-300 ? (n * sel - se * sl) / den : 0.0;
  out.l_estimate = std::max(0.0, (sl - slope * se) / n);
  return out;
}

// ------------------------------------------------------------ ACF functional

struct AcfSample {
  double r = 0.0;
  double e_plus = 0.0;
  double e_minus = 0.0;
  double phi = 0.0;
  bool flagged = false;  ///< φ dropped by more than the tolerance from the previous sample
};

struct MonotonicityTrace {
  double C0 = 1.0;
  double gamma = 0.5;
  std::vector<AcfSample> samples;

  int flagged_count() const {
    return static_cast<int>(std::count_if(samples.begin(), samples.end(), [](const auto& s) { return s.flagged; }));
  }
  bool monotone() const { return flagged_count() == 0; }

  void write_csv(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path);
    os << "r,Eplus,Eminus,phi\n";
    for (const auto& s : samples)
      os << format_double(s.r) << ',' << format_double(s.e_plus) << ',' << format_double(s.e_minus) << ','
         << format_double(s.phi) << '\n';
  }
};

namespace detail {

inline double circle_segment_integral(double r, double x) {
  const double t = std::clamp(x, -r, r);
  return 0.5 * (t * std::sqrt(std::max(0.0, r * r - t * t)) + r * r * std::asin(t / r));
}

/// Area of the disc |X| ≤ r (centre 0) intersected with {X₁ ≤ x, X₂ ≤ y}.
inline double disc_quadrant_area(double r, double x, double y) {
  const double xc = std::clamp(x, -r, r);
  if (xc <= -r || y <= -r) return 0.0;
  auto S = [&](double a) { return circle_segment_integral(r, a); };
  if (y >= r) return 2.0 * (S(xc) - S(-r));
  const double w = std::sqrt(r * r - y * y);
  double area = 0.0;
  auto piece = [&](double a, double b, bool middle) {
    b = std::min(b, xc);
    if (b <= a) return;
    if (middle)
      area += y * (b - a) + S(b) - S(a);
    else if (y >= 0.0)
      area += 2.0 * (S(b) - S(a));
  };
  piece(-r, -w, false);
  piece(-w, w, true);
  piece(w, r, false);
  return area;
}

/// Exact area of the disc B_r(c) intersected with [x0,x1]×[y0,y1].
inline double disc_rect_area(Vec2 c, double r, double x0, double x1, double y0, double y1) {
  x0 -= c.x1, x1 -= c.x1, y0 -= c.x2, y1 -= c.x2;
  return disc_quadrant_area(r, x1, y1) - disc_quadrant_area(r, x0, y1) - disc_quadrant_area(r, x1, y0) +
         disc_quadrant_area(r, x0, y0);
}

/// Cell average of |∇f|² for the bilinear interpolant.
inline double cell_mean_grad_sq(const ScalarField& f, int i, int j) {
  const double h = f.grid().h();
  const double A = f(i + 1, j) - f(i, j), B = f(i + 1, j + 1) - f(i, j + 1);
  const double C = f(i, j + 1) - f(i, j), D = f(i + 1, j + 1) - f(i + 1, j);
  return (A * A + A * B + B * B + C * C + C * D + D * D) / (3.0 * h * h);
}

}  // namespace detail

/// φ(r) = E⁺(r)E⁻(r)/(r⁴e^{−C₀r^γ}) with E± = ∫_{B_r}|∇u±|², exact disc–cell areas.
inline MonotonicityTrace acf_phi(const ScalarField& u_plus, const ScalarField& u_minus, Vec2 center,
                                 std::vector<double> radii, double C0, double gamma, double tol = 1e-3) {
  if (!(u_plus.grid() == u_minus.grid())) throw PreconditionError("u_plus and u_minus must share a grid");
  if (!(C0 >= 0.0) || !(gamma > 0.0 && gamma <= 1.0)) throw PreconditionError("need C0 >= 0 and gamma in (0, 1]");
  if (radii.empty()) throw PreconditionError("acf_phi needs at least one radius");
  std::sort(radii.begin(), radii.end());
  if (!(radii.front() > 0.0) || radii.back() > 0.5) throw PreconditionError("radii must lie in (0, 1/2]");
  const GridSpec& g = u_plus.grid();
  BallSample{center, radii.back()}.check_inside(g);
  const double zt = 1e-9 * std::max({1.0, u_plus.max_abs(), u_minus.max_abs()});
  if (std::abs(u_plus.sample(center)) > zt || std::abs(u_minus.sample(center)) > zt)
    throw PreconditionError("acf center " + to_string(center) + " is not a common zero of u_plus and u_minus");
  const double h = g.h(), R = radii.back();
  const int i0 = std::max(0, static_cast<int>(std::floor((center.x1 - R - g.x1_lo()) / h)));
  const int i1 = std::min(g.n1() - 2, static_cast<int>(std::floor((center.x1 + R - g.x1_lo()) / h)));
  const int j0 = std::max(0, static_cast<int>(std::floor((center.x2 - R - g.x2_lo()) / h)));
  const int j1 = std::min(g.n2() - 2, static_cast<int>(std::floor((center.x2 + R - g.x2_lo()) / h)));
  struct Cell {
    double x0, y0, gp, gm;
  };
  std::vector<Cell> cells;
  for (int j = j0; j <= j1; ++j)
    for (int i = i0; i <= i1; ++i) {
      const double gp = detail::cell_mean_grad_sq(u_plus, i, j), gm = detail::cell_mean_grad_sq(u_minus, i, j);
      if (gp > 0.0 || gm > 0.0) cells.push_back({g.x1(i), g.x2(j), gp, gm});
    }
  MonotonicityTrace tr;
  tr.C0 = C0;
  tr.gamma = gamma;
  for (double r : radii) {
    AcfSample s;
    s.r = r;
    for (const auto& c : cells) {
      const double a = detail::disc_rect_area(center, r, c.x0, c.x0 + h, c.y0, c.y0 + h);
      if (a <= 0.0) continue;
      s.e_plus += a * c.gp;
      s.e_minus += a * c.gm;
    }
    const double gr = std::pow(r, 4) * std::exp(-C0 * std::pow(r, gamma));
    s.phi = s.e_plus * s.e_minus / gr;
    if (!tr.samples.empty() && s.phi < tr.samples.back().phi * (1.0 - tol)) s.flagged = true;
    tr.samples.push_back(s);
  }
  return tr;
}

// -------------------------------------------------------- Harnack test function

/// φ = 1 on B_{1/20}(Q), κ(|x−Q|⁻² − (3/4)⁻²) up to |x−Q| = 3/4, 0 beyond; Q = e/5.
struct PhiTestFunction {
  Vec2 e{0.0, 1.0};
  Vec2 Q{0.0, 0.2};
  double kappa = 1.0 / (400.0 - 16.0 / 9.0);

  /// The default κ makes φ continuous at |x−Q| = 1/20; printed_kappa uses 1/(400 − (3/4)²).
  explicit PhiTestFunction(Vec2 dir = {0.0, 1.0}, bool printed_kappa = false) {
    const double n = norm(dir);
    if (!(n > 0.0)) throw PreconditionError("phi direction must be nonzero");
    e = (1.0 / n) * dir;
    Q = 0.2 * e;
    kappa = printed_kappa ? 1.0 / (400.0 - 9.0 / 16.0) : 1.0 / (400.0 - 16.0 / 9.0);
  }

  double operator()(Vec2 x) const {
    const double d = norm(x - Q);
    if (d <= 1.0 / 20) return 1.0;
    if (d >= 0.75) return 0.0;
    return kappa * (1.0 / (d * d) - 16.0 / 9.0);
  }

  /// Jump across |x−Q| = 1/20 (zero for the continuous choice of κ).
  double inner_jump() const { return 1.0 - kappa * (400.0 - 16.0 / 9.0); }
};

struct PhiReportOptions {
  int samples = 401;    ///< per axis over [−1, 1]²
  double rk = 1e-3;     ///< blow-up radius in L_k
  double y2_0 = 1.0;
  double fd_step = 1e-5;
};

struct PhiPropertyReport {
  bool range_ok = true;          ///< (1) 0 ≤ φ ≤ 1 in B₁
  bool boundary_zero = true;     ///< (1) φ = 0 on ∂B₁
  bool lk_positive = true;       ///< (2) L_kφ > 0 on {φ > 0} outside B_{1/20}(Q)
  bool de_positive = true;       ///< (3) ∂_eφ > 0 on {0 < φ < 1} ∩ {|x·e| < 1/5}
  bool radial_monotone = true;
  double c = 0.0;                ///< (4) min of φ over B_{1/6}
  double min_lk = std::numeric_limits<double>::infinity();
  double min_de = std::numeric_limits<double>::infinity();
  double inner_jump = 0.0;
  std::size_t lk_points = 0, de_points = 0;

  bool continuous() const { return std::abs(inner_jump) < 1e-12; }
  bool all_pass() const {
    return range_ok && boundary_zero && lk_positive && de_positive && radial_monotone && c > 0.0 && continuous();
  }
};

/// Items (1)–(4) by dense sampling; derivatives are central differences.
inline PhiPropertyReport phi_property_report(const PhiTestFunction& phi, const PhiReportOptions& o = {}) {
  PhiPropertyReport rep;
  rep.inner_jump = phi.inner_jump();
  rep.c = std::numeric_limits<double>::infinity();
  const double s = o.fd_step;
  const Vec2 ex{1, 0}, ey{0, 1};
  for (int b = 0; b < o.samples; ++b)
    for (int a = 0; a < o.samples; ++a) {
      const Vec2 x{-1.0 + 2.0 * a / (o.samples - 1), -1.0 + 2.0 * b / (o.samples - 1)};
      const double r = norm(x);
      if (r > 1.0) continue;
      const double v = phi(x);
      if (v < 0.0 || v > 1.0) rep.range_ok = false;
      if (r <= 1.0 / 6) rep.c = std::min(rep.c, v);
      const double d = norm(x - phi.Q);
      const bool interior = d > 1.0 / 20 + 4 * s && d < 0.75 - 4 * s;
      if (!interior) continue;
      const double lap = (phi(x + s * ex) + phi(x - s * ex) + phi(x + s * ey) + phi(x - s * ey) - 4 * v) / (s * s);
      const double d2 = (phi(x + s * ey) - phi(x - s * ey)) / (2 * s);
      const double lk = lap - o.rk / (o.y2_0 + o.rk * x.x2) * d2;
      rep.min_lk = std::min(rep.min_lk, lk);
      ++rep.lk_points;
      if (!(lk > 0.0)) rep.lk_positive = false;
      if (std::abs(dot(x, phi.e)) < 0.2 - 1e-3) {
        const double de = (phi(x + s * phi.e) - phi(x - s * phi.e)) / (2 * s);
        rep.min_de = std::min(rep.min_de, de);
        ++rep.de_points;
        if (!(de > 0.0)) rep.de_positive = false;
      }
    }
  for (int k = 0; k < 720; ++k) {
    const double th = 2.0 * std::numbers::pi * k / 720;
    const Vec2 dir{std::cos(th), std::sin(th)};
    if (phi(dir) != 0.0) rep.boundary_zero = false;
    double prev = phi(phi.Q);
    for (int q = 1; q <= 400; ++q) {
      const double cur = phi(phi.Q + (q / 400.0) * dir);
      if (cur > prev) rep.radial_monotone = false;
      prev = cur;
    }
  }
  return rep;
}

// -------------------------------------------------------------- Harnack probe

struct Trap {
  double a = 0.0, b = 0.0, c = 0.0, d = 0.0;
};

enum class HarnackForm { branch, non_branch };

struct HarnackResult {
  bool applicable = false;
  std::string reason;
  Trap before, after;
  double contraction = std::numeric_limits<double>::quiet_NaN();        ///< (a₁−b₁)/(a₀−b₀)
  double minus_contraction = std::numeric_limits<double>::quiet_NaN();  ///< (c₁−d₁)/(c₀−d₀)
};

/// Tightest trap on B_radius: branch form x₂⁰λ₊(x·e+b)⁺ ≤ u⁺ ≤ x₂⁰λ₊(x·e+a)⁺ and
/// x₂⁰λ₋(x·e+c)⁻ ≤ u⁻ ≤ x₂⁰λ₋(x·e+d)⁻; the non-branch form uses H(x+be) ≤ u ≤ H(x+ae)
/// with the fitted α, β (then c = a, d = b).
inline Trap tightest_trap(const LocalField& u, const TwoPlane& H, const PhaseParams& p, double radius,
                          HarnackForm form) {
  const bool br = form == HarnackForm::branch;
  const double sp = H.x2_0 * (br ? p.lambda_plus : H.alpha), sm = H.x2_0 * (br ? p.lambda_minus : H.beta);
  const double inf = std::numeric_limits<double>::infinity();
  double as = -inf, bs = inf, cs = -inf, ds = inf;
  u.for_each_in_ball(radius, [&](Vec2 x, double v) {
    const double t = dot(x, H.e);
    if (v > 0.0) {
      as = std::max(as, v / sp - t);
      bs = std::min(bs, v / sp - t);
      cs = std::max(cs, -t);
    } else if (v < 0.0) {
      cs = std::max(cs, -t + v / sm);
      ds = std::min(ds, -t + v / sm);
      bs = std::min(bs, -t);
    } else {
      bs = std::min(bs, -t);
      cs = std::max(cs, -t);
    }
  });
  Trap tr;
  if (br) {
    tr.c = cs;
    tr.a = std::max(as, cs);
    tr.d = std::min(ds, cs);
    tr.b = std::min(bs, tr.d);
  } else {
    tr.a = tr.c = std::max(as, cs);
    tr.b = tr.d = std::min(bs, ds);
  }
  return tr;
}

inline bool trap_holds(const LocalField& u, const TwoPlane& H, const PhaseParams& p, double radius, HarnackForm form,
                       const Trap& t, double tol) {
  const Trap tight = tightest_trap(u, H, p, radius, form);
  return tight.a <= t.a + tol && tight.b >= t.b - tol && tight.c <= t.c + tol && tight.d >= t.d - tol;
}

/// Checks the trap on B₄ and measures the tightest trap on B_{1/6}.
inline HarnackResult harnack_probe(const LocalField& u, const TwoPlane& H, const PhaseParams& p, const Trap& trap0,
                                   HarnackForm form = HarnackForm::branch, double tol = 1e-12) {
  if (u.half_width() < 4.0 - 1e-12) throw PreconditionError("harnack probe needs samples on B_4");
  HarnackResult res;
  res.before = trap0;
  if (!(trap0.b <= trap0.d && trap0.d <= trap0.c && trap0.c <= trap0.a) || !(trap0.a > trap0.b)) {
    res.reason = "trap not ordered (b <= d <= c <= a, a > b)";
    return res;
  }
  if (!trap_holds(u, H, p, 4.0, form, trap0, tol)) {
    res.reason = "trap violated on B_4";
    return res;
  }
  res.applicable = true;
  res.after = tightest_trap(u, H, p, 1.0 / 6, form);
  res.contraction = (res.after.a - res.after.b) / (trap0.a - trap0.b);
  if (trap0.c > trap0.d) res.minus_contraction = (res.after.c - res.after.d) / (trap0.c - trap0.d);
  return res;
}

// ------------------------------------------------------------------- Hölder

struct VertexFit {
  Vec2 x0;
  FitResult fit;
};

struct HolderFit {
  std::string quantity;
  double eta = 1.0;
  double slope = 0.0;
  double stderr_slope = 0.0;
  double lower = 1.0, upper = 1.0;  ///< eta ± 2 standard errors
  double residual = 0.0;            ///< RMS residual of the log–log fit
  double C = 0.0;
  std::size_t pairs = 0;
  std::size_t bins_used = 0;
  bool zero_variation = false;
  bool degenerate = false;
};

struct HolderOptions {
  double min_distance = 0.0;  ///< pairs closer than this are excluded (4h)
  int bins = 12;
};

namespace detail {

/// Regression of the upper envelope: max |Δq| per logarithmic distance bin.
inline HolderFit envelope_fit(const std::vector<VertexFit>& v, const HolderOptions& o, const std::string& name,
                              const std::function<double(const VertexFit&, const VertexFit&)>& diff, double scale) {
  HolderFit f;
  f.quantity = name;
  std::vector<std::pair<double, double>> pr;
  double dmin = std::numeric_limits<double>::infinity(), dmax = 0.0, qmax = 0.0;
  for (std::size_t a = 0; a < v.size(); ++a)
    for (std::size_t b = a + 1; b < v.size(); ++b) {
      const double d = norm(v[a].x0 - v[b].x0);
      if (d < o.min_distance || d <= 0.0) continue;
      const double q = diff(v[a], v[b]);
      pr.emplace_back(d, q);
      dmin = std::min(dmin, d), dmax = std::max(dmax, d), qmax = std::max(qmax, q);
    }
  f.pairs = pr.size();
  if (pr.empty()) {
    f.degenerate = true;
    return f;
  }
  if (qmax <= 1e-12 * std::max(1.0, scale)) {
    f.zero_variation = true;
    return f;
  }
  const int nb = std::max(1, o.bins);
  const double lmin = std::log(dmin), span = std::max(std::log(dmax) - lmin, 1e-12);
  std::vector<std::pair<double, double>> best(nb, {0.0, 0.0});
  for (auto [d, q] : pr) {
    const int k = std::min(nb - 1, static_cast<int>((std::log(d) - lmin) / span * nb));
    if (q > best[k].second) best[k] = {d, q};
  }
  std::vector<double> X, Y;
  for (auto [d, q] : best)
    if (q > 1e-14 * std::max(1.0, scale)) X.push_back(std::log(d)), Y.push_back(std::log(q));
  f.bins_used = X.size();
  if (X.size() < 3) {
    f.degenerate = true;
    return f;
  }
  const double n = static_cast<double>(X.size());
  double mx = 0, my = 0;
  for (std::size_t k = 0; k < X.size(); ++k) mx += X[k] / n, my += Y[k] / n;
  double sxx = 0, sxy = 0;
  for (std::size_t k = 0; k < X.size(); ++k) sxx += (X[k] - mx) * (X[k] - mx), sxy += (X[k] - mx) * (Y[k] - my);
  f.slope = sxy / sxx;
  const double icpt = my - f.slope * mx;
  double ss = 0;
  for (std::size_t k = 0; k < X.size(); ++k) ss += std::pow(Y[k] - icpt - f.slope * X[k], 2);
  f.residual = std::sqrt(ss / n);
  f.stderr_slope = X.size() > 2 ? std::sqrt(ss / (n - 2) / sxx) : 0.0;
  f.C = std::exp(icpt);
  f.eta = std::min(1.0, f.slope);
  f.lower = f.eta - 2 * f.stderr_slope;
  f.upper = std::min(1.0, f.slope + 2 * f.stderr_slope);
  return f;
}

}  // namespace detail

/// Hölder fits of x₂⁰α and of e against the vertex distance.
inline std::pair<HolderFit, HolderFit> holder_estimate(const std::vector<VertexFit>& v, const HolderOptions& o = {}) {
  if (v.size() < 8) throw PreconditionError("holder estimate needs at least 8 vertex fits");
  double scale = 0.0;
  for (const auto& f : v) scale = std::max(scale, f.fit.plane.x2_0 * f.fit.plane.alpha);
  auto dalpha = [](const VertexFit& a, const VertexFit& b) {
    return std::abs(a.fit.plane.x2_0 * a.fit.plane.alpha - b.fit.plane.x2_0 * b.fit.plane.alpha);
  };
  auto de = [](const VertexFit& a, const VertexFit& b) { return norm(a.fit.plane.e - b.fit.plane.e); };
  return {detail::envelope_fit(v, o, "x2_0*alpha", dalpha, scale), detail::envelope_fit(v, o, "e", de, 1.0)};
}

struct VertexFitOptions {
  double r = 0.05;        ///< common fitting radius
  int max_vertices = 64;  ///< evenly subsampled along the boundary
  double m = 0.0;
  double shrink = 0.0;
  int resolution = 16;
  Box window;             ///< only vertices inside
  FitOptions fit;
};

/// Per-vertex two-plane fits at the tp vertices of γ⁺ in the window.
inline std::vector<VertexFit> fit_tp_vertices(const ScalarField& u, const FreeBoundary& fb, const PhaseParams& p,
                                              const VertexFitOptions& o) {
  std::vector<Vec2> pts;
  fb.for_each_vertex([&](int curve, std::size_t, std::size_t, const FbVertex& v) {
    if (curve > 0 && v.tag == FbTag::tp && o.window.contains(v.x) &&
        boundary_distance(u.grid(), v.x) >= o.r * (1 + 1e-9))
      pts.push_back(v.x);
  });
  std::vector<VertexFit> out;
  if (pts.empty()) return out;
  const std::size_t n = std::min<std::size_t>(pts.size(), static_cast<std::size_t>(std::max(1, o.max_vertices)));
  for (std::size_t k = 0; k < n; ++k) {
    const Vec2 x = pts[k * pts.size() / n];
    const LocalField ur = rescale(u, x, o.r, RescaleOptions{o.resolution, 1.0, o.shrink});
    out.push_back({x, fit_two_plane(ur, p, x.x2 + o.m, o.fit)});
  }
  return out;
}

// ------------------------------------------------------------------ plotting

/// Minimal SVG line plot; log axes take log10 of positive values only.
inline void write_line_plot_svg(const std::string& path, const std::string& title,
                                const std::vector<std::pair<std::string, std::vector<std::pair<double, double>>>>& series,
                                bool logx, bool logy) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  auto tx = [&](double v) { return logx ? std::log10(v) : v; };
  auto ty = [&](double v) { return logy ? std::log10(v) : v; };
  auto ok = [&](double x, double y) {
    return std::isfinite(x) && std::isfinite(y) && (!logx || x > 0) && (!logy || y > 0);
  };
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& [name, pts] : series)
    for (auto [x, y] : pts)
      if (ok(x, y)) x0 = std::min(x0, tx(x)), x1 = std::max(x1, tx(x)), y0 = std::min(y0, ty(y)), y1 = std::max(y1, ty(y));
  if (!(x1 > x0)) x0 -= 1, x1 += 1;
  if (!(y1 > y0)) y0 -= 1, y1 += 1;
  const double W = 640, Hh = 400, pad = 50;
  auto px = [&](double x) { return pad + (tx(x) - x0) / (x1 - x0) * (W - 2 * pad); };
  auto py = [&](double y) { return Hh - pad - (ty(y) - y0) / (y1 - y0) * (Hh - 2 * pad); };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << Hh << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << pad << "\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">" << title << "</text>\n";
  os << "<rect x=\"" << pad << "\" y=\"" << pad << "\" width=\"" << W - 2 * pad << "\" height=\"" << Hh - 2 * pad
     << "\" fill=\"none\" stroke=\"black\"/>\n";
  os << "<text x=\"" << pad << "\" y=\"" << Hh - pad + 16 << "\" font-size=\"10\">" << format_double(logx ? std::pow(10, x0) : x0)
     << "</text><text x=\"" << W - pad - 60 << "\" y=\"" << Hh - pad + 16 << "\" font-size=\"10\">"
     << format_double(logx ? std::pow(10, x1) : x1) << "</text>\n";
  os << "<text x=\"4\" y=\"" << Hh - pad << "\" font-size=\"10\">" << format_double(logy ? std::pow(10, y0) : y0)
     << "</text><text x=\"4\" y=\"" << pad + 10 << "\" font-size=\"10\">" << format_double(logy ? std::pow(10, y1) : y1)
     << "</text>\n";
  std::size_t k = 0;
  for (const auto& [name, pts] : series) {
    const char* col = colors[k % 5];
    os << "<polyline fill=\"none\" stroke=\"" << col << "\" points=\"";
    for (auto [x, y] : pts)
      if (ok(x, y)) os << px(x) << ',' << py(y) << ' ';
    os << "\"/>\n<text x=\"" << W - pad - 120 << "\" y=\"" << pad + 16 * (k + 1) << "\" font-size=\"11\" fill=\"" << col
       << "\">" << name << "</text>\n";
    ++k;
  }
  os << "</svg>\n";
}

inline void write_flatness_svg(const FlatnessReport& rep, const std::string& path) {
  std::vector<std::pair<double, double>> pts;
  for (const auto& g : rep.rungs) pts.emplace_back(g.r, g.fit.eps);
  write_line_plot_svg(path, "flatness eps(r) at " + to_string(rep.x0), {{"eps", pts}}, true, true);
}

inline void write_acf_svg(const MonotonicityTrace& tr, const std::string& path) {
  std::vector<std::pair<double, double>> pts;
  for (const auto& s : tr.samples) pts.emplace_back(s.r, s.phi);
  write_line_plot_svg(path, "ACF phi(r), C0 = " + format_double(tr.C0), {{"phi", pts}}, false, false);
}

}  // namespace axibern
