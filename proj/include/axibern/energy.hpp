#pragma once

/// The two-phase energy
///   J(u) = ∫ |∇u|²/(x₂+m) + (x₂+m)(λ₊² 1{u>δ₀} + λ₋² 1{u<−δ₀}),
/// its smoothed surrogate, and phase-volume statistics.
///
/// The Dirichlet part is built from the edge form Σ c_e (u_a − u_b)²/s_e with
/// s_e the value of x₂+m at the edge midpoint; the same form is what the
/// interior solver discretizes. Two measures:
///   `nodal`   edge form, and trapezoid weights times the indicator at nodes;
///   `subcell` the energy of the band-shrunk P1 interpolant on both diagonal
///             splits: each triangle carries its share of the edge form times
///             the area fraction in {|u| > δ₀}, plus the exact phase areas.
/// On cells outside the band the two measures share the Dirichlet term.

#include "axibern/grid.hpp"

#include <array>
#include <optional>

namespace axibern {

struct PhaseParams {
  double lambda_plus = 1.0;
  double lambda_minus = 1.0;
  double rho_plus = 1.0;
  double rho_minus = 1.0;

  void validate() const {
    if (!(lambda_minus > 0.0) || !std::isfinite(lambda_plus))
      throw PreconditionError("lambda_minus must be positive");
    if (!(lambda_plus >= lambda_minus))
      throw PreconditionError("phase constants must satisfy lambda_plus >= lambda_minus > 0");
    if (!(rho_plus > 0.0) || !(rho_minus > 0.0)) throw PreconditionError("densities must be positive");
  }
};

enum class PhaseMeasure { nodal, subcell };

struct RegularizationParams {
  double eps = 1e-3;
  double m = 0.0;
  std::optional<double> delta0;  ///< unset: 1e-3 * max|u|
  PhaseMeasure measure = PhaseMeasure::nodal;
};

inline double resolve_delta0(const RegularizationParams& reg, const ScalarField& u) {
  const double d = reg.delta0 ? *reg.delta0 : 1e-3 * u.max_abs();
  if (!(d >= 0.0)) throw PreconditionError("phase threshold must be non-negative");
  return d;
}

/// Clamped cubic smoothstep rising from 0 at t = 0 to 1 at t = 1.
inline double smoothstep(double t) {
  if (t <= 0.0) return 0.0;
  if (t >= 1.0) return 1.0;
  return t * t * (3.0 - 2.0 * t);
}
inline double smoothstep_prime(double t) {
  if (t <= 0.0 || t >= 1.0) return 0.0;
  return 6.0 * t * (1.0 - t);
}

namespace detail {

/// Fraction of a P1 triangle where the linear interpolant of (v0,v1,v2)
/// exceeds c, with its derivatives with respect to the three values.
inline double tri_fraction_above(const std::array<double, 3>& v, double c, std::array<double, 3>* dv) {
  std::array<int, 3> o{0, 1, 2};
  if (v[o[0]] > v[o[1]]) std::swap(o[0], o[1]);
  if (v[o[1]] > v[o[2]]) std::swap(o[1], o[2]);
  if (v[o[0]] > v[o[1]]) std::swap(o[0], o[1]);
  const double a = v[o[0]], b = v[o[1]], d = v[o[2]];
  if (dv) *dv = {0.0, 0.0, 0.0};
  if (c < a) return 1.0;
  if (c >= d) return 0.0;
  const double da = d - a;
  if (c <= b) {
    // a <= c <= b, b > a strictly unless c == a
    if (b == a) return 1.0;
    const double r = (c - a) / (b - a);
    const double G = r * (c - a) / da;
    if (dv) {
      (*dv)[o[0]] = -(-2.0 * r / da + r * r / da + G / da);
      (*dv)[o[1]] = r * r / da;
      (*dv)[o[2]] = G / da;
    }
    return 1.0 - G;
  }
  const double q = (d - c) / (d - b);
  const double F = q * (d - c) / da;
  if (dv) {
    (*dv)[o[0]] = F / da;
    (*dv)[o[1]] = q * q / da;
    (*dv)[o[2]] = 2.0 * q / da - F / da - q * q / da;
  }
  return F;
}

/// Smoothed (eps > 0) or sharp (eps == 0) fraction of a triangle in {u > δ₀}.
/// The smoothed value is ∫ F(c) ρ(c) dc with F the sharp fraction above level
/// c and ρ the smoothstep density on [δ₀, δ₀+eps]; F is piecewise quadratic in
/// c with breaks at the vertex values, so 3-point Gauss on each piece is exact.
inline double tri_phase_fraction(const std::array<double, 3>& v, double delta0, double eps,
                                 std::array<double, 3>* dv) {
  const double lo = std::min({v[0], v[1], v[2]});
  const double hi = std::max({v[0], v[1], v[2]});
  if (dv) *dv = {0.0, 0.0, 0.0};
  if (lo >= delta0 + eps && (eps > 0.0 || lo > delta0)) return 1.0;
  if (hi <= delta0) return 0.0;
  if (eps == 0.0) return tri_fraction_above(v, delta0, dv);
  if (hi - lo <= 1e-12 * eps) {
    // flat triangle: every vertex carries a third of the density
    const double t = ((v[0] + v[1] + v[2]) / 3.0 - delta0) / eps;
    if (dv) dv->fill(smoothstep_prime(t) / (3.0 * eps));
    return smoothstep(t);
  }
  const double top = delta0 + eps;
  // F = 1 below the smallest value
  double acc = lo > delta0 ? smoothstep((std::min(lo, top) - delta0) / eps) : 0.0;
  std::array<double, 3> sv = v;
  std::sort(sv.begin(), sv.end());
  static const double gx[3] = {-std::sqrt(0.6), 0.0, std::sqrt(0.6)};
  static const double gw[3] = {5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0};
  std::array<double, 3> tmp{};
  for (int piece = 0; piece < 2; ++piece) {
    const double a = std::max(sv[piece], delta0);
    const double b = std::min(sv[piece + 1], top);
    if (!(b > a)) continue;
    const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
    for (int q = 0; q < 3; ++q) {
      const double c = mid + half * gx[q];
      const double w = gw[q] * half * smoothstep_prime((c - delta0) / eps) / eps;
      acc += w * tri_fraction_above(v, c, dv ? &tmp : nullptr);
      if (dv)
        for (int k = 0; k < 3; ++k) (*dv)[k] += w * tmp[k];
    }
  }
  return acc;
}

}  // namespace detail

struct EnergyValue {
  double dirichlet = 0.0;
  double phase = 0.0;
  double total() const { return dirichlet + phase; }
};

/// Precomputed evaluator of the sharp or smoothed energy on a fixed grid.
/// The region is the union of grid cells whose four corners are all in the mask.
class EnergyModel {
 public:
  EnergyModel(const GridSpec& g, const PhaseParams& p, double m, double delta0, PhaseMeasure measure,
              const NodeMask* mask = nullptr)
      : g_(g), p_(p), m_(m), delta0_(delta0), measure_(measure) {
    p.validate();
    if (m < 0.0) throw PreconditionError("axis offset m must be non-negative");
    if (delta0 < 0.0) throw PreconditionError("phase threshold must be non-negative");
    if (mask && mask->size() != g.size()) throw PreconditionError("mask must cover every grid node");
    const int n1 = g.n1(), n2 = g.n2();
    cell_in_.assign(static_cast<std::size_t>(n1 - 1) * (n2 - 1), 0);
    for (int j = 0; j + 1 < n2; ++j)
      for (int i = 0; i + 1 < n1; ++i) {
        bool in = true;
        if (mask)
          in = (*mask)[g.index(i, j)] && (*mask)[g.index(i + 1, j)] && (*mask)[g.index(i, j + 1)] &&
               (*mask)[g.index(i + 1, j + 1)];
        cell_in_[cell(i, j)] = in;
      }
    node_weight_.assign(g.size(), 0.0);
    const double q = 0.25 * g.h() * g.h();
    for (int j = 0; j + 1 < n2; ++j)
      for (int i = 0; i + 1 < n1; ++i)
        if (cell_in_[cell(i, j)]) {
          node_weight_[g.index(i, j)] += q;
          node_weight_[g.index(i + 1, j)] += q;
          node_weight_[g.index(i, j + 1)] += q;
          node_weight_[g.index(i + 1, j + 1)] += q;
        }
    // Edge weights: half per bordering in-region cell.
    hweight_.assign(g.size(), 0.0);
    vweight_.assign(g.size(), 0.0);
    for (int j = 0; j < n2; ++j)
      for (int i = 0; i + 1 < n1; ++i) {
        double w = 0.0;
        if (j > 0 && cell_in_[cell(i, j - 1)]) w += 0.5;
        if (j + 1 < n2 && cell_in_[cell(i, j)]) w += 0.5;
        hweight_[g.index(i, j)] = w;
      }
    for (int j = 0; j + 1 < n2; ++j)
      for (int i = 0; i < n1; ++i) {
        double w = 0.0;
        if (i > 0 && cell_in_[cell(i - 1, j)]) w += 0.5;
        if (i + 1 < n1 && cell_in_[cell(i, j)]) w += 0.5;
        vweight_[g.index(i, j)] = w;
      }
  }

  const GridSpec& grid() const { return g_; }
  double delta0() const { return delta0_; }
  double m() const { return m_; }
  PhaseMeasure measure() const { return measure_; }

  /// Weight of the horizontal edge (i,j)-(i+1,j) divided by x₂+m (0 if absent).
  double hcoef(int i, int j) const {
    const double w = hweight_[g_.index(i, j)];
    const double s = g_.x2(j) + m_;
    return (w == 0.0 || s <= 0.0) ? 0.0 : w / s;
  }
  /// Weight of the vertical edge (i,j)-(i,j+1) divided by the midpoint x₂+m.
  double vcoef(int i, int j) const {
    const double w = vweight_[g_.index(i, j)];
    const double s = g_.x2(j) + 0.5 * g_.h() + m_;
    return w == 0.0 ? 0.0 : w / s;
  }

  double dirichlet(const std::vector<double>& u, std::vector<double>* grad) const {
    const int n1 = g_.n1(), n2 = g_.n2();
    double acc = 0.0;
    for (int j = 0; j < n2; ++j) {
      const double s = g_.x2(j) + m_;
      for (int i = 0; i + 1 < n1; ++i) {
        const std::size_t a = g_.index(i, j);
        const double w = hweight_[a];
        if (w == 0.0) continue;
        const double d = u[a + 1] - u[a];
        if (s <= 0.0) {
          if (d != 0.0)
            throw DegenerateAxisError("nonzero tangential difference on x2 = 0 requires a positive axis offset m");
          continue;
        }
        acc += w * d * d / s;
        if (grad) {
          (*grad)[a + 1] += 2.0 * w * d / s;
          (*grad)[a] -= 2.0 * w * d / s;
        }
      }
    }
    for (int j = 0; j + 1 < n2; ++j) {
      const double s = g_.x2(j) + 0.5 * g_.h() + m_;
      for (int i = 0; i < n1; ++i) {
        const std::size_t a = g_.index(i, j);
        const double w = vweight_[a];
        if (w == 0.0) continue;
        const std::size_t b = a + static_cast<std::size_t>(n1);
        const double d = u[b] - u[a];
        acc += w * d * d / s;
        if (grad) {
          (*grad)[b] += 2.0 * w * d / s;
          (*grad)[a] -= 2.0 * w * d / s;
        }
      }
    }
    return acc;
  }

  /// Phase term of the nodal measure; eps == 0 gives sharp indicators, eps > 0
  /// the smoothstep surrogate.
  double phase(const std::vector<double>& u, double eps, std::vector<double>* grad) const {
    if (measure_ != PhaseMeasure::nodal) throw PreconditionError("phase() is defined for the nodal measure");
    return phase_nodal(u, eps, grad);
  }

  /// Total energy of the cells [i0,i1] x [j0,j1] (subcell measure), or of the
  /// nodes of those cells together with their edges (nodal). Only differences
  /// are meaningful; used for local updates.
  double local_energy(const std::vector<double>& u, int i0, int i1, int j0, int j1, double eps) const {
    double acc = 0.0;
    if (measure_ == PhaseMeasure::subcell) {
      EnergyValue e;
      for (int j = std::max(0, j0); j <= std::min(g_.n2() - 2, j1); ++j)
        for (int i = std::max(0, i0); i <= std::min(g_.n1() - 2, i1); ++i)
          if (cell_in_[cell(i, j)]) cell_energy(u, i, j, eps, nullptr, e);
      return e.total();
    }
    const double lp2 = p_.lambda_plus * p_.lambda_plus;
    const double lm2 = p_.lambda_minus * p_.lambda_minus;
    for (int j = std::max(0, j0); j <= std::min(g_.n2() - 1, j1 + 1); ++j)
      for (int i = std::max(0, i0); i <= std::min(g_.n1() - 1, i1 + 1); ++i) {
        const std::size_t k = g_.index(i, j);
        const double w = node_weight_[k], s = g_.x2(j) + m_, v = u[k];
        if (eps == 0.0)
          acc += w * s * (v > delta0_ ? lp2 : (v < -delta0_ ? lm2 : 0.0));
        else
          acc += w * s * (lp2 * smoothstep((v - delta0_) / eps) + lm2 * smoothstep((-v - delta0_) / eps));
        if (i + 1 <= std::min(g_.n1() - 1, i1 + 1)) acc += hcoef(i, j) * sq(u[k + 1] - v);
        if (j + 1 <= std::min(g_.n2() - 1, j1 + 1)) acc += vcoef(i, j) * sq(u[k + static_cast<std::size_t>(g_.n1())] - v);
      }
    return acc;
  }

  EnergyValue evaluate(const std::vector<double>& u, double eps, std::vector<double>* grad) const {
    if (u.size() != g_.size()) throw PreconditionError("field does not match the energy grid");
    if (grad) grad->assign(g_.size(), 0.0);
    EnergyValue e;
    if (measure_ == PhaseMeasure::nodal) {
      e.dirichlet = dirichlet(u, grad);
      e.phase = phase_nodal(u, eps, grad);
      return e;
    }
    check_axis_row(u);
    for (int j = 0; j + 1 < g_.n2(); ++j)
      for (int i = 0; i + 1 < g_.n1(); ++i)
        if (cell_in_[cell(i, j)]) cell_energy(u, i, j, eps, grad, e);
    return e;
  }

 private:
  static double sq(double a) { return a * a; }

  std::size_t cell(int i, int j) const {
    return static_cast<std::size_t>(j) * static_cast<std::size_t>(g_.n1() - 1) + static_cast<std::size_t>(i);
  }

  void check_axis_row(const std::vector<double>& u) const {
    for (int j = 0; j < g_.n2() && g_.x2(j) + m_ <= 0.0; ++j)
      for (int i = 0; i + 1 < g_.n1(); ++i) {
        const std::size_t a = g_.index(i, j);
        if (hweight_[a] != 0.0 && u[a + 1] != u[a])
          throw DegenerateAxisError("nonzero tangential difference on x2 = 0 requires a positive axis offset m");
      }
  }

  double phase_nodal(const std::vector<double>& u, double eps, std::vector<double>* grad) const {
    const double lp2 = p_.lambda_plus * p_.lambda_plus;
    const double lm2 = p_.lambda_minus * p_.lambda_minus;
    double acc = 0.0;
    for (int j = 0; j < g_.n2(); ++j) {
      const double s = g_.x2(j) + m_;
      for (int i = 0; i < g_.n1(); ++i) {
        const std::size_t k = g_.index(i, j);
        const double w = node_weight_[k];
        if (w == 0.0) continue;
        const double v = u[k];
        if (eps == 0.0) {
          acc += w * s * (v > delta0_ ? lp2 : (v < -delta0_ ? lm2 : 0.0));
        } else {
          const double tp = (v - delta0_) / eps;
          const double tm = (-v - delta0_) / eps;
          acc += w * s * (lp2 * smoothstep(tp) + lm2 * smoothstep(tm));
          if (grad) (*grad)[k] += w * s * (lp2 * smoothstep_prime(tp) - lm2 * smoothstep_prime(tm)) / eps;
        }
      }
    }
    return acc;
  }

  // Subcell energy of one cell, accumulated into e.
  void cell_energy(const std::vector<double>& u, int i, int j, double eps, std::vector<double>* grad,
                   EnergyValue& e) const {
    const double lp2 = p_.lambda_plus * p_.lambda_plus;
    const double lm2 = p_.lambda_minus * p_.lambda_minus;
    const double h = g_.h();
    const double tri_w = 0.5 * 0.5 * h * h;  // two splits averaged, each triangle h²/2
    const std::size_t n1 = static_cast<std::size_t>(g_.n1());
    // Local corners: 0=(i,j) 1=(i+1,j) 2=(i,j+1) 3=(i+1,j+1). Each triangle has
    // one horizontal and one vertical leg on the cell boundary.
    static constexpr int tris[4][3] = {{0, 1, 3}, {0, 3, 2}, {0, 1, 2}, {1, 3, 2}};
    static constexpr int hleg[4][2] = {{0, 1}, {2, 3}, {0, 1}, {2, 3}};
    static constexpr int vleg[4][2] = {{1, 3}, {0, 2}, {0, 2}, {1, 3}};
    static constexpr double cy[4] = {1.0 / 3.0, 2.0 / 3.0, 1.0 / 3.0, 2.0 / 3.0};
    const std::size_t k0 = g_.index(i, j);
    const std::array<std::size_t, 4> ks{k0, k0 + 1, k0 + n1, k0 + n1 + 1};
    const std::array<double, 4> cv{u[ks[0]], u[ks[1]], u[ks[2]], u[ks[3]]};
    const double lo = std::min({cv[0], cv[1], cv[2], cv[3]});
    const double hi = std::max({cv[0], cv[1], cv[2], cv[3]});
    const double ybase = g_.x2(j) + m_;
    const double sv = ybase + 0.5 * h;
    const double ch[2] = {ybase > 0.0 ? 0.25 / ybase : 0.0, 0.25 / (ybase + h)};  // bottom, top rows
    const double cvt = 0.25 / sv;
    if (hi <= delta0_ && lo >= -delta0_) return;
    std::array<double, 3> dvp{}, dvm{}, vv{}, nv{};
    for (int t = 0; t < 4; ++t) {
      const int row = hleg[t][0] == 0 ? 0 : 1;
      const double dh = cv[hleg[t][1]] - cv[hleg[t][0]];
      const double dvv = cv[vleg[t][1]] - cv[vleg[t][0]];
      const double D = ch[row] * dh * dh + cvt * dvv * dvv;
      const double s = ybase + cy[t] * h;
      double fp, fm;
      if (lo > delta0_ + eps) {
        fp = 1.0;
        fm = 0.0;
        dvp.fill(0.0);
        dvm.fill(0.0);
      } else if (hi < -delta0_ - eps) {
        fp = 0.0;
        fm = 1.0;
        dvp.fill(0.0);
        dvm.fill(0.0);
      } else {
        for (int c = 0; c < 3; ++c) {
          vv[c] = cv[tris[t][c]];
          nv[c] = -vv[c];
        }
        fp = detail::tri_phase_fraction(vv, delta0_, eps, grad ? &dvp : nullptr);
        fm = detail::tri_phase_fraction(nv, delta0_, eps, grad ? &dvm : nullptr);
      }
      const double W = fp + fm;
      e.dirichlet += D * W;
      e.phase += tri_w * s * (lp2 * fp + lm2 * fm);
      if (grad) {
        for (int c = 0; c < 3; ++c)
          (*grad)[ks[tris[t][c]]] += (D + tri_w * s * lp2) * dvp[c] - (D + tri_w * s * lm2) * dvm[c];
        const double gh = 2.0 * ch[row] * dh * W, gv = 2.0 * cvt * dvv * W;
        (*grad)[ks[hleg[t][1]]] += gh;
        (*grad)[ks[hleg[t][0]]] -= gh;
        (*grad)[ks[vleg[t][1]]] += gv;
        (*grad)[ks[vleg[t][0]]] -= gv;
      }
    }
  }

  GridSpec g_;
  PhaseParams p_;
  double m_;
  double delta0_;
  PhaseMeasure measure_;
  std::vector<std::uint8_t> cell_in_;
  std::vector<double> node_weight_;
  std::vector<double> hweight_;
  std::vector<double> vweight_;
};

/// Sharp energy over the cells whose corners are all in mask.
inline double eval_functional(const ScalarField& u, const PhaseParams& p, const RegularizationParams& reg,
                              const NodeMask& mask) {
  EnergyModel model(u.grid(), p, reg.m, resolve_delta0(reg, u), reg.measure, &mask);
  return model.evaluate(u.values(), 0.0, nullptr).total();
}

inline double eval_functional(const ScalarField& u, const PhaseParams& p, const RegularizationParams& reg) {
  return eval_functional(u, p, reg, NodeMask(u.grid().size(), 1));
}

struct RegularizedValue {
  double value = 0.0;
  std::vector<double> gradient;
};

inline RegularizedValue eval_regularized(const ScalarField& u, const PhaseParams& p, const RegularizationParams& reg,
                                         const NodeMask& mask) {
  if (!(reg.eps > 0.0)) throw PreconditionError("smoothed evaluation needs eps > 0");
  EnergyModel model(u.grid(), p, reg.m, resolve_delta0(reg, u), reg.measure, &mask);
  RegularizedValue r;
  r.value = model.evaluate(u.values(), reg.eps, &r.gradient).total();
  return r;
}

inline RegularizedValue eval_regularized(const ScalarField& u, const PhaseParams& p,
                                         const RegularizationParams& reg) {
  return eval_regularized(u, p, reg, NodeMask(u.grid().size(), 1));
}

struct PhaseVolumes {
  double plus = 0.0;
  double minus = 0.0;
  double zero = 0.0;
};

/// Cell-counted phase areas, classifying each cell by the mean of its corners.
/// With a radius, only cells whose centers lie in B_radius(center) count.
inline PhaseVolumes phase_volumes(const ScalarField& u, double delta0, std::optional<Vec2> center = std::nullopt,
                                  double radius = 0.0) {
  const GridSpec& g = u.grid();
  const double h = g.h();
  PhaseVolumes pv;
  int j0 = 0, j1 = g.n2() - 2, i0 = 0, i1 = g.n1() - 2;
  if (center) {
    i0 = std::max(0, static_cast<int>(std::floor((center->x1 - radius - g.x1_lo()) / h)) - 1);
    i1 = std::min(g.n1() - 2, static_cast<int>(std::ceil((center->x1 + radius - g.x1_lo()) / h)) + 1);
    j0 = std::max(0, static_cast<int>(std::floor((center->x2 - radius - g.x2_lo()) / h)) - 1);
    j1 = std::min(g.n2() - 2, static_cast<int>(std::ceil((center->x2 + radius - g.x2_lo()) / h)) + 1);
  }
  for (int j = j0; j <= j1; ++j)
    for (int i = i0; i <= i1; ++i) {
      if (center) {
        const Vec2 c{g.x1(i) + 0.5 * h, g.x2(j) + 0.5 * h};
        if (norm(c - *center) > radius) continue;
      }
      const double v = 0.25 * (u(i, j) + u(i + 1, j) + u(i, j + 1) + u(i + 1, j + 1));
      if (v > delta0)
        pv.plus += h * h;
      else if (v < -delta0)
        pv.minus += h * h;
      else
        pv.zero += h * h;
    }
  return pv;
}

}  // namespace axibern
