#pragma once

/// Stratified profiles in x₂ and the shipped boundary-data scenarios.
///
/// With s = x₂ + m and σ = s² − m², a solution of L u = 0 depending on x₂ only
/// is affine in σ, and |u'| = 2|A|s when u = Aσ + B.

#include "axibern/minimize.hpp"

#include <map>

namespace axibern {

/// Exact minimizer of the energy among profiles u(x₂) on [0, x2_top] with
/// u(0) = −1 and u(x2_top) = U > 0.
class Profile1D {
 public:
  Profile1D(const PhaseParams& p, double m, double x2_top, double U) : p_(p), m_(m), top_(x2_top), U_(U) {
    p.validate();
    if (!(U > 0.0)) throw PreconditionError("profile top value must be positive");
    if (!(x2_top > 0.0) || m < 0.0) throw PreconditionError("profile needs x2_top > 0 and m >= 0");
    T_ = sigma(top_);
    const double Sa = 2.0 / p.lambda_minus;
    const double P = 2.0 * U / p.lambda_plus;
    if (Sa + P < T_) {
      cavity_ = true;
      sa_ = Sa;
      sb_ = T_ - P;
    } else {
      cavity_ = false;
      const double k = 0.25 * (p.lambda_plus * p.lambda_plus - p.lambda_minus * p.lambda_minus);
      auto gfun = [&](double S) { return U * U / ((T_ - S) * (T_ - S)) - 1.0 / (S * S) - k; };
      double lo = 0.0, hi = T_;
      for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid == lo || mid == hi) break;
        (gfun(mid) < 0.0 ? lo : hi) = mid;
      }
      sa_ = sb_ = 0.5 * (lo + hi);
    }
  }

  bool has_cavity() const { return cavity_; }
  double sigma(double x2) const { return (x2 + m_) * (x2 + m_) - m_ * m_; }
  double height(double sig) const { return std::sqrt(sig + m_ * m_) - m_; }
  /// Upper edge of the minus phase and lower edge of the plus phase (equal without cavity).
  double lower_interface() const { return height(sa_); }
  double upper_interface() const { return height(sb_); }
  double minus_slope() const { return 1.0 / sa_; }       // u = −1 + σ/σ_a
  double plus_slope() const { return U_ / (T_ - sb_); }  // u = U − (T − σ)·B

  double operator()(double x2) const {
    const double sg = sigma(x2);
    if (sg <= sa_) return -1.0 + sg / sa_;
    if (sg >= sb_) return U_ - (T_ - sg) * U_ / (T_ - sb_);
    return 0.0;
  }

  /// Energy per unit length in x₁.
  double energy() const {
    const double P = T_ - sb_;
    return 2.0 / sa_ + 0.5 * p_.lambda_minus * p_.lambda_minus * sa_ + 2.0 * U_ * U_ / P +
           0.5 * p_.lambda_plus * p_.lambda_plus * P;
  }

 private:
  PhaseParams p_;
  double m_, top_, U_;
  double T_ = 0.0, sa_ = 0.0, sb_ = 0.0;
  bool cavity_ = false;
};

/// Parameters shared by the shipped scenarios; every field is configurable.
struct ScenarioParams {
  std::string name = "stratified";
  double x1_lo = 0.0, x1_hi = 1.0, x2_top = 1.0;
  double h = 1.0 / 64;
  PhaseParams phase{6.0, 5.0};
  double m = 1e-3;
  double delta0_cells = 0.5;   ///< phase threshold δ₀ = delta0_cells · λ₊ (x2_top + m) h
  double u_top = 1.2;          ///< stratified: constant top value
  double u_left = 1.2;         ///< tilted: top value at x1_lo
  double u_right = 2.6;        ///< tilted: top value at x1_hi
  double u_outer = 2.6;        ///< cavity: top value at the lateral sides
  double u_inner = 0.8;        ///< cavity: top value at the centre
};

inline const std::vector<std::string>& field_scenarios() {
  static const std::vector<std::string> names{"stratified", "tilted", "cavity"};
  return names;
}

struct Scenario {
  ScenarioParams params;
  GridSpec grid;
  BoundaryData data;
  std::function<double(double)> top;  ///< top value as a function of x1

  /// Half a cell times the largest Bernoulli slope, so that a node next to a
  /// one-phase boundary can place the ±δ₀ crossing anywhere inside its cell.
  double delta0() const {
    return params.delta0_cells * params.phase.lambda_plus * (params.x2_top + params.m) * params.h;
  }
};

inline Scenario make_scenario(const ScenarioParams& sp) {
  sp.phase.validate();
  Scenario sc;
  sc.params = sp;
  sc.grid = GridSpec::rectangle(sp.x1_lo, sp.x1_hi, 0.0, sp.x2_top, sp.h);
  const double L = sp.x1_hi - sp.x1_lo;
  if (sp.name == "stratified") {
    sc.top = [u = sp.u_top](double) { return u; };
  } else if (sp.name == "tilted") {
    sc.top = [sp, L](double x1) { return sp.u_left + (sp.u_right - sp.u_left) * (x1 - sp.x1_lo) / L; };
  } else if (sp.name == "cavity") {
    sc.top = [sp, L](double x1) {
      const double s = std::sin(std::numbers::pi * (x1 - sp.x1_lo) / L);
      return sp.u_outer - (sp.u_outer - sp.u_inner) * s * s;
    };
  } else {
    throw PreconditionError("unknown scenario '" + sp.name + "'");
  }
  for (double x1 : {sp.x1_lo, 0.5 * (sp.x1_lo + sp.x1_hi), sp.x1_hi})
    if (!(sc.top(x1) > 0.0)) throw PreconditionError("scenario top value must be positive");
  const Profile1D left(sp.phase, sp.m, sp.x2_top, sc.top(sp.x1_lo));
  const Profile1D right(sp.phase, sp.m, sp.x2_top, sc.top(sp.x1_hi));
  const double x1_lo = sp.x1_lo, x1_hi = sp.x1_hi, top_y = sp.x2_top;
  auto top = sc.top;
  sc.data.outer = [=](double x1, double x2) {
    if (x2 >= top_y - 1e-14) return top(x1);
    if (x1 <= x1_lo + 1e-14) return left(x2);
    if (x1 >= x1_hi - 1e-14) return right(x2);
    return 0.0;
  };
  return sc;
}

/// Solver settings for a scenario: its m and δ₀, and an eps schedule that
/// decreases by decades from 0.1 to a last stage of δ₀/10 (relative units).
inline SolveConfig scenario_solve_config(const Scenario& sc, SolveConfig base = {}) {
  base.m = sc.params.m;
  base.delta0 = sc.delta0();
  double scale = 0.0;
  for (int i = 0; i < sc.grid.n1(); ++i) scale = std::max(scale, std::abs(sc.top(sc.grid.x1(i))));
  scale = std::max(scale, std::abs(sc.data.axis_value));
  const double last = 0.1 * sc.delta0() / scale;
  base.eps_schedule.clear();
  for (double e = 0.1; e > 1.0001 * last; e /= 10.0) base.eps_schedule.push_back(e);
  base.eps_schedule.push_back(last);
  return base;
}

}  // namespace axibern
