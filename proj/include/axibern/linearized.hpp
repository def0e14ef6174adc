#pragma once

/// Two-membrane and transmission problems on B_{1/2} split by {x·e = 0},
/// interface classification and the pointwise decay verifier.
///
/// The grid is aligned with e: a node (i, j) sits at s = x·e^⊥ = ih − 1/2,
/// t = x·e = jh − 1/2 with e^⊥ = (e₂, −e₁), so the interface is the row
/// j = N/2. Interface nodes carry two unknowns, v₊ and v₋. Nodes next to the
/// circle use the Shortley–Weller stencil with the data at the line/circle
/// intersection.

#include "axibern/grid.hpp"

#include <Eigen/SparseCore>
#include <Eigen/SparseLU>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

namespace axibern {

using DiscData = std::function<double(Vec2)>;

struct MembraneProblem {
  double lambda_plus = 1.0, lambda_minus = 1.0, l = 0.0;
  DiscData data_plus, data_minus;  ///< Dirichlet data on the two arcs of ∂B_{1/2}
  Vec2 e{0.0, 1.0};

  void validate() const {
    if (!(lambda_plus > 0.0) || !(lambda_minus > 0.0) || !std::isfinite(lambda_plus) || !std::isfinite(lambda_minus))
      throw PreconditionError("membrane weights must be positive");
    if (!(l >= 0.0) || !std::isfinite(l)) throw PreconditionError("membrane slope l must be finite and non-negative");
    if (!data_plus || !data_minus) throw PreconditionError("membrane problem needs data on both arcs");
  }
};

struct TransmissionProblem {
  double alpha = 1.0, beta = 1.0;
  DiscData data_plus, data_minus;
  Vec2 e{0.0, 1.0};

  void validate() const {
    if (!(alpha > 0.0) || !(beta > 0.0) || !std::isfinite(alpha) || !std::isfinite(beta))
      throw PreconditionError("transmission weights must be positive");
    if (!data_plus || !data_minus) throw PreconditionError("transmission problem needs data on both arcs");
  }
};

/// Node values on the e-aligned grid; NaN where a half does not own the node.
class HalfDiscField {
 public:
  HalfDiscField() = default;
  HalfDiscField(int resolution, Vec2 e) : n_(resolution) {
    if (resolution < 32 || resolution % 2 != 0)
      throw PreconditionError("resolution must be even and at least 32 across the diameter");
    if (!(norm(e) > 0.0)) throw PreconditionError("interface direction must be non-zero");
    e_ = (1.0 / norm(e)) * e;
    const std::size_t sz = static_cast<std::size_t>(n_ + 1) * static_cast<std::size_t>(n_ + 1);
    plus_.assign(sz, std::numeric_limits<double>::quiet_NaN());
    minus_.assign(sz, std::numeric_limits<double>::quiet_NaN());
  }

  /// Samples a pair of functions on the owned nodes.
  static HalfDiscField from_functions(int resolution, Vec2 e, const DiscData& fp, const DiscData& fm) {
    HalfDiscField f(resolution, e);
    for (int j = 0; j <= f.n_; ++j)
      for (int i = 0; i <= f.n_; ++i) {
        if (!f.inside(i, j)) continue;
        if (j >= f.mid()) f.plus(i, j) = fp(f.point(i, j));
        if (j <= f.mid()) f.minus(i, j) = fm(f.point(i, j));
      }
    return f;
  }

  int resolution() const { return n_; }
  int mid() const { return n_ / 2; }
  double h() const { return 1.0 / n_; }
  Vec2 e() const { return e_; }
  Vec2 e_perp() const { return {e_.x2, -e_.x1}; }
  double s(int i) const { return i * h() - 0.5; }
  double t(int j) const { return j * h() - 0.5; }
  Vec2 point(int i, int j) const { return frame_point(s(i), t(j)); }
  Vec2 frame_point(double s, double t) const { return s * e_perp() + t * e_; }
  /// Strictly inside B_{1/2}.
  bool inside(int i, int j) const { return s(i) * s(i) + t(j) * t(j) < 0.25 - 1e-12; }

  double& plus(int i, int j) { return plus_[idx(i, j)]; }
  double plus(int i, int j) const { return plus_[idx(i, j)]; }
  double& minus(int i, int j) { return minus_[idx(i, j)]; }
  double minus(int i, int j) const { return minus_[idx(i, j)]; }

  /// Writes `x1,x2,vplus,vminus` for every node inside the disc.
  void write_csv(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path);
    os << "x1,x2,vplus,vminus\n";
    for (int j = 0; j <= n_; ++j)
      for (int i = 0; i <= n_; ++i) {
        if (!inside(i, j)) continue;
        const Vec2 x = point(i, j);
        os << format_double(x.x1) << ',' << format_double(x.x2) << ',' << format_double(plus(i, j)) << ','
           << format_double(minus(i, j)) << '\n';
      }
  }

 private:
  std::size_t idx(int i, int j) const {
    return static_cast<std::size_t>(j) * static_cast<std::size_t>(n_ + 1) + static_cast<std::size_t>(i);
  }
  int n_ = 0;
  Vec2 e_{0.0, 1.0};
  std::vector<double> plus_, minus_;
};

struct InterfaceClassification {
  std::vector<double> separated;  ///< s = x·e^⊥ of the nodes in 𝒥 = {v₊ < v₋}
  std::vector<double> contact;    ///< s of the nodes in 𝒞 = {v₊ = v₋}
  double gap_tol = 0.0;
};

struct InterfaceResidual {
  double max_gap = 0.0;           ///< max |v₊ − v₋| on 𝒞
  double max_flux_mismatch = 0.0; ///< max |w₊D_e v₊ − w₋D_e v₋| on 𝒞
  double max_equation = 0.0;      ///< max |λ±²D_e v± + l| on 𝒥
  double max_violation = 0.0;     ///< max of (v₊ − v₋ − gap)⁺ and (−λ±²D_e v± − l)⁺
  double complementarity() const {
    return std::max({max_gap, max_flux_mismatch, max_equation, max_violation});
  }
};

struct MembraneSolution {
  HalfDiscField v;
  InterfaceClassification interface;
  InterfaceResidual residual;
  int iterations = 0;
  bool converged = false;
  std::string message;
};

struct TransmissionSolution {
  HalfDiscField v;
  InterfaceResidual residual;
};

namespace detail {

/// Assembles and solves the linear system of either problem. `contact[k]`
/// selects the interface rows of node k: v₊ = v₋ with matched weighted
/// fluxes, or the two Neumann rows w±D_e v± + l = 0.
class HalfDiscSystem {
 public:
  HalfDiscSystem(int resolution, Vec2 e, double w_plus, double w_minus, double l, const DiscData& fp,
                 const DiscData& fm)
      : f_(resolution, e), wp_(w_plus), wm_(w_minus), l_(l), fp_(fp), fm_(fm) {
    const int n = f_.resolution();
    map_p_.assign(static_cast<std::size_t>((n + 1) * (n + 1)), -1);
    map_m_.assign(map_p_.size(), -1);
    int next = 0;
    for (int j = 0; j <= n; ++j)
      for (int i = 0; i <= n; ++i) {
        if (!f_.inside(i, j)) continue;
        if (j >= f_.mid()) map_p_[id(i, j)] = next++;
        if (j <= f_.mid()) map_m_[id(i, j)] = next++;
      }
    size_ = next;
    for (int i = 0; i <= n; ++i)
      if (f_.inside(i, f_.mid())) iface_.push_back(i);
  }

  const std::vector<int>& interface_nodes() const { return iface_; }

  HalfDiscField solve(const std::vector<std::uint8_t>& contact) {
    const int n = f_.resolution(), mid = f_.mid();
    const double h = f_.h();
    std::vector<Eigen::Triplet<double>> trip;
    Eigen::VectorXd b = Eigen::VectorXd::Zero(size_);
    auto laplace_row = [&](int i, int j, bool plus) {
      const int row = (plus ? map_p_ : map_m_)[id(i, j)];
      const auto& map = plus ? map_p_ : map_m_;
      const DiscData& data = plus ? fp_ : fm_;
      const double s = f_.s(i), t = f_.t(j);
      // arms: +s, −s, +t, −t with lengths θh
      double len[4];
      int col[4];
      double val[4];
      const int di[4] = {1, -1, 0, 0}, dj[4] = {0, 0, 1, -1};
      for (int a = 0; a < 4; ++a) {
        const int ii = i + di[a], jj = j + dj[a];
        if (ii >= 0 && ii <= n && jj >= 0 && jj <= n && f_.inside(ii, jj) && map[id(ii, jj)] >= 0) {
          len[a] = h;
          col[a] = map[id(ii, jj)];
          val[a] = 0.0;
        } else {
          double ss = s, tt = t;
          if (a < 2)
            ss = di[a] * std::sqrt(std::max(0.0, 0.25 - t * t));
          else
            tt = dj[a] * std::sqrt(std::max(0.0, 0.25 - s * s));
          len[a] = std::max(std::abs(ss - s) + std::abs(tt - t), 1e-12 * h);
          col[a] = -1;
          val[a] = data(f_.frame_point(ss, tt));
        }
      }
      double diag = 0.0;
      for (int axis = 0; axis < 2; ++axis) {
        const int a = 2 * axis, c = 2 * axis + 1;
        const double k = 2.0 / (len[a] + len[c]);
        for (int arm : {a, c}) {
          const double coef = h * h * k / len[arm];
          diag += coef;
          if (col[arm] >= 0)
            trip.emplace_back(row, col[arm], -coef);
          else
            b(row) += coef * val[arm];
        }
      }
      trip.emplace_back(row, row, diag);
    };
    for (int j = 0; j <= n; ++j)
      for (int i = 0; i <= n; ++i) {
        if (!f_.inside(i, j) || j == mid) continue;
        laplace_row(i, j, j > mid);
      }
    // D_e v₊ ≈ (−3v₀ + 4v₁ − v₂)/(2h), D_e v₋ ≈ (3v₀ − 4v₋₁ + v₋₂)/(2h)
    for (std::size_t k = 0; k < iface_.size(); ++k) {
      const int i = iface_[k];
      const int p0 = map_p_[id(i, mid)], p1 = map_p_[id(i, mid + 1)], p2 = map_p_[id(i, mid + 2)];
      const int m0 = map_m_[id(i, mid)], m1 = map_m_[id(i, mid - 1)], m2 = map_m_[id(i, mid - 2)];
      if (p1 < 0 || p2 < 0 || m1 < 0 || m2 < 0) throw GeometryError("interface stencil leaves the disc");
      const double c = 0.5;  // (2h)⁻¹ scaled by h
      if (contact[k]) {
        trip.emplace_back(p0, p0, 1.0);
        trip.emplace_back(p0, m0, -1.0);
        trip.emplace_back(m0, p0, -3 * c * wp_);
        trip.emplace_back(m0, p1, 4 * c * wp_);
        trip.emplace_back(m0, p2, -c * wp_);
        trip.emplace_back(m0, m0, -3 * c * wm_);
        trip.emplace_back(m0, m1, 4 * c * wm_);
        trip.emplace_back(m0, m2, -c * wm_);
      } else {
        trip.emplace_back(p0, p0, -3 * c * wp_);
        trip.emplace_back(p0, p1, 4 * c * wp_);
        trip.emplace_back(p0, p2, -c * wp_);
        b(p0) = -l_ * h;
        trip.emplace_back(m0, m0, 3 * c * wm_);
        trip.emplace_back(m0, m1, -4 * c * wm_);
        trip.emplace_back(m0, m2, c * wm_);
        b(m0) = -l_ * h;
      }
    }
    Eigen::SparseMatrix<double> A(size_, size_);
    A.setFromTriplets(trip.begin(), trip.end());
    A.makeCompressed();
    Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu;
    lu.compute(A);
    if (lu.info() != Eigen::Success) throw GeometryError("half-disc system is singular");
    const Eigen::VectorXd x = lu.solve(b);
    HalfDiscField out(n, f_.e());
    for (int j = 0; j <= n; ++j)
      for (int i = 0; i <= n; ++i) {
        if (map_p_[id(i, j)] >= 0) out.plus(i, j) = x(map_p_[id(i, j)]);
        if (map_m_[id(i, j)] >= 0) out.minus(i, j) = x(map_m_[id(i, j)]);
      }
    return out;
  }

 private:
  std::size_t id(int i, int j) const {
    return static_cast<std::size_t>(j) * static_cast<std::size_t>(f_.resolution() + 1) + static_cast<std::size_t>(i);
  }
  HalfDiscField f_;
  double wp_, wm_, l_;
  DiscData fp_, fm_;
  std::vector<int> map_p_, map_m_;
  std::vector<int> iface_;
  int size_ = 0;
};

inline double de_plus(const HalfDiscField& v, int i) {
  const int m = v.mid();
  return (-3 * v.plus(i, m) + 4 * v.plus(i, m + 1) - v.plus(i, m + 2)) / (2 * v.h());
}
inline double de_minus(const HalfDiscField& v, int i) {
  const int m = v.mid();
  return (3 * v.minus(i, m) - 4 * v.minus(i, m - 1) + v.minus(i, m - 2)) / (2 * v.h());
}

inline double data_range(const HalfDiscField& grid, const DiscData& fp, const DiscData& fm) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (int k = 0; k < 720; ++k) {
    const double th = 2 * std::numbers::pi * k / 720;
    const Vec2 dir{std::cos(th), std::sin(th)};
    const double t = dot(dir, grid.e());
    const Vec2 x = 0.5 * dir;
    const double v = t >= 0 ? fp(x) : fm(x);
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  return hi - lo;
}

}  // namespace detail

/// Semismooth active-set iteration for the two-membrane problem: contact
/// nodes are those with λ₊²D_e v₊ + l > c(v₋ − v₊), c = λ₊²/h, starting from
/// full contact.
inline MembraneSolution solve_two_membrane(const MembraneProblem& prob, int resolution, int max_iterations = 100) {
  prob.validate();
  const double wp = prob.lambda_plus * prob.lambda_plus, wm = prob.lambda_minus * prob.lambda_minus;
  detail::HalfDiscSystem sys(resolution, prob.e, wp, wm, prob.l, prob.data_plus, prob.data_minus);
  const auto& nodes = sys.interface_nodes();
  std::vector<std::uint8_t> contact(nodes.size(), 1);
  MembraneSolution out;
  const double c = wp * resolution;
  for (int it = 1; it <= max_iterations; ++it) {
    out.v = sys.solve(contact);
    out.iterations = it;
    std::vector<std::uint8_t> next(nodes.size());
    for (std::size_t k = 0; k < nodes.size(); ++k) {
      const int i = nodes[k];
      const double mu = wp * detail::de_plus(out.v, i) + prob.l;
      const double gap = out.v.minus(i, out.v.mid()) - out.v.plus(i, out.v.mid());
      next[k] = mu - c * gap > 0.0;
    }
    if (next == contact) {
      out.converged = true;
      break;
    }
    contact = next;
  }
  if (!out.converged) out.message = "active set still changing after " + std::to_string(max_iterations) + " iterations";
  const HalfDiscField& v = out.v;
  const int mid = v.mid();
  out.interface.gap_tol = 1e-8 * detail::data_range(v, prob.data_plus, prob.data_minus);
  InterfaceResidual& r = out.residual;
  for (int i : nodes) {
    const double gap = v.minus(i, mid) - v.plus(i, mid);
    const double ap = wp * detail::de_plus(v, i) + prob.l, am = wm * detail::de_minus(v, i) + prob.l;
    if (gap > out.interface.gap_tol) {
      out.interface.separated.push_back(v.s(i));
      r.max_equation = std::max({r.max_equation, std::abs(ap), std::abs(am)});
    } else {
      out.interface.contact.push_back(v.s(i));
      r.max_gap = std::max(r.max_gap, std::abs(gap));
      r.max_flux_mismatch = std::max(r.max_flux_mismatch, std::abs(ap - am));
      r.max_violation = std::max({r.max_violation, -ap, -am});
    }
    r.max_violation = std::max(r.max_violation, -gap - out.interface.gap_tol);
  }
  return out;
}

inline TransmissionSolution solve_transmission(const TransmissionProblem& prob, int resolution) {
  prob.validate();
  const double wp = prob.alpha * prob.alpha, wm = prob.beta * prob.beta;
  detail::HalfDiscSystem sys(resolution, prob.e, wp, wm, 0.0, prob.data_plus, prob.data_minus);
  const auto& nodes = sys.interface_nodes();
  TransmissionSolution out;
  out.v = sys.solve(std::vector<std::uint8_t>(nodes.size(), 1));
  const int mid = out.v.mid();
  for (int i : nodes) {
    out.residual.max_gap = std::max(out.residual.max_gap, std::abs(out.v.plus(i, mid) - out.v.minus(i, mid)));
    out.residual.max_flux_mismatch =
        std::max(out.residual.max_flux_mismatch,
                 std::abs(wp * detail::de_plus(out.v, i) - wm * detail::de_minus(out.v, i)));
  }
  return out;
}

struct DecayOptions {
  double exponent = 1.5;  ///< 3/2 for the membrane, 2 for the transmission problem
  double w_plus = 1.0, w_minus = 1.0;  ///< λ±² or α∞², β∞²; the fit ties w₊p = w₋q
  std::optional<double> l;             ///< membrane: enforce w₊p ≥ −l
  std::vector<double> radii{1.0 / 8, 1.0 / 16, 1.0 / 32, 1.0 / 64};
  double fit_radius = 1.0 / 8;
  double floor_cells = 4.0;  ///< radii below floor_cells·h are skipped
  double max_ratio = 4.0;
};

struct DecayReport {
  double exponent = 0.0;
  double t = 0.0, p = 0.0, q = 0.0;
  std::vector<double> radii, quotients;
  double ratio = 0.0;  ///< max/min quotient, 0 when all quotients vanish
  bool pass = false;

  nlohmann::json to_json() const {
    return {{"exponent", exponent}, {"t", t},     {"p", p},       {"q", q},
            {"radii", radii},       {"quotients", quotients}, {"ratio", ratio}, {"pass", pass}};
  }
};

/// Fits v − v±(0) ≈ t s + p(x·e)⁺ − q(x·e)⁻ with w₊p = w₋q by least squares
/// on B_{fit_radius} and reports sup_{B_r}|residual|/r^s over the ladder.
/// PASS iff the quotients above the grid floor stay within a factor max_ratio.
inline DecayReport decay_check(const HalfDiscField& v, const DecayOptions& o) {
  if (!(o.w_plus > 0.0) || !(o.w_minus > 0.0)) throw PreconditionError("decay weights must be positive");
  const int n = v.resolution(), mid = v.mid();
  const double vp0 = v.plus(mid, mid), vm0 = v.minus(mid, mid);
  const double kq = o.w_plus / o.w_minus;  // q = kq·p
  struct Sample {
    double s, tpos, tneg, r;
  };
  std::vector<std::pair<Sample, double>> pts;
  for (int j = 0; j <= n; ++j)
    for (int i = 0; i <= n; ++i) {
      if (!v.inside(i, j)) continue;
      const double s = v.s(i), t = v.t(j), r = std::hypot(s, t);
      if (j >= mid) pts.push_back({{s, t, 0.0, r}, v.plus(i, j) - vp0});
      if (j <= mid) pts.push_back({{s, 0.0, t, r}, v.minus(i, j) - vm0});
    }
  // model: τ s + p (t⁺ + kq t⁻ side); for t < 0 the term −q(x·e)⁻ = q t.
  double a11 = 0, a12 = 0, a22 = 0, b1 = 0, b2 = 0, a1_only = 0, b1_only = 0;
  for (const auto& [x, val] : pts) {
    if (x.r > o.fit_radius) continue;
    const double f1 = x.s, f2 = x.tpos + kq * x.tneg;
    a11 += f1 * f1;
    a12 += f1 * f2;
    a22 += f2 * f2;
    b1 += f1 * val;
    b2 += f2 * val;
  }
  a1_only = a11;
  b1_only = b1;
  DecayReport rep;
  rep.exponent = o.exponent;
  const double det = a11 * a22 - a12 * a12;
  double tau = 0.0, p = 0.0;
  if (std::abs(det) > 1e-300) {
    tau = (a22 * b1 - a12 * b2) / det;
    p = (a11 * b2 - a12 * b1) / det;
  }
  if (o.l && o.w_plus * p < -*o.l) {
    p = -*o.l / o.w_plus;
    tau = a1_only > 0 ? (b1_only - a12 * p) / a1_only : 0.0;
  }
  rep.t = tau;
  rep.p = p;
  rep.q = kq * p;
  double scale = 0.0, max_sup = 0.0;
  for (const auto& pr : pts) scale = std::max(scale, std::abs(pr.second));
  for (double r : o.radii) {
    if (r < o.floor_cells * v.h()) continue;
    double sup = 0.0;
    for (const auto& [x, val] : pts) {
      if (x.r > r) continue;
      const double model = tau * x.s + p * (x.tpos + kq * x.tneg);
      sup = std::max(sup, std::abs(val - model));
    }
    max_sup = std::max(max_sup, sup);
    rep.radii.push_back(r);
    rep.quotients.push_back(sup / std::pow(r, o.exponent));
  }
  if (rep.quotients.empty()) throw PreconditionError("no decay radius lies above the grid floor");
  const double qmax = *std::max_element(rep.quotients.begin(), rep.quotients.end());
  const double qmin = *std::min_element(rep.quotients.begin(), rep.quotients.end());
  if (max_sup <= 1e-9 * scale) {
    rep.ratio = 0.0;
    rep.pass = true;
  } else {
    rep.ratio = qmin > 0 ? qmax / qmin : std::numeric_limits<double>::infinity();
    rep.pass = rep.ratio <= o.max_ratio;
  }
  return rep;
}

}  // namespace axibern
