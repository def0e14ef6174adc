#pragma once

/// Uniform half-plane grids, scalar fields, the degenerate operator L,
/// quadrature and off-node sampling.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace axibern {

struct GeometryError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DegenerateAxisError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct StencilError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct PreconditionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct Vec2 {
  double x1 = 0.0;
  double x2 = 0.0;

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x1 + b.x1, a.x2 + b.x2}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x1 - b.x1, a.x2 - b.x2}; }
  friend Vec2 operator*(double s, Vec2 a) { return {s * a.x1, s * a.x2}; }
  friend bool operator==(Vec2 a, Vec2 b) = default;
};

inline double dot(Vec2 a, Vec2 b) { return a.x1 * b.x1 + a.x2 * b.x2; }
inline double norm(Vec2 a) { return std::hypot(a.x1, a.x2); }

inline std::string to_string(Vec2 p) {
  std::ostringstream os;
  os << std::setprecision(10) << "(" << p.x1 << ", " << p.x2 << ")";
  return os.str();
}

/// Uniform Cartesian grid on [x1_lo, x1_lo+(n1-1)h] x [x2_lo, x2_lo+(n2-1)h].
class GridSpec {
 public:
  GridSpec() = default;

  GridSpec(double x1_lo, double x2_lo, int n1, int n2, double h)
      : x1_lo_(x1_lo), x2_lo_(x2_lo), n1_(n1), n2_(n2), h_(h) {
    if (n1 < 3 || n2 < 3) throw PreconditionError("grid needs at least 3 nodes per axis");
    if (!(h > 0.0) || !std::isfinite(h)) throw PreconditionError("grid spacing must be positive");
    if (!(x2_lo >= 0.0)) throw PreconditionError("grid must lie in the upper half-plane (x2_lo >= 0)");
  }

  /// Rectangle [x1_lo,x1_hi] x [x2_lo,x2_hi] with spacing h; the extents must be multiples of h.
  static GridSpec rectangle(double x1_lo, double x1_hi, double x2_lo, double x2_hi, double h) {
    const double c1 = (x1_hi - x1_lo) / h;
    const double c2 = (x2_hi - x2_lo) / h;
    const long k1 = std::lround(c1);
    const long k2 = std::lround(c2);
    if (std::abs(c1 - k1) > 1e-9 * std::max(1.0, c1) || std::abs(c2 - k2) > 1e-9 * std::max(1.0, c2))
      throw PreconditionError("rectangle extents are not multiples of h");
    return GridSpec(x1_lo, x2_lo, static_cast<int>(k1) + 1, static_cast<int>(k2) + 1, h);
  }

  int n1() const { return n1_; }
  int n2() const { return n2_; }
  double h() const { return h_; }
  std::size_t size() const { return static_cast<std::size_t>(n1_) * static_cast<std::size_t>(n2_); }
  double x1_lo() const { return x1_lo_; }
  double x2_lo() const { return x2_lo_; }
  double x1_hi() const { return x1_lo_ + (n1_ - 1) * h_; }
  double x2_hi() const { return x2_lo_ + (n2_ - 1) * h_; }

  double x1(int i) const { return x1_lo_ + i * h_; }
  double x2(int j) const { return x2_lo_ + j * h_; }
  Vec2 node(int i, int j) const { return {x1(i), x2(j)}; }
  std::size_t index(int i, int j) const {
    return static_cast<std::size_t>(j) * static_cast<std::size_t>(n1_) + static_cast<std::size_t>(i);
  }
  int col(std::size_t k) const { return static_cast<int>(k % static_cast<std::size_t>(n1_)); }
  int row(std::size_t k) const { return static_cast<int>(k / static_cast<std::size_t>(n1_)); }

  bool touches_axis() const { return x2_lo_ == 0.0; }
  bool on_boundary(int i, int j) const { return i == 0 || j == 0 || i == n1_ - 1 || j == n2_ - 1; }
  bool contains(Vec2 p, double slack = 1e-12) const {
    return p.x1 >= x1_lo_ - slack && p.x1 <= x1_hi() + slack && p.x2 >= x2_lo_ - slack &&
           p.x2 <= x2_hi() + slack;
  }

  friend bool operator==(const GridSpec&, const GridSpec&) = default;

 private:
  double x1_lo_ = 0.0;
  double x2_lo_ = 0.0;
  int n1_ = 0;
  int n2_ = 0;
  double h_ = 0.0;
};

using NodeMask = std::vector<std::uint8_t>;

class ScalarField {
 public:
  ScalarField() = default;
  ScalarField(GridSpec g, double fill = 0.0) : grid_(g), values_(g.size(), fill) {}
  ScalarField(GridSpec g, std::vector<double> v) : grid_(g), values_(std::move(v)) {
    if (values_.size() != grid_.size()) throw PreconditionError("one value per node required");
  }

  template <class F>
  static ScalarField from_function(const GridSpec& g, F&& f) {
    ScalarField u(g);
    for (int j = 0; j < g.n2(); ++j)
      for (int i = 0; i < g.n1(); ++i) u(i, j) = f(g.x1(i), g.x2(j));
    return u;
  }

  const GridSpec& grid() const { return grid_; }
  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }
  double& operator()(int i, int j) { return values_[grid_.index(i, j)]; }
  double operator()(int i, int j) const { return values_[grid_.index(i, j)]; }
  double& operator[](std::size_t k) { return values_[k]; }
  double operator[](std::size_t k) const { return values_[k]; }

  bool all_finite() const {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
  }
  double max_abs() const {
    double m = 0.0;
    for (double v : values_) m = std::max(m, std::abs(v));
    return m;
  }

  /// Bilinear interpolation; throws GeometryError outside the rectangle.
  double sample(Vec2 p) const {
    const GridSpec& g = grid_;
    if (!g.contains(p, 1e-12 * std::max(1.0, std::abs(p.x1) + std::abs(p.x2))))
      throw GeometryError("sample point " + to_string(p) + " outside grid");
    double s = (p.x1 - g.x1_lo()) / g.h();
    double t = (p.x2 - g.x2_lo()) / g.h();
    int i = std::clamp(static_cast<int>(std::floor(s)), 0, g.n1() - 2);
    int j = std::clamp(static_cast<int>(std::floor(t)), 0, g.n2() - 2);
    double a = std::clamp(s - i, 0.0, 1.0);
    double b = std::clamp(t - j, 0.0, 1.0);
    const double* r0 = &values_[g.index(i, j)];
    const double* r1 = &values_[g.index(i, j + 1)];
    return (1 - b) * ((1 - a) * r0[0] + a * r0[1]) + b * ((1 - a) * r1[0] + a * r1[1]);
  }

 private:
  GridSpec grid_;
  std::vector<double> values_;
};

/// Polar sampling pattern of a ball; used by probes that need values on B_r(center).
struct BallSample {
  Vec2 center;
  double radius = 0.0;
  int n_angles = 128;
  int n_radii = 32;

  template <class F>
  void for_each(F&& f) const {
    f(center);
    for (int k = 1; k <= n_radii; ++k) {
      const double rr = radius * k / n_radii;
      const int na = std::max(8, static_cast<int>(std::ceil(n_angles * static_cast<double>(k) / n_radii)));
      for (int a = 0; a < na; ++a) {
        const double th = 2.0 * std::numbers::pi * a / na;
        f(Vec2{center.x1 + rr * std::cos(th), center.x2 + rr * std::sin(th)});
      }
    }
  }

  void check_inside(const GridSpec& g) const {
    if (!(radius > 0.0)) throw PreconditionError("ball radius must be positive");
    if (center.x1 - radius < g.x1_lo() - 1e-12 || center.x1 + radius > g.x1_hi() + 1e-12 ||
        center.x2 - radius < g.x2_lo() - 1e-12 || center.x2 + radius > g.x2_hi() + 1e-12)
      throw GeometryError("ball at " + to_string(center) + " with radius " + std::to_string(radius) +
                          " leaves the grid");
  }
};

/// Node-wise L u = Δu − ∂₂u/(x₂+m); boundary nodes are undefined.
struct OperatorField {
  ScalarField value;
  NodeMask defined;

  double max_abs_defined() const {
    double m = 0.0;
    for (std::size_t k = 0; k < defined.size(); ++k)
      if (defined[k]) m = std::max(m, std::abs(value[k]));
    return m;
  }
};

inline void check_axis(const GridSpec& g, double m) {
  if (m < 0.0) throw PreconditionError("axis offset m must be non-negative");
  if (g.touches_axis() && m == 0.0)
    throw DegenerateAxisError("grid touches x2 = 0; a positive axis offset m is required");
}

inline OperatorField apply_operator_L(const ScalarField& u, double m) {
  const GridSpec& g = u.grid();
  check_axis(g, m);
  OperatorField out{ScalarField(g, 0.0), NodeMask(g.size(), 0)};
  const double h = g.h();
  const double ih2 = 1.0 / (h * h);
  for (int j = 1; j < g.n2() - 1; ++j) {
    const double s = g.x2(j) + m;
    for (int i = 1; i < g.n1() - 1; ++i) {
      const double c = u(i, j);
      const double lap = ((u(i + 1, j) - 2.0 * c + u(i - 1, j)) + (u(i, j + 1) - 2.0 * c + u(i, j - 1))) * ih2;
      const double d2 = (u(i, j + 1) - u(i, j - 1)) / (2.0 * h);
      out.value(i, j) = lap - d2 / s;
      out.defined[g.index(i, j)] = 1;
    }
  }
  return out;
}

enum class Side { plus, minus, central };

/// Least-squares fit of an affine function through (point, value) samples,
/// expressed relative to `origin`; returns the gradient.
inline bool fit_affine_gradient(const std::vector<Vec2>& pts, const std::vector<double>& vals, Vec2 origin,
                                double scale, Vec2& grad) {
  if (pts.size() < 3) return false;
  Eigen::Matrix3d A = Eigen::Matrix3d::Zero();
  Eigen::Vector3d b = Eigen::Vector3d::Zero();
  for (std::size_t k = 0; k < pts.size(); ++k) {
    Eigen::Vector3d r(1.0, (pts[k].x1 - origin.x1) / scale, (pts[k].x2 - origin.x2) / scale);
    A += r * r.transpose();
    b += r * vals[k];
  }
  Eigen::LDLT<Eigen::Matrix3d> ldlt(A);
  if (ldlt.info() != Eigen::Success) return false;
  Eigen::Vector3d evals = Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d>(A, Eigen::EigenvaluesOnly).eigenvalues();
  if (!(evals(0) > 1e-8 * evals(2))) return false;
  Eigen::Vector3d c = ldlt.solve(b);
  grad = {c(1) / scale, c(2) / scale};
  return true;
}

inline bool in_phase(double v, Side side, double delta0) {
  return side == Side::plus ? v > delta0 : v < -delta0;
}

/// One-sided gradient at an arbitrary point: affine least-squares fit over the
/// nodes of the requested phase within `radius` of p. When `anchor` is given it
/// is added as an extra sample at p (e.g. the contour level at a contour vertex).
inline bool one_sided_gradient_at(const ScalarField& u, Vec2 p, Side side, double delta0, double radius,
                                  const double* anchor, Vec2& grad) {
  const GridSpec& g = u.grid();
  const double h = g.h();
  const int i0 = static_cast<int>(std::floor((p.x1 - g.x1_lo() - radius) / h));
  const int i1 = static_cast<int>(std::ceil((p.x1 - g.x1_lo() + radius) / h));
  const int j0 = static_cast<int>(std::floor((p.x2 - g.x2_lo() - radius) / h));
  const int j1 = static_cast<int>(std::ceil((p.x2 - g.x2_lo() + radius) / h));
  std::vector<Vec2> pts;
  std::vector<double> vals;
  for (int j = std::max(0, j0); j <= std::min(g.n2() - 1, j1); ++j)
    for (int i = std::max(0, i0); i <= std::min(g.n1() - 1, i1); ++i) {
      const Vec2 q = g.node(i, j);
      if (norm(q - p) > radius + 1e-12 * h) continue;
      const double v = u(i, j);
      if (!in_phase(v, side, delta0)) continue;
      pts.push_back(q);
      vals.push_back(v);
    }
  const std::size_t n_nodes = pts.size();
  if (anchor) {
    pts.push_back(p);
    vals.push_back(*anchor);
  }
  if (n_nodes < 3) return false;
  return fit_affine_gradient(pts, vals, p, h, grad);
}

/// Gradient at a node. One-sided modes fit over the phase nodes of the 5x5
/// neighbourhood (radius 2h); central mode uses central differences.
inline Vec2 gradient_one_sided(const ScalarField& u, int i, int j, Side side, double delta0 = 0.0) {
  const GridSpec& g = u.grid();
  if (side == Side::central) {
    if (g.on_boundary(i, j))
      throw StencilError("central gradient needs an interior node, got " + to_string(g.node(i, j)));
    const double h = g.h();
    return {(u(i + 1, j) - u(i - 1, j)) / (2 * h), (u(i, j + 1) - u(i, j - 1)) / (2 * h)};
  }
  Vec2 grad;
  if (!one_sided_gradient_at(u, g.node(i, j), side, delta0, 2.0 * g.h() * (1 + 1e-9), nullptr, grad))
    throw StencilError(std::string("no ") + (side == Side::plus ? "plus" : "minus") +
                       "-phase stencil at node " + to_string(g.node(i, j)));
  return grad;
}

/// Trapezoid weight of node (i, j).
inline double trapezoid_weight(const GridSpec& g, int i, int j) {
  double w = g.h() * g.h();
  if (i == 0 || i == g.n1() - 1) w *= 0.5;
  if (j == 0 || j == g.n2() - 1) w *= 0.5;
  return w;
}

/// Composite trapezoid rule over the nodes selected by mask.
inline double integrate(const ScalarField& f, const NodeMask& mask) {
  const GridSpec& g = f.grid();
  if (mask.size() != g.size()) throw PreconditionError("mask must cover every grid node");
  double acc = 0.0;
  for (int j = 0; j < g.n2(); ++j)
    for (int i = 0; i < g.n1(); ++i)
      if (mask[g.index(i, j)]) acc += trapezoid_weight(g, i, j) * f(i, j);
  return acc;
}

inline double integrate(const ScalarField& f) { return integrate(f, NodeMask(f.grid().size(), 1)); }

inline double ipow(double v, int p) {
  double r = 1.0;
  for (int k = 0; k < p; ++k) r *= v;
  return r;
}

/// Mean of u^p over the circle ∂B_r(center) with uniform angular quadrature.
inline double circle_average(const ScalarField& u, Vec2 center, double r, double p, int n_angles = 512) {
  const GridSpec& g = u.grid();
  if (!(r > 0.0)) throw PreconditionError("circle radius must be positive");
  if (center.x1 - r < g.x1_lo() - 1e-12 || center.x1 + r > g.x1_hi() + 1e-12 || center.x2 - r < g.x2_lo() - 1e-12 ||
      center.x2 + r > g.x2_hi() + 1e-12)
    throw GeometryError("circle of radius " + std::to_string(r) + " at " + to_string(center) + " exits the grid");
  const bool integral_power = p == std::round(p) && p >= 0 && p <= 64;
  double acc = 0.0;
  for (int a = 0; a < n_angles; ++a) {
    const double th = 2.0 * std::numbers::pi * a / n_angles;
    Vec2 q{center.x1 + r * std::cos(th), center.x2 + r * std::sin(th)};
    q.x1 = std::clamp(q.x1, g.x1_lo(), g.x1_hi());
    q.x2 = std::clamp(q.x2, g.x2_lo(), g.x2_hi());
    const double v = u.sample(q);
    acc += integral_power ? ipow(v, static_cast<int>(p)) : std::pow(v, p);
  }
  return acc / n_angles;
}

inline std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

inline void write_field_csv(const ScalarField& u, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  const GridSpec& g = u.grid();
  os << "x1,x2,u\n";
  os << std::setprecision(17);
  for (int j = 0; j < g.n2(); ++j)
    for (int i = 0; i < g.n1(); ++i) os << g.x1(i) << ',' << g.x2(j) << ',' << u(i, j) << '\n';
  if (!os) throw std::runtime_error("write failed for " + path);
}

/// Reads a field written by write_field_csv (row-major, x1 fastest).
inline ScalarField read_field_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read " + path);
  std::string line;
  std::getline(is, line);
  if (line.rfind("x1,x2,u", 0) != 0) throw std::runtime_error(path + ": expected header x1,x2,u");
  std::vector<double> xs, ys, vs;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    double a, b, c;
    char c1, c2;
    if (!(ls >> a >> c1 >> b >> c2 >> c) || c1 != ',' || c2 != ',')
      throw std::runtime_error(path + ": malformed row '" + line + "'");
    xs.push_back(a);
    ys.push_back(b);
    vs.push_back(c);
  }
  if (xs.size() < 9) throw std::runtime_error(path + ": too few rows");
  int n1 = 1;
  while (n1 < static_cast<int>(xs.size()) && ys[n1] == ys[0]) ++n1;
  if (xs.size() % n1 != 0) throw std::runtime_error(path + ": rows do not form a rectangle");
  const int n2 = static_cast<int>(xs.size() / n1);
  const double h = (xs[n1 - 1] - xs[0]) / (n1 - 1);
  GridSpec g(xs[0], ys[0], n1, n2, h);
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const int i = static_cast<int>(k % n1), j = static_cast<int>(k / n1);
    if (std::abs(xs[k] - g.x1(i)) > 1e-9 * h || std::abs(ys[k] - g.x2(j)) > 1e-9 * h)
      throw std::runtime_error(path + ": coordinates are not a uniform grid");
  }
  return ScalarField(g, std::move(vs));
}

}  // namespace axibern
