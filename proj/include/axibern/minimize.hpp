#pragma once

/// Minimization of the two-phase energy over fields with u = −1 on the axis
/// and prescribed outer Dirichlet data.

#include "axibern/energy.hpp"

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include <deque>
#include <functional>
#include <string>

namespace axibern {

using SpMat = Eigen::SparseMatrix<double>;
using VecX = Eigen::VectorXd;

struct BoundaryData {
  double axis_value = -1.0;
  std::function<double(double, double)> outer;

  /// Copies the boundary trace onto the rectangle boundary of u.
  void apply(ScalarField& u) const {
    const GridSpec& g = u.grid();
    if (!outer) throw PreconditionError("boundary data has no outer trace");
    for (int j = 0; j < g.n2(); ++j)
      for (int i = 0; i < g.n1(); ++i) {
        if (!g.on_boundary(i, j)) continue;
        const double v = g.x2(j) == 0.0 ? axis_value : outer(g.x1(i), g.x2(j));
        if (!std::isfinite(v)) throw PreconditionError("outer trace is not finite at " + to_string(g.node(i, j)));
        u(i, j) = v;
      }
  }

  bool matches(const ScalarField& u) const {
    ScalarField t = u;
    apply(t);
    return t.values() == u.values();
  }
};

/// Vertical linear interpolation between the bottom and top traces.
inline ScalarField initial_guess(const GridSpec& g, const BoundaryData& bd) {
  ScalarField u(g, 0.0);
  bd.apply(u);
  const int top = g.n2() - 1;
  for (int i = 1; i < g.n1() - 1; ++i) {
    const double lo = u(i, 0), hi = u(i, top);
    for (int j = 1; j < top; ++j) u(i, j) = lo + (hi - lo) * j / top;
  }
  return u;
}

enum class Strategy { smoothed, truncation, both };

inline std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::smoothed: return "smoothed-descent";
    case Strategy::truncation: return "truncation-iterate";
    case Strategy::both: return "both-and-compare";
  }
  return "?";
}

struct SolveConfig {
  std::vector<double> eps_schedule{1e-1, 1e-2, 1e-3, 1e-4};  ///< relative to max |boundary data|
  int max_iterations = 3000;                                 ///< per continuation stage / sweeps
  double gradient_tol = 1e-6;                                ///< preconditioned, relative to sqrt(J)
  double linear_tol = 1e-10;
  Strategy strategy = Strategy::smoothed;
  int lbfgs_memory = 12;
  double m = 1e-3;
  std::optional<double> delta0;  ///< absolute; unset: 1e-3 * max |boundary data|
  PhaseMeasure measure = PhaseMeasure::subcell;
  /// Coarse-to-fine levels used by minimize(): the start is the solution on
  /// the grid of spacing 2h (threshold 2δ₀), and the fine grid then runs the
  /// last eps stage only.
  int coarse_levels = 0;

  void validate() const {
    if (eps_schedule.empty()) throw PreconditionError("eps schedule is empty");
    for (std::size_t k = 0; k < eps_schedule.size(); ++k) {
      if (!(eps_schedule[k] > 0.0)) throw PreconditionError("eps schedule entries must be positive");
      if (k > 0 && !(eps_schedule[k] < eps_schedule[k - 1]))
        throw PreconditionError("eps schedule must be strictly decreasing");
    }
    if (!(gradient_tol > 0.0) || !(linear_tol > 0.0)) throw PreconditionError("tolerances must be positive");
    if (max_iterations < 1 || lbfgs_memory < 1) throw PreconditionError("iteration limits must be positive");
    if (m < 0.0) throw PreconditionError("axis offset m must be non-negative");
    if (coarse_levels < 0) throw PreconditionError("coarse_levels must be non-negative");
  }
};

struct MinimizeDiagnostics {
  double final_energy = 0.0;
  int iterations = 0;
  double residual = 0.0;  ///< preconditioned gradient norm at exit
  bool converged = true;
  std::string strategy;
  std::string message;
  double energy_smoothed = std::numeric_limits<double>::quiet_NaN();
  double energy_truncation = std::numeric_limits<double>::quiet_NaN();
};

struct MinimizeResult {
  ScalarField u;
  MinimizeDiagnostics diag;
};

/// Conservative discretization of div(∇u/(x₂+m)) restricted to a set of unknown nodes.
class ConservativeSystem {
 public:
  ConservativeSystem(const GridSpec& g, double m, const NodeMask& unknown) : g_(g), m_(m), map_(g.size(), -1) {
    for (std::size_t k = 0; k < g.size(); ++k)
      if (unknown[k] && !g.on_boundary(g.col(k), g.row(k))) {
        map_[k] = static_cast<int>(nodes_.size());
        nodes_.push_back(k);
      }
    if (nodes_.empty()) throw GeometryError("no interior unknowns: the system is empty");
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(nodes_.size() * 5);
    for (std::size_t r = 0; r < nodes_.size(); ++r) {
      const int i = g.col(nodes_[r]), j = g.row(nodes_[r]);
      double diag = 0.0;
      for_each_neighbour(i, j, [&](std::size_t nb, double c) {
        diag += c;
        if (map_[nb] >= 0) trip.emplace_back(static_cast<int>(r), map_[nb], -c);
      });
      trip.emplace_back(static_cast<int>(r), static_cast<int>(r), diag);
    }
    K_.resize(static_cast<int>(nodes_.size()), static_cast<int>(nodes_.size()));
    K_.setFromTriplets(trip.begin(), trip.end());
    K_.makeCompressed();
  }

  /// Edge coefficients of an interior node: 1/(x₂+m) horizontally, 1/(midpoint x₂+m) vertically.
  template <class F>
  void for_each_neighbour(int i, int j, F&& f) const {
    const double s = g_.x2(j) + m_;
    const double su = g_.x2(j) + 0.5 * g_.h() + m_;
    const double sd = g_.x2(j) - 0.5 * g_.h() + m_;
    if (!(s > 0.0) || !(sd > 0.0)) throw DegenerateAxisError("unknown node on or below the axis needs m > 0");
    f(g_.index(i - 1, j), 1.0 / s);
    f(g_.index(i + 1, j), 1.0 / s);
    f(g_.index(i, j - 1), 1.0 / sd);
    f(g_.index(i, j + 1), 1.0 / su);
  }

  const SpMat& matrix() const { return K_; }
  const std::vector<std::size_t>& nodes() const { return nodes_; }
  int local(std::size_t k) const { return map_[k]; }
  std::size_t size() const { return nodes_.size(); }

  /// Right-hand side from the values of the known nodes in u.
  VecX rhs(const std::vector<double>& u) const {
    VecX b = VecX::Zero(static_cast<int>(nodes_.size()));
    for (std::size_t r = 0; r < nodes_.size(); ++r) {
      const int i = g_.col(nodes_[r]), j = g_.row(nodes_[r]);
      for_each_neighbour(i, j, [&](std::size_t nb, double c) {
        if (map_[nb] < 0) b(static_cast<int>(r)) += c * u[nb];
      });
    }
    return b;
  }

  VecX gather(const std::vector<double>& u) const {
    VecX x(static_cast<int>(nodes_.size()));
    for (std::size_t r = 0; r < nodes_.size(); ++r) x(static_cast<int>(r)) = u[nodes_[r]];
    return x;
  }
  void scatter(const VecX& x, std::vector<double>& u) const {
    for (std::size_t r = 0; r < nodes_.size(); ++r) u[nodes_[r]] = x(static_cast<int>(r));
  }

 private:
  GridSpec g_;
  double m_;
  std::vector<int> map_;
  std::vector<std::size_t> nodes_;
  SpMat K_;
};

struct LinearSolveReport {
  int iterations = 0;
  double relative_residual = 0.0;
  bool converged = true;
};

/// Solves the conservative scheme on the interior nodes of `unknown`; every
/// other node keeps its value from `boundary`. PCG with incomplete Cholesky.
/// With `source`, the equation is L u = source instead of L u = 0.
inline ScalarField solve_interior_dirichlet(const NodeMask& unknown, const ScalarField& boundary, double m,
                                            double tol = 1e-10, LinearSolveReport* report = nullptr,
                                            const ScalarField* source = nullptr) {
  const GridSpec& g = boundary.grid();
  if (unknown.size() != g.size()) throw PreconditionError("mask must cover every grid node");
  if (source && !(source->grid() == g)) throw PreconditionError("source must live on the boundary grid");
  ConservativeSystem sys(g, m, unknown);
  VecX b = sys.rhs(boundary.values());
  if (source)
    for (std::size_t r = 0; r < sys.size(); ++r) {
      const std::size_t k = sys.nodes()[r];
      b(static_cast<int>(r)) -= g.h() * g.h() * (*source)[k] / (g.x2(g.row(k)) + m);
    }
  Eigen::ConjugateGradient<SpMat, Eigen::Lower | Eigen::Upper, Eigen::IncompleteCholesky<double>> cg;
  cg.setTolerance(tol);
  cg.setMaxIterations(std::max<int>(1000, 4 * static_cast<int>(std::sqrt(static_cast<double>(sys.size()))) * 10));
  cg.compute(sys.matrix());
  if (cg.info() != Eigen::Success) throw GeometryError("preconditioner construction failed");
  VecX x = cg.solveWithGuess(b, sys.gather(boundary.values()));
  ScalarField out = boundary;
  sys.scatter(x, out.values());
  if (report) {
    report->iterations = static_cast<int>(cg.iterations());
    const double bn = b.norm();
    report->relative_residual = (sys.matrix() * x - b).norm() / (bn > 0 ? bn : 1.0);
    report->converged = cg.info() == Eigen::Success;
  }
  return out;
}

namespace detail {

struct StageResult {
  int iterations = 0;
  double pg_norm = 0.0;
  bool converged = false;
  double energy_start = 0.0;
  double energy_end = 0.0;
};

/// Preconditioned L-BFGS with Armijo backtracking on the free nodes.
/// The preconditioner is the inverse of the Dirichlet Hessian.
class LbfgsStage {
 public:
  LbfgsStage(const EnergyModel& model, const ConservativeSystem& sys,
             const Eigen::SimplicialLLT<SpMat>& chol, int memory)
      : model_(model), sys_(sys), chol_(chol), memory_(memory) {}

  StageResult run(std::vector<double>& u, double eps, int max_iter, double gtol) {
    StageResult res;
    std::vector<double> full_grad;
    auto eval = [&](const std::vector<double>& field, VecX& g) {
      const double f = model_.evaluate(field, eps, &full_grad).total();
      g = sys_.gather(full_grad);
      return f;
    };
    VecX x = sys_.gather(u), g;
    double f = eval(u, g);
    res.energy_start = f;
    std::deque<VecX> S, Y;
    std::deque<double> rho;
    std::vector<double> trial = u;
    double recent_best = f;
    int stall = 0;
    for (int it = 0; it < max_iter; ++it) {
      if (it % 5 == 0 || S.empty()) {
        res.pg_norm = std::sqrt(std::max(0.0, g.dot(apply_h0(g))));
        if (res.pg_norm <= gtol * std::sqrt(std::max(1.0, std::abs(f)))) {
          res.converged = true;
          break;
        }
      }
      VecX d = -two_loop(g, S, Y, rho);
      double gd = g.dot(d);
      if (!(gd < 0.0)) {
        S.clear();
        Y.clear();
        rho.clear();
        d = -apply_h0(g);
        gd = g.dot(d);
      }
      double t = 1.0;
      double fn = f;
      VecX xn, gn;
      bool accepted = false;
      for (int ls = 0; ls < 50; ++ls) {
        xn = x + t * d;
        sys_.scatter(xn, trial);
        fn = eval(trial, gn);
        if (fn <= f + 1e-4 * t * gd) {
          accepted = true;
          break;
        }
        t *= 0.5;
      }
      res.iterations = it + 1;
      if (!accepted) {
        if (!S.empty()) {
          S.clear();
          Y.clear();
          rho.clear();
          continue;
        }
        // no descent possible along the preconditioned gradient: stationary to round-off
        res.converged = true;
        break;
      }
      VecX s = xn - x, y = gn - g;
      const double sy = s.dot(y);
      if (sy > 1e-12 * s.norm() * y.norm()) {
        S.push_back(s);
        Y.push_back(y);
        rho.push_back(1.0 / sy);
        if (static_cast<int>(S.size()) > memory_) {
          S.pop_front();
          Y.pop_front();
          rho.pop_front();
        }
      }
      x = xn;
      g = gn;
      f = fn;
      u = trial;
      if (it % 25 == 24) {
        if (recent_best - f <= 1e-14 * std::max(1.0, std::abs(f))) {
          if (++stall >= 2) {
            res.converged = true;
            break;
          }
        } else {
          stall = 0;
        }
        recent_best = f;
      }
    }
    res.energy_end = f;
    return res;
  }

 private:
  VecX apply_h0(const VecX& g) const { return 0.5 * chol_.solve(g); }

  VecX two_loop(const VecX& g, const std::deque<VecX>& S, const std::deque<VecX>& Y,
                const std::deque<double>& rho) const {
    VecX q = g;
    std::vector<double> a(S.size());
    for (int k = static_cast<int>(S.size()) - 1; k >= 0; --k) {
      a[k] = rho[k] * S[k].dot(q);
      q -= a[k] * Y[k];
    }
    VecX r = apply_h0(q);
    for (std::size_t k = 0; k < S.size(); ++k) {
      const double b = rho[k] * Y[k].dot(r);
      r += (a[k] - b) * S[k];
    }
    return r;
  }

  const EnergyModel& model_;
  const ConservativeSystem& sys_;
  const Eigen::SimplicialLLT<SpMat>& chol_;
  int memory_;
};

inline double data_scale(const ScalarField& u) {
  const GridSpec& g = u.grid();
  double s = 0.0;
  for (int j = 0; j < g.n2(); ++j)
    for (int i = 0; i < g.n1(); ++i)
      if (g.on_boundary(i, j)) s = std::max(s, std::abs(u(i, j)));
  return s > 0.0 ? s : 1.0;
}

inline NodeMask interior_mask(const GridSpec& g) {
  NodeMask mk(g.size(), 0);
  for (int j = 1; j < g.n2() - 1; ++j)
    for (int i = 1; i < g.n1() - 1; ++i) mk[g.index(i, j)] = 1;
  return mk;
}

inline void check_start(const ScalarField& initial, const BoundaryData& bd, const PhaseParams& p,
                        const SolveConfig& cfg) {
  p.validate();
  cfg.validate();
  if (!initial.all_finite()) throw PreconditionError("initial field has non-finite values");
  if (!bd.matches(initial)) throw PreconditionError("initial field does not satisfy the boundary data");
}

}  // namespace detail

/// Absolute phase threshold used by the minimizers.
inline double solver_delta0(const ScalarField& u, const SolveConfig& cfg) {
  return cfg.delta0 ? *cfg.delta0 : 1e-3 * detail::data_scale(u);
}

/// Sharp energy with the solver's phase measure and threshold.
inline double solver_energy(const ScalarField& u, const PhaseParams& p, const SolveConfig& cfg) {
  EnergyModel model(u.grid(), p, cfg.m, solver_delta0(u, cfg), cfg.measure);
  return model.evaluate(u.values(), 0.0, nullptr).total();
}

/// With the subcell measure a node whose eight neighbours and itself lie in
/// [−δ₀, δ₀] does not enter the energy; such nodes are set to 0.
inline void canonicalize_cavity(ScalarField& u, double delta0, const SolveConfig& cfg) {
  if (cfg.measure != PhaseMeasure::subcell) return;
  const GridSpec& g = u.grid();
  std::vector<std::size_t> free_nodes;
  for (int j = 1; j < g.n2() - 1; ++j)
    for (int i = 1; i < g.n1() - 1; ++i) {
      bool all = true;
      for (int dj = -1; dj <= 1 && all; ++dj)
        for (int di = -1; di <= 1 && all; ++di) all = std::abs(u(i + di, j + dj)) <= delta0;
      if (all) free_nodes.push_back(g.index(i, j));
    }
  for (std::size_t k : free_nodes) u[k] = 0.0;
}

/// Quasi-Newton descent on the smoothed surrogate with eps continuation.
inline MinimizeResult minimize_smoothed(const ScalarField& initial, const BoundaryData& bd, const PhaseParams& p,
                                        const SolveConfig& cfg) {
  detail::check_start(initial, bd, p, cfg);
  const GridSpec& g = initial.grid();
  const double scale = detail::data_scale(initial);
  EnergyModel model(g, p, cfg.m, solver_delta0(initial, cfg), cfg.measure);
  ConservativeSystem sys(g, cfg.m, detail::interior_mask(g));
  Eigen::SimplicialLLT<SpMat> chol(sys.matrix());
  if (chol.info() != Eigen::Success) throw GeometryError("Dirichlet matrix factorization failed");
  detail::LbfgsStage stage(model, sys, chol, cfg.lbfgs_memory);
  MinimizeResult out{initial, {}};
  out.diag.strategy = to_string(Strategy::smoothed);
  for (double eps_rel : cfg.eps_schedule) {
    const double eps = eps_rel * scale;
    detail::StageResult r = stage.run(out.u.values(), eps, cfg.max_iterations, cfg.gradient_tol);
    out.diag.iterations += r.iterations;
    out.diag.residual = r.pg_norm;
    if (r.energy_end > r.energy_start) {
      out.diag.converged = false;
      out.diag.message = "energy increased during continuation stage eps=" + format_double(eps);
    }
    if (!r.converged && out.diag.converged) {
      out.diag.converged = false;
      out.diag.message = "iteration limit reached at eps=" + format_double(eps);
    }
  }
  canonicalize_cavity(out.u, solver_delta0(initial, cfg), cfg);
  out.diag.final_energy = solver_energy(out.u, p, cfg);
  return out;
}

namespace detail {

/// Energy of the cells touching node k, as a function of the value at k.
class LocalEnergy {
 public:
  LocalEnergy(const EnergyModel& model, std::vector<double>& u, std::size_t k)
      : model_(model), u_(u), k_(k), g_(model.grid()) {
    i_ = g_.col(k);
    j_ = g_.row(k);
  }

  double operator()(double v) const {
    const double old = u_[k_];
    u_[k_] = v;
    const double acc = model_.local_energy(u_, i_ - 1, i_, j_ - 1, j_, eps_);
    u_[k_] = old;
    return acc;
  }

  void set_eps(double e) { eps_ = e; }

 private:
  const EnergyModel& model_;
  std::vector<double>& u_;
  std::size_t k_;
  const GridSpec& g_;
  int i_ = 0, j_ = 0;
  double eps_ = 0.0;
};

}  // namespace detail

/// Block coordinate descent: exact harmonic replacement on the nodes whose
/// cells lie in a single phase, then 1D energy minimization at every node
/// touching a cell that meets the phase transition band.
inline MinimizeResult truncation_iterate(const ScalarField& initial, const BoundaryData& bd, const PhaseParams& p,
                                         const SolveConfig& cfg) {
  detail::check_start(initial, bd, p, cfg);
  const GridSpec& g = initial.grid();
  const double scale = detail::data_scale(initial);
  const double delta0 = solver_delta0(initial, cfg);
  const double eps = cfg.eps_schedule.back() * scale;
  EnergyModel model(g, p, cfg.m, delta0, cfg.measure);
  MinimizeResult out{initial, {}};
  out.diag.strategy = to_string(Strategy::truncation);
  std::vector<double>& u = out.u.values();
  double energy = model.evaluate(u, eps, nullptr).total();
  const double band_hi = delta0 + eps;
  auto cell_uniform = [&](int i, int j) {
    const double a = u[g.index(i, j)], b = u[g.index(i + 1, j)], c = u[g.index(i, j + 1)],
                 d = u[g.index(i + 1, j + 1)];
    const double lo = std::min({a, b, c, d}), hi = std::max({a, b, c, d});
    return lo > band_hi || hi < -band_hi;
  };
  int sweep = 0;
  bool converged = false;
  for (; sweep < cfg.max_iterations; ++sweep) {
    const double energy_before = energy;
    // Classify nodes.
    NodeMask bulk(g.size(), 0);
    std::vector<std::size_t> band;
    for (int j = 1; j < g.n2() - 1; ++j)
      for (int i = 1; i < g.n1() - 1; ++i) {
        const bool uni = cell_uniform(i - 1, j - 1) && cell_uniform(i, j - 1) && cell_uniform(i - 1, j) &&
                         cell_uniform(i, j);
        if (uni)
          bulk[g.index(i, j)] = 1;
        else
          band.push_back(g.index(i, j));
      }
    // Harmonic replacement on the bulk, accepted with backtracking.
    if (std::any_of(bulk.begin(), bulk.end(), [](std::uint8_t b) { return b != 0; })) {
      ScalarField cur = out.u;
      ScalarField rep = solve_interior_dirichlet(bulk, cur, cfg.m, cfg.linear_tol);
      std::vector<double> trial(u.size());
      double t = 1.0;
      for (int ls = 0; ls < 30; ++ls) {
        for (std::size_t k = 0; k < u.size(); ++k) trial[k] = cur[k] + t * (rep[k] - cur[k]);
        const double e = model.evaluate(trial, eps, nullptr).total();
        if (e <= energy) {
          u = trial;
          energy = e;
          break;
        }
        t *= 0.5;
      }
    }
    // Coordinate relaxation on the band.
    for (std::size_t k : band) {
      detail::LocalEnergy f(model, u, k);
      f.set_eps(eps);
      const int i = g.col(k), j = g.row(k);
      double lo = u[k], hi = u[k];
      for (auto nb : {g.index(i - 1, j), g.index(i + 1, j), g.index(i, j - 1), g.index(i, j + 1),
                      g.index(i - 1, j - 1), g.index(i + 1, j + 1), g.index(i - 1, j + 1), g.index(i + 1, j - 1)}) {
        lo = std::min(lo, u[nb]);
        hi = std::max(hi, u[nb]);
      }
      lo = std::min(lo, -band_hi);
      hi = std::max(hi, band_hi);
      const double f0 = f(u[k]);
      const int nsamp = 48;
      double best_v = u[k], best_f = f0;
      for (int s = 0; s <= nsamp; ++s) {
        const double v = lo + (hi - lo) * s / nsamp;
        const double fv = f(v);
        if (fv < best_f) {
          best_f = fv;
          best_v = v;
        }
      }
      // golden-section refinement around the best sample
      double a = std::max(lo, best_v - (hi - lo) / nsamp), b = std::min(hi, best_v + (hi - lo) / nsamp);
      const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
      double c = b - gr * (b - a), d = a + gr * (b - a);
      double fc = f(c), fd = f(d);
      for (int it = 0; it < 40 && b - a > 1e-15 * std::max(1.0, std::abs(best_v)); ++it) {
        if (fc < fd) {
          b = d;
          d = c;
          fd = fc;
          c = b - gr * (b - a);
          fc = f(c);
        } else {
          a = c;
          c = d;
          fc = fd;
          d = a + gr * (b - a);
          fd = f(d);
        }
      }
      const double vr = fc < fd ? c : d;
      const double fr = std::min(fc, fd);
      if (fr < best_f) {
        best_f = fr;
        best_v = vr;
      }
      if (best_f < f0) u[k] = best_v;
    }
    energy = model.evaluate(u, eps, nullptr).total();
    if (energy > energy_before + 1e-12 * std::abs(energy_before)) {
      out.diag.converged = false;
      out.diag.message = "energy increased during sweep " + std::to_string(sweep);
      break;
    }
    if (energy_before - energy <= 1e-13 * std::max(1.0, std::abs(energy))) {
      converged = true;
      ++sweep;
      break;
    }
  }
  out.diag.iterations = sweep;
  if (!converged && out.diag.converged) {
    out.diag.converged = false;
    out.diag.message = "sweep limit reached";
  }
  // report the same preconditioned gradient norm as the smoothed strategy
  {
    ConservativeSystem sys(g, cfg.m, detail::interior_mask(g));
    Eigen::SimplicialLLT<SpMat> chol(sys.matrix());
    std::vector<double> grad;
    model.evaluate(u, eps, &grad);
    VecX gv = sys.gather(grad);
    out.diag.residual = std::sqrt(std::max(0.0, gv.dot(0.5 * chol.solve(gv))));
  }
  canonicalize_cavity(out.u, delta0, cfg);
  out.diag.final_energy = solver_energy(out.u, p, cfg);
  return out;
}

/// Runs the configured strategy; with `both`, returns the lower sharp energy,
/// ties within 1e-12 going to the smoothed result. With coarse_levels > 0 the
/// interior of `initial` is replaced by the interpolated coarse solution.
inline MinimizeResult minimize(const ScalarField& initial, const BoundaryData& bd, const PhaseParams& p,
                               const SolveConfig& cfg) {
  const GridSpec& g = initial.grid();
  if (cfg.coarse_levels > 0 && (g.n1() - 1) % 2 == 0 && (g.n2() - 1) % 2 == 0 && g.n1() >= 9 && g.n2() >= 9) {
    detail::check_start(initial, bd, p, cfg);
    const GridSpec cg(g.x1_lo(), g.x2_lo(), (g.n1() - 1) / 2 + 1, (g.n2() - 1) / 2 + 1, 2.0 * g.h());
    ScalarField cu(cg);
    for (int j = 0; j < cg.n2(); ++j)
      for (int i = 0; i < cg.n1(); ++i) cu(i, j) = initial(2 * i, 2 * j);
    SolveConfig ccfg = cfg;
    ccfg.coarse_levels = cfg.coarse_levels - 1;
    ccfg.delta0 = 2.0 * solver_delta0(initial, cfg);
    const MinimizeResult coarse = minimize(cu, bd, p, ccfg);
    // Re-lift from the coarse band [−2δ₀, 2δ₀] to the fine one.
    const double d_f = solver_delta0(initial, cfg), d_c = *ccfg.delta0;
    auto relift = [&](double v) {
      const double a = std::abs(v);
      return std::copysign(a <= d_c ? a * d_f / d_c : a - d_c + d_f, v);
    };
    ScalarField start =
        ScalarField::from_function(g, [&](double x1, double x2) { return relift(coarse.u.sample({x1, x2})); });
    bd.apply(start);
    SolveConfig fcfg = cfg;
    fcfg.coarse_levels = 0;
    fcfg.delta0 = d_f;
    fcfg.eps_schedule.assign(cfg.eps_schedule.end() - std::min<std::ptrdiff_t>(2, std::ssize(cfg.eps_schedule)), cfg.eps_schedule.end());
    MinimizeResult out = minimize(start, bd, p, fcfg);
    out.diag.iterations += coarse.diag.iterations;
    if (!coarse.diag.converged) {
      out.diag.converged = false;
      out.diag.message = "coarse level: " + coarse.diag.message + (out.diag.message.empty() ? "" : "; " + out.diag.message);
    }
    return out;
  }
  if (cfg.strategy == Strategy::smoothed) return minimize_smoothed(initial, bd, p, cfg);
  if (cfg.strategy == Strategy::truncation) return truncation_iterate(initial, bd, p, cfg);
  MinimizeResult a = minimize_smoothed(initial, bd, p, cfg);
  MinimizeResult b = truncation_iterate(initial, bd, p, cfg);
  const double ea = a.diag.final_energy, eb = b.diag.final_energy;
  MinimizeResult& win = (eb < ea - 1e-12 * std::max(1.0, std::abs(ea))) ? b : a;
  MinimizeResult out = win;
  out.diag.energy_smoothed = ea;
  out.diag.energy_truncation = eb;
  out.diag.strategy = to_string(Strategy::both) + ":" + win.diag.strategy;
  out.diag.converged = a.diag.converged && b.diag.converged;
  if (!a.diag.converged) out.diag.message = "smoothed: " + a.diag.message;
  if (!b.diag.converged) out.diag.message += (out.diag.message.empty() ? "" : "; ") + ("truncation: " + b.diag.message);
  return out;
}

}  // namespace axibern
