#pragma once

/// Free-boundary extraction (marching squares at ±δ₀), point classification
/// and the pointwise checks: Bernoulli conditions, axis distance,
/// non-degeneracy, Lipschitz bound and the velocity field.

#include "axibern/energy.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <limits>
#include <map>
#include <unordered_map>

namespace axibern {

enum class FbTag { op_plus, op_minus, tp };

inline std::string to_string(FbTag t) {
  switch (t) {
    case FbTag::op_plus: return "op_plus";
    case FbTag::op_minus: return "op_minus";
    case FbTag::tp: return "tp";
  }
  return "?";
}

struct FbVertex {
  Vec2 x;
  FbTag tag = FbTag::tp;
  bool branch = false;
};

using Polyline = std::vector<FbVertex>;

struct FreeBoundary {
  std::vector<Polyline> gamma_plus;   ///< contours of u at +δ₀
  std::vector<Polyline> gamma_minus;  ///< contours of u at −δ₀
  double delta0 = 0.0;
  double cls_radius = 0.0;

  std::size_t size() const {
    std::size_t n = 0;
    for (const auto* c : {&gamma_plus, &gamma_minus})
      for (const auto& pl : *c) n += pl.size();
    return n;
  }
  bool empty() const { return size() == 0; }

  /// f(curve, polyline, seq, vertex) with curve = +1 for γ⁺ and −1 for γ⁻.
  template <class F>
  void for_each_vertex(F&& f) const {
    for (int c : {+1, -1}) {
      const auto& curves = c > 0 ? gamma_plus : gamma_minus;
      for (std::size_t l = 0; l < curves.size(); ++l)
        for (std::size_t s = 0; s < curves[l].size(); ++s) f(c, l, s, curves[l][s]);
    }
  }
};

namespace detail {

/// Polylines of the boundary of {inside} where inside(v) is v > level
/// (above) or v < level. Vertices sit on grid edges at the linear crossing;
/// saddles are resolved by the cell mean. Closed loops of diameter below h/2
/// are dropped. Output order is deterministic.
inline std::vector<std::vector<Vec2>> contour_polylines(const ScalarField& u, double level, bool above) {
  const GridSpec& g = u.grid();
  auto inside = [&](double v) { return above ? v > level : v < level; };
  const std::size_t n1 = static_cast<std::size_t>(g.n1());
  // edge ids: 2k for (i,j)-(i+1,j), 2k+1 for (i,j)-(i,j+1)
  auto hedge = [&](int i, int j) { return 2 * g.index(i, j); };
  auto vedge = [&](int i, int j) { return 2 * g.index(i, j) + 1; };
  std::map<std::size_t, Vec2> pos;
  auto crossing = [&](std::size_t id) {
    auto it = pos.find(id);
    if (it != pos.end()) return;
    const std::size_t k = id / 2;
    const std::size_t k2 = (id % 2 == 0) ? k + 1 : k + n1;
    const double a = u[k], b = u[k2];
    const double t = (level - a) / (b - a);
    const Vec2 pa = g.node(g.col(k), g.row(k)), pb = g.node(g.col(k2), g.row(k2));
    pos[id] = Vec2{pa.x1 + t * (pb.x1 - pa.x1), pa.x2 + t * (pb.x2 - pa.x2)};
  };
  std::map<std::size_t, std::vector<std::size_t>> adj;
  auto link = [&](std::size_t a, std::size_t b) {
    crossing(a);
    crossing(b);
    adj[a].push_back(b);
    adj[b].push_back(a);
  };
  for (int j = 0; j + 1 < g.n2(); ++j)
    for (int i = 0; i + 1 < g.n1(); ++i) {
      const double v0 = u(i, j), v1 = u(i + 1, j), v2 = u(i + 1, j + 1), v3 = u(i, j + 1);
      const int code = (inside(v0) ? 1 : 0) | (inside(v1) ? 2 : 0) | (inside(v2) ? 4 : 0) | (inside(v3) ? 8 : 0);
      if (code == 0 || code == 15) continue;
      const std::size_t eb = hedge(i, j), er = vedge(i + 1, j), et = hedge(i, j + 1), el = vedge(i, j);
      switch (code) {
        case 1: case 14: link(el, eb); break;
        case 2: case 13: link(eb, er); break;
        case 3: case 12: link(el, er); break;
        case 4: case 11: link(er, et); break;
        case 6: case 9: link(eb, et); break;
        case 7: case 8: link(el, et); break;
        case 5: case 10: {
          const bool center_in = inside(0.25 * (v0 + v1 + v2 + v3));
          // corners 0 and 2 inside for code 5
          const bool join_02 = (code == 5) == center_in;
          if (join_02) {
            link(el, et);
            link(eb, er);
          } else {
            link(el, eb);
            link(er, et);
          }
          break;
        }
        default: break;
      }
    }
  std::vector<std::vector<Vec2>> out;
  std::map<std::size_t, bool> used;
  auto walk = [&](std::size_t start) {
    std::vector<Vec2> pl;
    std::size_t prev = static_cast<std::size_t>(-1), cur = start;
    while (true) {
      used[cur] = true;
      pl.push_back(pos[cur]);
      std::size_t next = static_cast<std::size_t>(-1);
      for (std::size_t nb : adj[cur])
        if (nb != prev && !used[nb]) {
          next = nb;
          break;
        }
      if (next == static_cast<std::size_t>(-1)) {
        // closed loop: repeat the first vertex
        for (std::size_t nb : adj[cur])
          if (nb == start && nb != prev && pl.size() > 2) pl.push_back(pos[start]);
        break;
      }
      prev = cur;
      cur = next;
    }
    out.push_back(std::move(pl));
  };
  for (const auto& [id, nbs] : adj)
    if (nbs.size() == 1 && !used[id]) walk(id);
  for (const auto& [id, nbs] : adj)
    if (!used[id]) walk(id);
  // drop specks: loops around a single node that barely crosses the level
  std::erase_if(out, [&](const std::vector<Vec2>& pl) {
    if (norm(pl.front() - pl.back()) > 1e-12 * g.h()) return false;
    double d = 0.0;
    for (const Vec2& a : pl)
      for (const Vec2& b : pl) d = std::max(d, norm(a - b));
    return d < 0.5 * g.h();
  });
  return out;
}

/// Uniform-bucket point index for radius queries.
class PointIndex {
 public:
  PointIndex(const std::vector<Vec2>& pts, double cell) : pts_(pts), cell_(cell > 0.0 ? cell : 1.0) {
    for (std::size_t k = 0; k < pts.size(); ++k) buckets_[key(bucket(pts[k].x1), bucket(pts[k].x2))].push_back(k);
  }
  /// Distance to the nearest point within r, or +∞.
  double nearest_within(Vec2 p, double r) const {
    double best = std::numeric_limits<double>::infinity();
    const long bi = bucket(p.x1), bj = bucket(p.x2);
    const long reach = static_cast<long>(std::ceil(r / cell_));
    for (long dj = -reach; dj <= reach; ++dj)
      for (long di = -reach; di <= reach; ++di) {
        auto it = buckets_.find(key(bi + di, bj + dj));
        if (it == buckets_.end()) continue;
        for (std::size_t k : it->second) {
          const double d = norm(pts_[k] - p);
          if (d <= r) best = std::min(best, d);
        }
      }
    return best;
  }
  bool any_within(Vec2 p, double r) const {
    const long bi = bucket(p.x1), bj = bucket(p.x2);
    const long reach = static_cast<long>(std::ceil(r / cell_));
    for (long dj = -reach; dj <= reach; ++dj)
      for (long di = -reach; di <= reach; ++di) {
        auto it = buckets_.find(key(bi + di, bj + dj));
        if (it == buckets_.end()) continue;
        for (std::size_t k : it->second)
          if (norm(pts_[k] - p) <= r) return true;
      }
    return false;
  }

 private:
  long bucket(double x) const { return static_cast<long>(std::floor(x / cell_)); }
  static long long key(long a, long b) { return (static_cast<long long>(a) << 32) ^ (static_cast<long long>(b) & 0xffffffffLL); }
  const std::vector<Vec2>& pts_;
  double cell_;
  std::unordered_map<long long, std::vector<std::size_t>> buckets_;
};

}  // namespace detail

/// Contours at ±δ₀ with tp/op tags and branch flags. A vertex of one curve is
/// tp iff a vertex of the other curve lies within cls_radius. Every two-phase
/// crossing carries a zero strip of width w ≈ 2δ₀/|∇u|; with w̄ the median
/// γ⁺–γ⁻ gap over tp vertices, a tp vertex is flagged branch iff the zero-phase
/// area in B_r(vertex), r = cls_radius, exceeds 2r·w̄ + r²/4.
inline FreeBoundary extract_free_boundary(const ScalarField& u, double delta0, double cls_radius) {
  if (!(delta0 >= 0.0)) throw PreconditionError("phase threshold must be non-negative");
  if (!(cls_radius > 0.0)) throw PreconditionError("classification radius must be positive");
  FreeBoundary fb;
  fb.delta0 = delta0;
  fb.cls_radius = cls_radius;
  auto plus = detail::contour_polylines(u, delta0, true);
  auto minus = detail::contour_polylines(u, -delta0, false);
  std::vector<Vec2> pp, mp;
  for (const auto& pl : plus) pp.insert(pp.end(), pl.begin(), pl.end());
  for (const auto& pl : minus) mp.insert(mp.end(), pl.begin(), pl.end());
  const detail::PointIndex pidx(pp, cls_radius), midx(mp, cls_radius);
  std::vector<double> gaps;
  auto build = [&](const std::vector<std::vector<Vec2>>& src, const detail::PointIndex& other, FbTag op,
                   std::vector<Polyline>& dst) {
    for (const auto& pl : src) {
      Polyline out;
      out.reserve(pl.size());
      for (const Vec2& x : pl) {
        FbVertex v;
        v.x = x;
        const double d = other.nearest_within(x, cls_radius);
        v.tag = std::isfinite(d) ? FbTag::tp : op;
        if (v.tag == FbTag::tp) gaps.push_back(d);
        out.push_back(v);
      }
      dst.push_back(std::move(out));
    }
  };
  build(plus, midx, FbTag::op_plus, fb.gamma_plus);
  build(minus, pidx, FbTag::op_minus, fb.gamma_minus);
  if (!gaps.empty()) {
    auto mid = gaps.begin() + static_cast<std::ptrdiff_t>(gaps.size() / 2);
    std::nth_element(gaps.begin(), mid, gaps.end());
    const double strip = 2.0 * cls_radius * *mid;
    for (auto* curves : {&fb.gamma_plus, &fb.gamma_minus})
      for (auto& pl : *curves)
        for (auto& v : pl)
          v.branch = v.tag == FbTag::tp &&
                     phase_volumes(u, delta0, v.x, cls_radius).zero > strip + 0.25 * cls_radius * cls_radius;
  }
  return fb;
}

/// Smallest x₂ over all vertices; +∞ for an empty free boundary.
inline double axis_distance(const FreeBoundary& fb) {
  double b = std::numeric_limits<double>::infinity();
  fb.for_each_vertex([&](int, std::size_t, std::size_t, const FbVertex& v) { b = std::min(b, v.x.x2); });
  return b;
}

inline void write_free_boundary_csv(const FreeBoundary& fb, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << "curve,seq,x1,x2,tag,branch\n";
  fb.for_each_vertex([&](int c, std::size_t l, std::size_t s, const FbVertex& v) {
    os << (c > 0 ? "plus." : "minus.") << l << ',' << s << ',' << format_double(v.x.x1) << ','
       << format_double(v.x.x2) << ',' << to_string(v.tag) << ',' << (v.branch ? 1 : 0) << '\n';
  });
}

struct FbVertexReport {
  int curve = 0;  ///< +1 on γ⁺, −1 on γ⁻
  std::size_t polyline = 0, seq = 0;
  Vec2 x;
  FbTag tag = FbTag::tp;
  bool branch = false;
  bool stencil_ok = true;
  double grad_plus = std::numeric_limits<double>::quiet_NaN();
  double grad_minus = std::numeric_limits<double>::quiet_NaN();
  double r_op = std::numeric_limits<double>::quiet_NaN();  ///< |∇u±| − sλ± on op vertices
  double r_tp = std::numeric_limits<double>::quiet_NaN();  ///< |∇u⁺|² − |∇u⁻|² − s²(λ₊² − λ₋²)
  double slack_plus = std::numeric_limits<double>::quiet_NaN();
  double slack_minus = std::numeric_limits<double>::quiet_NaN();
};

struct FBConditionReport {
  std::vector<FbVertexReport> vertices;
  std::size_t n_op_plus = 0, n_op_minus = 0, n_tp = 0, n_branch = 0, stencil_failures = 0;
  double mean_abs_r_op_plus = 0.0, mean_abs_r_op_minus = 0.0;
  double mean_rel_r_op_plus = 0.0, mean_rel_r_op_minus = 0.0;  ///< mean |r_op±|/(sλ±)
  double mean_rel_r_op = 0.0;                                  ///< pooled over both curves
  double max_abs_r_op = 0.0;
  double mean_abs_r_tp = 0.0, max_abs_r_tp = 0.0;
  double min_rel_slack_plus = std::numeric_limits<double>::infinity();  ///< min s₊/(sλ₊) on tp vertices
  double min_rel_slack_minus = std::numeric_limits<double>::infinity();
  double axis_distance = std::numeric_limits<double>::infinity();

  nlohmann::json aggregate_json() const {
    auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
    return {{"n_op_plus", n_op_plus},
            {"n_op_minus", n_op_minus},
            {"n_tp", n_tp},
            {"n_branch", n_branch},
            {"stencil_failures", stencil_failures},
            {"mean_abs_r_op_plus", num(mean_abs_r_op_plus)},
            {"mean_abs_r_op_minus", num(mean_abs_r_op_minus)},
            {"mean_rel_r_op_plus", num(mean_rel_r_op_plus)},
            {"mean_rel_r_op_minus", num(mean_rel_r_op_minus)},
            {"mean_rel_r_op", num(mean_rel_r_op)},
            {"max_abs_r_op", num(max_abs_r_op)},
            {"mean_abs_r_tp", num(mean_abs_r_tp)},
            {"max_abs_r_tp", num(max_abs_r_tp)},
            {"min_rel_slack_plus", num(min_rel_slack_plus)},
            {"min_rel_slack_minus", num(min_rel_slack_minus)},
            {"axis_distance", num(axis_distance)}};
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["aggregate"] = aggregate_json();
    nlohmann::json vs = nlohmann::json::array();
    auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
    for (const auto& v : vertices)
      vs.push_back({{"curve", v.curve > 0 ? "plus" : "minus"},
                    {"polyline", v.polyline},
                    {"seq", v.seq},
                    {"x1", v.x.x1},
                    {"x2", v.x.x2},
                    {"tag", to_string(v.tag)},
                    {"branch", v.branch},
                    {"stencil_ok", v.stencil_ok},
                    {"grad_plus", num(v.grad_plus)},
                    {"grad_minus", num(v.grad_minus)},
                    {"r_op", num(v.r_op)},
                    {"r_tp", num(v.r_tp)},
                    {"slack_plus", num(v.slack_plus)},
                    {"slack_minus", num(v.slack_minus)}});
    j["vertices"] = vs;
    return j;
  }
};

struct BernoulliCheckOptions {
  double m = 0.0;              ///< the condition is |∇u±| = (x₂+m)λ±
  double own_radius = 2.5;     ///< in units of h; fit on the vertex's own phase, anchored at ±δ₀
  double other_radius = 3.5;   ///< in units of h; fit on the opposite phase at tp vertices
};

/// Per-vertex one-sided gradients and residuals of the free-boundary conditions.
inline FBConditionReport check_bernoulli_conditions(const ScalarField& u, const FreeBoundary& fb, const PhaseParams& p,
                                                    const BernoulliCheckOptions& opt = {}) {
  p.validate();
  const double h = u.grid().h();
  FBConditionReport rep;
  rep.axis_distance = axis_distance(fb);
  double sum_op_p = 0, sum_op_m = 0, rel_p = 0, rel_m = 0, sum_tp = 0;
  const double dl2 = p.lambda_plus * p.lambda_plus - p.lambda_minus * p.lambda_minus;
  fb.for_each_vertex([&](int c, std::size_t l, std::size_t s, const FbVertex& v) {
    FbVertexReport r;
    r.curve = c;
    r.polyline = l;
    r.seq = s;
    r.x = v.x;
    r.tag = v.tag;
    r.branch = v.branch;
    const double sx = v.x.x2 + opt.m;
    const Side own = c > 0 ? Side::plus : Side::minus;
    const Side other = c > 0 ? Side::minus : Side::plus;
    const double level = c > 0 ? fb.delta0 : -fb.delta0;
    Vec2 g_own, g_other;
    bool ok = one_sided_gradient_at(u, v.x, own, fb.delta0, opt.own_radius * h, &level, g_own);
    if (ok && v.tag == FbTag::tp)
      ok = one_sided_gradient_at(u, v.x, other, fb.delta0, opt.other_radius * h, nullptr, g_other);
    r.stencil_ok = ok;
    if (!ok) {
      ++rep.stencil_failures;
      rep.vertices.push_back(r);
      return;
    }
    (c > 0 ? r.grad_plus : r.grad_minus) = norm(g_own);
    if (v.tag == FbTag::tp) {
      (c > 0 ? r.grad_minus : r.grad_plus) = norm(g_other);
      r.r_tp = r.grad_plus * r.grad_plus - r.grad_minus * r.grad_minus - sx * sx * dl2;
      r.slack_plus = r.grad_plus - sx * p.lambda_plus;
      r.slack_minus = r.grad_minus - sx * p.lambda_minus;
      ++rep.n_tp;
      sum_tp += std::abs(r.r_tp);
      rep.max_abs_r_tp = std::max(rep.max_abs_r_tp, std::abs(r.r_tp));
      rep.min_rel_slack_plus = std::min(rep.min_rel_slack_plus, r.slack_plus / (sx * p.lambda_plus));
      rep.min_rel_slack_minus = std::min(rep.min_rel_slack_minus, r.slack_minus / (sx * p.lambda_minus));
    } else if (c > 0) {
      r.r_op = r.grad_plus - sx * p.lambda_plus;
      ++rep.n_op_plus;
      sum_op_p += std::abs(r.r_op);
      rel_p += std::abs(r.r_op) / (sx * p.lambda_plus);
      rep.max_abs_r_op = std::max(rep.max_abs_r_op, std::abs(r.r_op));
    } else {
      r.r_op = r.grad_minus - sx * p.lambda_minus;
      ++rep.n_op_minus;
      sum_op_m += std::abs(r.r_op);
      rel_m += std::abs(r.r_op) / (sx * p.lambda_minus);
      rep.max_abs_r_op = std::max(rep.max_abs_r_op, std::abs(r.r_op));
    }
    if (v.branch) ++rep.n_branch;
    rep.vertices.push_back(r);
  });
  if (rep.n_op_plus) {
    rep.mean_abs_r_op_plus = sum_op_p / rep.n_op_plus;
    rep.mean_rel_r_op_plus = rel_p / rep.n_op_plus;
  }
  if (rep.n_op_minus) {
    rep.mean_abs_r_op_minus = sum_op_m / rep.n_op_minus;
    rep.mean_rel_r_op_minus = rel_m / rep.n_op_minus;
  }
  if (rep.n_op_plus + rep.n_op_minus)
    rep.mean_rel_r_op = (rel_p + rel_m) / static_cast<double>(rep.n_op_plus + rep.n_op_minus);
  if (rep.n_tp) rep.mean_abs_r_tp = sum_tp / rep.n_tp;
  return rep;
}

struct NondegeneracyRecord {
  double lhs_plus = 0.0;  ///< (1/r)(⨍_{∂B_r} (u⁺)²)^{1/2}
  double lhs_minus = 0.0;
  bool vanish_plus = false;  ///< no plus-phase node in B_{κr}
  bool vanish_minus = false;
};

/// Non-degeneracy datum at x0: circle averages of the phase parts on ∂B_r and
/// whether each phase is absent from B_{κr}. Phase parts use the threshold δ₀.
inline NondegeneracyRecord nondegeneracy_probe(const ScalarField& u, Vec2 x0, double r, double kappa,
                                               double delta0 = 0.0) {
  if (!(kappa > 0.0) || kappa > 1.0) throw PreconditionError("kappa must lie in (0, 1]");
  const GridSpec& g = u.grid();
  ScalarField up(g), um(g);
  for (std::size_t k = 0; k < g.size(); ++k) {
    up[k] = u[k] > delta0 ? u[k] : 0.0;
    um[k] = u[k] < -delta0 ? -u[k] : 0.0;
  }
  NondegeneracyRecord rec;
  rec.lhs_plus = std::sqrt(circle_average(up, x0, r, 2.0)) / r;
  rec.lhs_minus = std::sqrt(circle_average(um, x0, r, 2.0)) / r;
  rec.vanish_plus = rec.vanish_minus = true;
  const double rr = kappa * r;
  for (int j = 0; j < g.n2(); ++j)
    for (int i = 0; i < g.n1(); ++i) {
      if (norm(g.node(i, j) - x0) > rr) continue;
      if (u(i, j) > delta0) rec.vanish_plus = false;
      if (u(i, j) < -delta0) rec.vanish_minus = false;
    }
  return rec;
}

struct Box {
  double x1_lo = -std::numeric_limits<double>::infinity(), x1_hi = std::numeric_limits<double>::infinity();
  double x2_lo = -std::numeric_limits<double>::infinity(), x2_hi = std::numeric_limits<double>::infinity();
  bool contains(Vec2 p) const { return p.x1 >= x1_lo && p.x1 <= x1_hi && p.x2 >= x2_lo && p.x2 <= x2_hi; }
};

struct LipschitzRecord {
  double max_grad = 0.0;               ///< max central |∇u| over interior nodes in the region
  double max_grad_over_x2_axis = 0.0;  ///< max |∇u|/x₂ over region nodes with 0 < x₂ < 2b̂
};

inline LipschitzRecord lipschitz_probe(const ScalarField& u, const Box& region = {},
                                       double b_hat = std::numeric_limits<double>::quiet_NaN()) {
  const GridSpec& g = u.grid();
  LipschitzRecord rec;
  for (int j = 1; j < g.n2() - 1; ++j)
    for (int i = 1; i < g.n1() - 1; ++i) {
      const Vec2 x = g.node(i, j);
      if (!region.contains(x)) continue;
      const double gn = norm(gradient_one_sided(u, i, j, Side::central));
      rec.max_grad = std::max(rec.max_grad, gn);
      if (std::isfinite(b_hat) && x.x2 > 0.0 && x.x2 < 2.0 * b_hat)
        rec.max_grad_over_x2_axis = std::max(rec.max_grad_over_x2_axis, gn / x.x2);
    }
  return rec;
}

struct VelocityField {
  ScalarField v, w;
  NodeMask defined;

  /// Central-difference ∂₁(x₂v) + ∂₂(x₂w) at nodes whose stencil is defined.
  OperatorField divergence() const {
    const GridSpec& g = v.grid();
    OperatorField out{ScalarField(g, 0.0), NodeMask(g.size(), 0)};
    const double h = g.h();
    for (int j = 1; j < g.n2() - 1; ++j)
      for (int i = 1; i < g.n1() - 1; ++i) {
        const std::size_t e = g.index(i + 1, j), wst = g.index(i - 1, j), n = g.index(i, j + 1), s = g.index(i, j - 1);
        if (!(defined[e] && defined[wst] && defined[n] && defined[s])) continue;
        out.value(i, j) = (g.x2(j) * (v[e] - v[wst]) + g.x2(j + 1) * w[n] - g.x2(j - 1) * w[s]) / (2.0 * h);
        out.defined[g.index(i, j)] = 1;
      }
    return out;
  }
};

/// v = (1/(√ρ x₂)) ∂₂u and w = −(1/(√ρ x₂)) ∂₁u by central differences on
/// interior nodes of each phase (|u| > δ₀), with ρ of the owning phase.
inline VelocityField velocity_from_stream(const ScalarField& u, const PhaseParams& p, double delta0 = 0.0) {
  const GridSpec& g = u.grid();
  VelocityField vf{ScalarField(g, 0.0), ScalarField(g, 0.0), NodeMask(g.size(), 0)};
  for (int j = 1; j < g.n2() - 1; ++j)
    for (int i = 1; i < g.n1() - 1; ++i) {
      const double x2 = g.x2(j), val = u(i, j);
      if (!(x2 > 0.0)) continue;
      double rho;
      if (val > delta0)
        rho = p.rho_plus;
      else if (val < -delta0)
        rho = p.rho_minus;
      else
        continue;
      const Vec2 d = gradient_one_sided(u, i, j, Side::central);
      const double c = 1.0 / (std::sqrt(rho) * x2);
      vf.v(i, j) = c * d.x2;
      vf.w(i, j) = -c * d.x1;
      vf.defined[g.index(i, j)] = 1;
    }
  return vf;
}

}  // namespace axibern
