#pragma once

/// Scenario configuration files and the end-to-end analysis pipeline.
///
/// Config files use a TOML-like INI dialect: `[section]` headers, `key = value`
/// lines, whole-line `#` or `;` comments, optional double quotes on strings.

#include "axibern/blowup.hpp"
#include "axibern/linearized.hpp"
#include "axibern/scenario.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <complex>
#include <cstdint>
#include <filesystem>
#include <set>
#include <sstream>

namespace axibern {

// ------------------------------------------------------------------ config

class ConfigFile {
 public:
  static ConfigFile parse(const std::string& text) {
    std::istringstream is(text);
    ConfigFile c;
    try {
      boost::property_tree::read_ini(is, c.tree_);
    } catch (const boost::property_tree::ini_parser_error& e) {
      throw PreconditionError(std::string("config parse error: ") + e.message() + " (line " +
                              std::to_string(e.line()) + ")");
    }
    return c;
  }

  static ConfigFile load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw PreconditionError("cannot read config " + path);
    std::stringstream ss;
    ss << is.rdbuf();
    return parse(ss.str());
  }

  bool has(const std::string& key) const { return tree_.get_optional<std::string>(key).has_value(); }

  std::string str(const std::string& key, const std::string& fallback) const {
    auto v = tree_.get_optional<std::string>(key);
    if (!v) return fallback;
    std::string s = *v;
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
    return s;
  }

  double num(const std::string& key, double fallback) const {
    if (!has(key)) return fallback;
    const std::string s = str(key, "");
    std::size_t pos = 0;
    double v = 0.0;
    try {
      v = std::stod(s, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != s.size()) throw PreconditionError("config key " + key + " is not a number: '" + s + "'");
    return v;
  }

  int integer(const std::string& key, int fallback) const {
    const double v = num(key, fallback);
    if (v != std::floor(v)) throw PreconditionError("config key " + key + " must be an integer");
    return static_cast<int>(v);
  }

  bool flag(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const std::string s = str(key, "");
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
    throw PreconditionError("config key " + key + " must be true or false");
  }

  std::vector<double> list(const std::string& key, std::vector<double> fallback) const {
    if (!has(key)) return fallback;
    std::string s = str(key, "");
    if (!s.empty() && s.front() == '[' && s.back() == ']') s = s.substr(1, s.size() - 2);
    std::vector<double> out;
    std::stringstream ss(s);
    for (std::string item; std::getline(ss, item, ',');) {
      std::istringstream one(item);
      double v;
      if (!(one >> v)) throw PreconditionError("config key " + key + " has a bad list entry '" + item + "'");
      out.push_back(v);
    }
    return out;
  }

  /// Rejects keys outside `known` ("section.key"), which catches typos.
  void require_known(const std::set<std::string>& known) const {
    for (const auto& [sec, body] : tree_) {
      if (body.empty()) throw PreconditionError("config key '" + sec + "' must live in a section");
      for (const auto& [k, v] : body)
        if (!known.count(sec + "." + k)) throw PreconditionError("unknown config key " + sec + "." + k);
    }
  }

 private:
  boost::property_tree::ptree tree_;
};

/// Problem description for the half-disc solvers. Data families:
/// membrane: psi (exact 3/2 solution), linear, zero; transmission: linear, quadratic, zero.
struct LinearizedSettings {
  std::string kind = "membrane";
  std::string data = "psi";
  double lambda_plus = 2.0;   ///< λ₊ for membranes, α∞ for transmission
  double lambda_minus = 1.0;  ///< λ₋ for membranes, β∞ for transmission
  double l = 1.0;
  double a = 1.0;      ///< psi amplitude on the plus side, or quadratic coefficient
  double shift = 0.0;  ///< psi: 𝒥 = {s > −shift}
  double p = 0.3;
  double tau = 0.0;
  Vec2 e{0.0, 1.0};
  int resolution = 256;
  double exponent = 1.5;
  int max_iterations = 100;

  void validate() const {
    if (kind != "membrane" && kind != "transmission")
      throw PreconditionError("linearized kind must be membrane or transmission");
    const std::set<std::string> families =
        kind == "membrane" ? std::set<std::string>{"psi", "linear", "zero"}
                           : std::set<std::string>{"linear", "quadratic", "zero"};
    if (!families.count(data)) throw PreconditionError("data family '" + data + "' is not available for " + kind);
    if (!(lambda_plus > 0.0 && lambda_minus > 0.0)) throw PreconditionError("linearized constants must be positive");
    if (kind == "membrane" && lambda_minus > lambda_plus) throw PreconditionError("membrane needs lambda_minus <= lambda_plus");
    if (kind == "membrane" && !(l >= 0.0)) throw PreconditionError("membrane load l must be >= 0");
    if (kind == "membrane" && data == "psi" && !(a >= 0.0)) throw PreconditionError("psi amplitude must be >= 0");
    if (kind == "membrane" && data == "linear" && lambda_plus * lambda_plus * p < -l)
      throw PreconditionError("linear membrane data needs lambda_plus^2 p >= -l");
    if (exponent != 1.5 && exponent != 2.0) throw PreconditionError("decay exponent must be 1.5 or 2");
  }
};

struct AnalysisToggles {
  bool fb = true;
  bool blowup = true;
  bool harnack = true;
  bool linearized = true;
};

struct ScenarioConfig {
  ScenarioParams scenario;
  int grid = 64;  ///< cells per unit length
  Strategy strategy = Strategy::smoothed;
  int max_iterations = SolveConfig{}.max_iterations;
  double gradient_tol = SolveConfig{}.gradient_tol;
  double linear_tol = SolveConfig{}.linear_tol;
  AnalysisToggles analysis;
  int flatness_vertices = 16;  ///< 0 analyzes every tp vertex
  double flatness_r0 = 0.25;
  double rho = 0.25;
  std::vector<double> acf_c0{0.0, 1.0, 2.0, 5.0, 10.0, 20.0};
  double acf_gamma = 0.5;
  LinearizedSettings linearized;
  std::string out_dir = "out";
  std::uint64_t seed = 0;

  bool field_scenario() const { return scenario.name != "membrane-exact"; }

  void validate() const {
    const auto& names = field_scenarios();
    if (field_scenario() && std::find(names.begin(), names.end(), scenario.name) == names.end())
      throw PreconditionError("unknown scenario '" + scenario.name + "'");
    scenario.phase.validate();
    if (grid < 8) throw PreconditionError("grid must be at least 8");
    if (!(rho > 0.0 && rho < 1.0)) throw PreconditionError("rho must lie in (0, 1)");
    if (!field_scenario()) linearized.validate();
  }
};

inline Strategy parse_strategy(const std::string& s) {
  for (Strategy k : {Strategy::smoothed, Strategy::truncation, Strategy::both})
    if (s == to_string(k)) return k;
  if (s == "smoothed") return Strategy::smoothed;
  if (s == "truncation") return Strategy::truncation;
  if (s == "both") return Strategy::both;
  throw PreconditionError("strategy must be smoothed, truncation or both");
}

inline LinearizedSettings read_linearized(const ConfigFile& f, const std::string& sec, LinearizedSettings s = {}) {
  s.kind = f.str(sec + ".kind", s.kind);
  s.data = f.str(sec + ".data", s.data);
  s.lambda_plus = f.num(sec + ".lambda_plus", s.lambda_plus);
  s.lambda_minus = f.num(sec + ".lambda_minus", s.lambda_minus);
  s.l = f.num(sec + ".l", s.l);
  s.a = f.num(sec + ".a", s.a);
  s.shift = f.num(sec + ".shift", s.shift);
  s.p = f.num(sec + ".p", s.p);
  s.tau = f.num(sec + ".tau", s.tau);
  s.e = {f.num(sec + ".e1", s.e.x1), f.num(sec + ".e2", s.e.x2)};
  s.resolution = f.integer(sec + ".resolution", s.resolution);
  s.exponent = f.num(sec + ".exponent", s.exponent);
  s.max_iterations = f.integer(sec + ".max_iterations", s.max_iterations);
  return s;
}

inline const std::set<std::string>& linearized_keys(const std::string& sec) {
  static std::map<std::string, std::set<std::string>> cache;
  auto& k = cache[sec];
  if (k.empty())
    for (const char* n : {"kind", "data", "lambda_plus", "lambda_minus", "l", "a", "shift", "p", "tau", "e1", "e2",
                          "resolution", "exponent", "max_iterations"})
      k.insert(sec + "." + n);
  return k;
}

inline ScenarioConfig parse_scenario_config(const ConfigFile& f) {
  std::set<std::string> known{"scenario.name",        "scenario.grid",       "scenario.lambda_plus",
                              "scenario.lambda_minus", "scenario.m",          "scenario.delta0_cells",
                              "scenario.x1_lo",       "scenario.x1_hi",      "scenario.x2_top",
                              "scenario.u_top",       "scenario.u_left",     "scenario.u_right",
                              "scenario.u_outer",     "scenario.u_inner",    "solver.strategy",
                              "solver.max_iterations", "solver.gradient_tol", "solver.linear_tol",
                              "analysis.fb",          "analysis.blowup",     "analysis.harnack",
                              "analysis.linearized",  "analysis.flatness_vertices", "analysis.flatness_r0",
                              "analysis.rho",         "analysis.acf_c0",     "analysis.acf_gamma",
                              "output.dir",           "output.seed"};
  const auto& lk = linearized_keys("linearized");
  known.insert(lk.begin(), lk.end());
  f.require_known(known);

  ScenarioConfig c;
  ScenarioParams& s = c.scenario;
  s.name = f.str("scenario.name", s.name);
  c.grid = f.integer("scenario.grid", c.grid);
  s.phase.lambda_plus = f.num("scenario.lambda_plus", s.phase.lambda_plus);
  s.phase.lambda_minus = f.num("scenario.lambda_minus", s.phase.lambda_minus);
  s.m = f.num("scenario.m", s.m);
  s.delta0_cells = f.num("scenario.delta0_cells", s.delta0_cells);
  s.x1_lo = f.num("scenario.x1_lo", s.x1_lo);
  s.x1_hi = f.num("scenario.x1_hi", s.x1_hi);
  s.x2_top = f.num("scenario.x2_top", s.x2_top);
  s.u_top = f.num("scenario.u_top", s.u_top);
  s.u_left = f.num("scenario.u_left", s.u_left);
  s.u_right = f.num("scenario.u_right", s.u_right);
  s.u_outer = f.num("scenario.u_outer", s.u_outer);
  s.u_inner = f.num("scenario.u_inner", s.u_inner);
  c.strategy = parse_strategy(f.str("solver.strategy", to_string(c.strategy)));
  c.max_iterations = f.integer("solver.max_iterations", c.max_iterations);
  c.gradient_tol = f.num("solver.gradient_tol", c.gradient_tol);
  c.linear_tol = f.num("solver.linear_tol", c.linear_tol);
  c.analysis.fb = f.flag("analysis.fb", c.analysis.fb);
  c.analysis.blowup = f.flag("analysis.blowup", c.analysis.blowup);
  c.analysis.harnack = f.flag("analysis.harnack", c.analysis.harnack);
  c.analysis.linearized = f.flag("analysis.linearized", c.analysis.linearized);
  c.flatness_vertices = f.integer("analysis.flatness_vertices", c.flatness_vertices);
  c.flatness_r0 = f.num("analysis.flatness_r0", c.flatness_r0);
  c.rho = f.num("analysis.rho", c.rho);
  c.acf_c0 = f.list("analysis.acf_c0", c.acf_c0);
  c.acf_gamma = f.num("analysis.acf_gamma", c.acf_gamma);
  c.linearized = read_linearized(f, "linearized");
  c.out_dir = f.str("output.dir", c.out_dir);
  const double seed = f.num("output.seed", 0.0);
  if (seed < 0 || seed != std::floor(seed)) throw PreconditionError("output.seed must be a non-negative integer");
  c.seed = static_cast<std::uint64_t>(seed);
  s.h = 1.0 / c.grid;
  c.validate();
  return c;
}

inline ScenarioConfig load_scenario_config(const std::string& path) { return parse_scenario_config(ConfigFile::load(path)); }

inline ScenarioConfig default_config(const std::string& scenario) {
  ConfigFile f = ConfigFile::parse("[scenario]\nname = " + scenario + "\n");
  return parse_scenario_config(f);
}

/// Applies a grid override and keeps h consistent.
inline void set_grid(ScenarioConfig& c, int n) {
  c.grid = n;
  c.scenario.h = 1.0 / n;
  c.validate();
}

inline LinearizedSettings load_linearized_problem(const std::string& path) {
  const ConfigFile f = ConfigFile::load(path);
  f.require_known(linearized_keys("problem"));
  LinearizedSettings s = read_linearized(f, "problem");
  s.validate();
  return s;
}

// -------------------------------------------------------- linearized cases

namespace detail {

inline double psi(double s, double t) { return std::real(std::pow(std::complex<double>(s, std::abs(t)), 1.5)); }

}  // namespace detail

struct LinearizedCase {
  std::optional<MembraneProblem> membrane;
  std::optional<TransmissionProblem> transmission;
  DecayOptions decay;
};

/// Every data family is an exact solution, so the data interpolant is the oracle.
inline LinearizedCase build_linearized(const LinearizedSettings& s) {
  s.validate();
  const double n = norm(s.e);
  const Vec2 e = (1.0 / n) * s.e, ep{e.x2, -e.x1};
  const double lp = s.lambda_plus, lm = s.lambda_minus, wp = lp * lp, wm = lm * lm;
  LinearizedCase c;
  c.decay.exponent = s.exponent;
  c.decay.w_plus = wp;
  c.decay.w_minus = wm;
  DiscData fp, fm;
  if (s.data == "zero") {
    fp = fm = [](Vec2) { return 0.0; };
  } else if (s.data == "linear") {
    const double tau = s.tau, p = s.p, q = wp * s.p / wm;
    fp = [=](Vec2 x) { return tau * dot(x, ep) + p * dot(x, e); };
    fm = [=](Vec2 x) { return tau * dot(x, ep) + q * dot(x, e); };
  } else if (s.data == "quadratic") {
    const double A = s.a, tau = s.tau, p = s.p, q = wp * s.p / wm;
    fp = [=](Vec2 x) {
      const double a = dot(x, ep), b = dot(x, e);
      return A * (a * a - b * b) + tau * a + p * b;
    };
    fm = [=](Vec2 x) {
      const double a = dot(x, ep), b = dot(x, e);
      return A * (a * a - b * b) + tau * a + q * b;
    };
  } else {  // psi
    const double l = s.l, A = s.a, B = wp * s.a / wm, sh = s.shift;
    fp = [=](Vec2 x) { return -l * dot(x, e) / wp - A * detail::psi(dot(x, ep) + sh, dot(x, e)); };
    fm = [=](Vec2 x) { return -l * dot(x, e) / wm + B * detail::psi(dot(x, ep) + sh, -dot(x, e)); };
  }
  if (s.kind == "membrane") {
    c.membrane = MembraneProblem{lp, lm, s.l, fp, fm, e};
    c.decay.l = s.l;
  } else {
    c.transmission = TransmissionProblem{lp, lm, fp, fm, e};
  }
  return c;
}

struct LinearizedOutcome {
  std::string kind;
  HalfDiscField v{32, {0.0, 1.0}};
  InterfaceResidual residual;
  std::optional<InterfaceClassification> interface;
  bool converged = true;
  int iterations = 0;
  std::string message;
  double max_error = 0.0;  ///< against the exact data family
  DecayReport decay;

  nlohmann::json to_json() const {
    nlohmann::json j{{"kind", kind},
                     {"resolution", v.resolution()},
                     {"converged", converged},
                     {"iterations", iterations},
                     {"message", message},
                     {"max_error", max_error},
                     {"max_gap", residual.max_gap},
                     {"max_flux_mismatch", residual.max_flux_mismatch},
                     {"max_equation", residual.max_equation},
                     {"complementarity", residual.complementarity()},
                     {"decay", decay.to_json()}};
    if (interface) {
      j["n_separated"] = interface->separated.size();
      j["n_contact"] = interface->contact.size();
    }
    return j;
  }
};

inline LinearizedOutcome solve_linearized(const LinearizedSettings& s) {
  const LinearizedCase c = build_linearized(s);
  LinearizedOutcome out;
  out.kind = s.kind;
  if (c.membrane) {
    MembraneSolution m = solve_two_membrane(*c.membrane, s.resolution, s.max_iterations);
    out.v = std::move(m.v);
    out.residual = m.residual;
    out.interface = m.interface;
    out.converged = m.converged;
    out.iterations = m.iterations;
    out.message = m.message;
  } else {
    TransmissionSolution t = solve_transmission(*c.transmission, s.resolution);
    out.v = std::move(t.v);
    out.residual = t.residual;
  }
  const auto& prob_e = c.membrane ? c.membrane->e : c.transmission->e;
  const auto& dp = c.membrane ? c.membrane->data_plus : c.transmission->data_plus;
  const auto& dm = c.membrane ? c.membrane->data_minus : c.transmission->data_minus;
  const HalfDiscField exact = HalfDiscField::from_functions(s.resolution, prob_e, dp, dm);
  const int n = out.v.resolution();
  for (int j = 0; j <= n; ++j)
    for (int i = 0; i <= n; ++i) {
      if (!out.v.inside(i, j)) continue;
      if (j >= out.v.mid()) out.max_error = std::max(out.max_error, std::abs(out.v.plus(i, j) - exact.plus(i, j)));
      if (j <= out.v.mid()) out.max_error = std::max(out.max_error, std::abs(out.v.minus(i, j) - exact.minus(i, j)));
    }
  out.decay = decay_check(out.v, c.decay);
  return out;
}

// ------------------------------------------------------------ field stages

inline SolveConfig solve_config(const Scenario& sc, const ScenarioConfig& c) {
  SolveConfig base;
  base.strategy = c.strategy;
  base.max_iterations = c.max_iterations;
  base.gradient_tol = c.gradient_tol;
  base.linear_tol = c.linear_tol;
  return scenario_solve_config(sc, base);
}

inline MinimizeResult solve_scenario(const Scenario& sc, const ScenarioConfig& c) {
  return minimize(initial_guess(sc.grid, sc.data), sc.data, sc.params.phase, solve_config(sc, c));
}

inline nlohmann::json diagnostics_json(const MinimizeDiagnostics& d) {
  auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  return {{"final_energy", d.final_energy},
          {"iterations", d.iterations},
          {"residual", d.residual},
          {"converged", d.converged},
          {"strategy", d.strategy},
          {"message", d.message},
          {"energy_smoothed", num(d.energy_smoothed)},
          {"energy_truncation", num(d.energy_truncation)}};
}

struct FbAnalysis {
  FreeBoundary fb;
  FBConditionReport report;
  PhaseVolumes volumes;
};

inline FbAnalysis analyze_free_boundary(const ScalarField& u, const Scenario& sc) {
  FbAnalysis a;
  a.fb = extract_free_boundary(u, sc.delta0(), 3 * sc.grid.h());
  BernoulliCheckOptions o;
  o.m = sc.params.m;
  a.report = check_bernoulli_conditions(u, a.fb, sc.params.phase, o);
  a.volumes = phase_volumes(u, sc.delta0());
  return a;
}

/// Analysis centres at tp vertices of γ⁺: the midpoint between the vertex and
/// the nearest γ⁻ vertex, i.e. the middle of the δ₀ strip. `limit` > 0 keeps an
/// evenly spaced subset.
inline std::vector<Vec2> tp_centres(const FreeBoundary& fb, int limit) {
  std::vector<Vec2> tp, minus;
  fb.for_each_vertex([&](int curve, std::size_t, std::size_t, const FbVertex& v) {
    if (curve > 0 && v.tag == FbTag::tp) tp.push_back(v.x);
    if (curve < 0) minus.push_back(v.x);
  });
  if (tp.empty() || minus.empty()) return {};
  if (limit > 0 && tp.size() > static_cast<std::size_t>(limit)) {
    std::vector<Vec2> sub;
    for (int k = 0; k < limit; ++k) sub.push_back(tp[k * tp.size() / limit]);
    tp = std::move(sub);
  }
  std::vector<Vec2> out;
  for (const Vec2& x : tp) {
    Vec2 best = minus.front();
    for (const Vec2& y : minus)
      if (norm(y - x) < norm(best - x)) best = y;
    out.push_back(0.5 * (x + best));
  }
  return out;
}

struct FlatnessStudy {
  std::vector<FlatnessReport> reports;
  double bound = 0.0;        ///< ρ^0.4 · 1.25
  int rungs = 0;             ///< rung pairs with a ratio
  int failing = 0;
  double max_ratio = 0.0;
  double drift_C = 0.0;      ///< smallest C with drift ≤ C·eps(r/ρ) on every rung pair
  int skipped = 0;           ///< centres too close to the grid boundary for one rung

  bool pass() const { return rungs > 0 && failing == 0 && std::isfinite(drift_C); }

  nlohmann::json to_json() const {
    return {{"centres", reports.size()}, {"skipped", skipped},     {"rung_pairs", rungs},
            {"failing", failing},        {"max_ratio", max_ratio}, {"bound", bound},
            {"drift_C", std::isfinite(drift_C) ? nlohmann::json(drift_C) : nlohmann::json(nullptr)},
            {"pass", pass()}};
  }
};

inline FlatnessStudy flatness_study(const ScalarField& u, const Scenario& sc, const std::vector<Vec2>& centres,
                                    double r0_max, double rho) {
  FlatnessStudy st;
  st.bound = std::pow(rho, 0.4) * 1.25;
  const double h = u.grid().h();
  for (const Vec2& x : centres) {
    FlatnessOptions o;
    o.r0 = std::min(r0_max, 0.5 * boundary_distance(u.grid(), x));
    o.rho = rho;
    o.m = sc.params.m;
    o.shrink = sc.delta0();
    if (o.r0 < o.floor_cells * h) {
      ++st.skipped;
      continue;
    }
    FlatnessReport rep = flatness_trace(u, x, sc.params.phase, o);
    for (std::size_t k = 1; k < rep.rungs.size(); ++k) {
      const FlatnessRung& g = rep.rungs[k];
      ++st.rungs;
      st.max_ratio = std::max(st.max_ratio, g.ratio);
      if (!(g.ratio <= st.bound)) ++st.failing;
      const double prev = rep.rungs[k - 1].fit.eps;
      const double c = prev > 0.0 ? g.drift / prev : (g.drift > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
      st.drift_C = std::max(st.drift_C, c);
    }
    st.reports.push_back(std::move(rep));
  }
  return st;
}

/// Grid nodes with |u| ≤ δ₀ nearest to each centre: common zeros of the shrunk phases.
inline std::vector<Vec2> strip_nodes(const ScalarField& u, double delta0, const std::vector<Vec2>& centres) {
  const GridSpec& g = u.grid();
  std::vector<Vec2> out;
  for (const Vec2& x : centres) {
    const int ic = static_cast<int>(std::lround((x.x1 - g.x1_lo()) / g.h()));
    const int jc = static_cast<int>(std::lround((x.x2 - g.x2_lo()) / g.h()));
    std::optional<Vec2> best;
    for (int w = 0; w <= 4 && !best; ++w)
      for (int j = std::max(0, jc - w); j <= std::min(g.n2() - 1, jc + w); ++j)
        for (int i = std::max(0, ic - w); i <= std::min(g.n1() - 1, ic + w); ++i)
          if (std::abs(u(i, j)) <= delta0 && (!best || norm(g.node(i, j) - x) < norm(*best - x))) best = g.node(i, j);
    if (best) out.push_back(*best);
  }
  return out;
}

struct AcfStudy {
  std::vector<Vec2> centres;
  std::vector<std::optional<double>> monotone_c0;  ///< first C₀ of the sweep without a flagged drop
  std::vector<MonotonicityTrace> traces;           ///< at that C₀, or the last of the sweep

  int monotone_count() const {
    return static_cast<int>(std::count_if(monotone_c0.begin(), monotone_c0.end(), [](auto& c) { return c.has_value(); }));
  }
  bool pass() const { return !centres.empty() && monotone_count() == static_cast<int>(centres.size()); }

  nlohmann::json to_json() const {
    nlohmann::json c0 = nlohmann::json::array();
    for (const auto& c : monotone_c0) c0.push_back(c ? nlohmann::json(*c) : nlohmann::json(nullptr));
    return {{"centres", centres.size()}, {"monotone", monotone_count()}, {"c0", c0}, {"pass", pass()}};
  }
};

inline AcfStudy acf_study(const ScalarField& u, double delta0, const std::vector<Vec2>& nodes,
                          const std::vector<double>& c0s, double gamma) {
  AcfStudy st;
  ScalarField up = u, um = u;
  for (std::size_t k = 0; k < u.values().size(); ++k) {
    up[k] = std::max(u[k] - delta0, 0.0);
    um[k] = std::max(-u[k] - delta0, 0.0);
  }
  const double h = u.grid().h();
  for (const Vec2& x : nodes) {
    const double R = std::min(0.25, 0.5 * boundary_distance(u.grid(), x));
    if (R < 8 * h) continue;
    std::vector<double> radii;
    for (int q = 0; q < 16; ++q) radii.push_back(4 * h * std::pow(R / (4 * h), q / 15.0));
    st.centres.push_back(x);
    std::optional<double> good;
    MonotonicityTrace last;
    for (double c0 : c0s) {
      last = acf_phi(up, um, x, radii, c0, gamma);
      if (last.monotone()) {
        good = c0;
        break;
      }
    }
    st.monotone_c0.push_back(good);
    st.traces.push_back(std::move(last));
  }
  return st;
}

struct HarnackStudy {
  std::vector<HarnackResult> results;
  int applicable() const {
    return static_cast<int>(std::count_if(results.begin(), results.end(), [](auto& r) { return r.applicable; }));
  }
  nlohmann::json to_json() const {
    double worst = 0.0;
    nlohmann::json c = nlohmann::json::array();
    for (const auto& r : results) {
      if (r.applicable) worst = std::max(worst, r.contraction);
      c.push_back(r.applicable ? nlohmann::json(r.contraction) : nlohmann::json(r.reason));
    }
    return {{"probes", results.size()}, {"applicable", applicable()}, {"max_contraction", worst}, {"per_probe", c}};
  }
};

/// At each centre: fit on B_r, take the tightest branch-form trap on B₄ and probe it.
inline HarnackStudy harnack_study(const ScalarField& u, const Scenario& sc, const std::vector<Vec2>& centres) {
  HarnackStudy st;
  const double h = u.grid().h();
  for (const Vec2& x : centres) {
    const double r = std::min(0.05, 0.25 * boundary_distance(u.grid(), x));
    if (r < 4 * h) continue;
    const LocalField ur = rescale(u, x, r, RescaleOptions{8, 4.0, sc.delta0()});
    FitOptions fo;
    const FitResult f = fit_two_plane(ur, sc.params.phase, x.x2 + sc.params.m, fo);
    const Trap t0 = tightest_trap(ur, f.plane, sc.params.phase, 4.0, HarnackForm::branch);
    st.results.push_back(harnack_probe(ur, f.plane, sc.params.phase, t0));
  }
  return st;
}

/// Linearizing sequence along the flatness ladder of one centre.
inline LinearizationResult linearized_cross_check(const ScalarField& u, const Scenario& sc, const FlatnessReport& rep) {
  std::vector<RungInput> in;
  for (const FlatnessRung& g : rep.rungs)
    in.push_back({g.r, rescale(u, rep.x0, g.r, RescaleOptions{16, 1.0, sc.delta0()}), g.fit});
  return linearize_sequence(in, sc.params.phase);
}

inline nlohmann::json linearization_json(const LinearizationResult& r) {
  nlohmann::json ls = nlohmann::json::array();
  for (const auto& g : r.rungs) ls.push_back({{"r", g.r}, {"eps", g.fit.eps}, {"l", g.l}, {"reflected", g.reflected}});
  return {{"admitted", r.rungs.size()},
          {"rejected_radii", r.rejected_radii},
          {"converged", r.converged},
          {"divergent", r.divergent},
          {"l_estimate", r.l_estimate ? nlohmann::json(*r.l_estimate) : nlohmann::json(nullptr)},
          {"rungs", ls}};
}

inline nlohmann::json holder_json(const HolderFit& f) {
  return {{"quantity", f.quantity}, {"eta", f.eta},   {"lower", f.lower},
          {"upper", f.upper},       {"pairs", f.pairs}, {"zero_variation", f.zero_variation},
          {"degenerate", f.degenerate}};
}

// -------------------------------------------------------------- artifacts

/// Writes the zero-level picture: γ⁺ blue, γ⁻ red, tp vertices black.
inline void write_free_boundary_svg(const FreeBoundary& fb, const GridSpec& g, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  const double W = 600, pad = 20;
  const double sx = (W - 2 * pad) / std::max(g.x1_hi() - g.x1_lo(), g.x2_hi() - g.x2_lo());
  auto px = [&](Vec2 p) {
    return format_double(pad + (p.x1 - g.x1_lo()) * sx) + "," + format_double(W - pad - (p.x2 - g.x2_lo()) * sx);
  };
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << W << "\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  auto draw = [&](const auto& curves, const char* col) {
    for (const auto& c : curves) {
      os << "<polyline fill=\"none\" stroke=\"" << col << "\" points=\"";
      for (const auto& v : c) os << px(v.x) << ' ';
      os << "\"/>\n";
    }
  };
  draw(fb.gamma_plus, "#1f77b4");
  draw(fb.gamma_minus, "#d62728");
  fb.for_each_vertex([&](int curve, std::size_t, std::size_t, const FbVertex& v) {
    if (curve > 0 && v.tag == FbTag::tp) {
      const std::string p = px(v.x);
      const auto c = p.find(',');
      os << "<circle cx=\"" << p.substr(0, c) << "\" cy=\"" << p.substr(c + 1) << "\" r=\"1.2\" fill=\"black\"/>\n";
    }
  });
  os << "</svg>\n";
}

inline void write_json(const nlohmann::json& j, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << j.dump(2) << '\n';
}

inline void ensure_output_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  const auto probe = std::filesystem::path(dir) / ".write_probe";
  std::ofstream os(probe);
  if (ec || !os) throw PreconditionError("output directory " + dir + " is not writable");
  os.close();
  std::filesystem::remove(probe);
}

// ---------------------------------------------------------------- pipeline

struct RunOutcome {
  nlohmann::json summary;
  bool converged = true;
};

inline nlohmann::json property(bool pass, nlohmann::json fields) {
  fields["pass"] = pass;
  return fields;
}

/// Analyses of a solved field, writing artifacts into dir and returning the summary sections.
inline nlohmann::json analyze_field(const ScalarField& u, const Scenario& sc, const ScenarioConfig& c,
                                    const std::string& dir) {
  namespace fs = std::filesystem;
  nlohmann::json props;
  const double h = sc.grid.h();
  if (!c.analysis.fb && !c.analysis.blowup && !c.analysis.harnack && !c.analysis.linearized) return props;
  const FbAnalysis fa = analyze_free_boundary(u, sc);
  if (c.analysis.fb) {
    write_free_boundary_csv(fa.fb, (fs::path(dir) / "free_boundary.csv").string());
    write_json(fa.report.to_json(), (fs::path(dir) / "fb_report.json").string());
    write_free_boundary_svg(fa.fb, sc.grid, (fs::path(dir) / "free_boundary.svg").string());
    const auto agg = fa.report.aggregate_json();
    props["axis_distance"] = property(fa.report.axis_distance > 0.0, {{"value", agg["axis_distance"]}});
    props["op_residual"] = property(fa.report.mean_rel_r_op <= 0.05, {{"mean_rel_r_op", agg["mean_rel_r_op"]},
                                                                      {"max_abs_r_op", agg["max_abs_r_op"]}});
    const bool slack_ok = fa.report.n_tp == 0 || (fa.report.min_rel_slack_plus >= -0.05 &&
                                                  fa.report.min_rel_slack_minus >= -0.05);
    props["bc2_slack"] = property(slack_ok, {{"n_tp", fa.report.n_tp},
                                             {"min_rel_slack_plus", agg["min_rel_slack_plus"]},
                                             {"min_rel_slack_minus", agg["min_rel_slack_minus"]}});
    props["phase_volumes"] = {{"plus", fa.volumes.plus}, {"minus", fa.volumes.minus}, {"zero", fa.volumes.zero},
                              {"n_branch", fa.report.n_branch}};
  }
  const std::vector<Vec2> centres = tp_centres(fa.fb, c.flatness_vertices);
  FlatnessStudy flat;
  if (c.analysis.blowup || c.analysis.linearized) flat = flatness_study(u, sc, centres, c.flatness_r0, c.rho);
  if (c.analysis.blowup) {
    const fs::path fd = fs::path(dir) / "flatness";
    fs::create_directories(fd);
    for (std::size_t k = 0; k < flat.reports.size(); ++k) {
      const std::string stem = "vertex_" + std::to_string(k);
      flat.reports[k].write_csv((fd / (stem + ".csv")).string());
      if (k == 0) write_flatness_svg(flat.reports[k], (fd / (stem + ".svg")).string());
    }
    const nlohmann::json none{{"applicable", false}, {"note", "no tp rung pair above the 8h floor"}};
    props["flatness_decay"] = flat.rungs > 0 ? flat.to_json() : none;

    const AcfStudy acf = acf_study(u, sc.delta0(), strip_nodes(u, sc.delta0(), centres), c.acf_c0, c.acf_gamma);
    const fs::path ad = fs::path(dir) / "acf";
    fs::create_directories(ad);
    for (std::size_t k = 0; k < acf.traces.size(); ++k) {
      acf.traces[k].write_csv((ad / ("centre_" + std::to_string(k) + ".csv")).string());
      if (k == 0) write_acf_svg(acf.traces[k], (ad / "centre_0.svg").string());
    }
    props["acf_monotonicity"] = acf.centres.empty()
                                    ? nlohmann::json{{"applicable", false}, {"note", "no tp centre"}}
                                    : acf.to_json();

    VertexFitOptions vo;
    vo.m = sc.params.m;
    vo.shrink = sc.delta0();
    std::vector<VertexFit> fits = fit_tp_vertices(u, fa.fb, sc.params.phase, vo);
    if (fits.size() >= 8) {
      HolderOptions ho;
      ho.min_distance = 4 * h;
      const auto [fal, fe] = holder_estimate(fits, ho);
      props["holder"] = property(fal.eta > 0.0 && !fal.degenerate,
                                 {{"alpha", holder_json(fal)}, {"e", holder_json(fe)}, {"vertices", fits.size()}});
    } else {
      props["holder"] = {{"vertices", fits.size()}, {"note", "fewer than 8 tp vertex fits"}};
    }
  }
  if (c.analysis.harnack) props["harnack"] = harnack_study(u, sc, centres).to_json();
  if (c.analysis.linearized) {
    nlohmann::json lin = nlohmann::json::array();
    for (std::size_t k = 0; k < flat.reports.size() && k < 4; ++k) {
      nlohmann::json j = linearization_json(linearized_cross_check(u, sc, flat.reports[k]));
      j["x1"] = flat.reports[k].x0.x1;
      j["x2"] = flat.reports[k].x0.x2;
      lin.push_back(j);
    }
    write_json(lin, (fs::path(dir) / "linearized.json").string());
    props["linearized_cross_check"] = {{"ladders", lin.size()}};
  }
  return props;
}

/// Full pipeline for one config. Property failures land in the summary; only
/// preconditions throw.
inline RunOutcome run_pipeline(const ScenarioConfig& c, const std::string& dir) {
  namespace fs = std::filesystem;
  c.validate();
  ensure_output_dir(dir);
  RunOutcome out;
  nlohmann::json& s = out.summary;
  s["scenario"] = c.scenario.name;
  s["seed"] = c.seed;
  if (!c.field_scenario()) {
    const LinearizedOutcome lo = solve_linearized(c.linearized);
    lo.v.write_csv((fs::path(dir) / "solution.csv").string());
    write_json(lo.decay.to_json(), (fs::path(dir) / "decay_report.json").string());
    s["linearized"] = lo.to_json();
    s["properties"]["decay_check"] = property(lo.decay.pass, {{"exponent", lo.decay.exponent}, {"ratio", lo.decay.ratio}});
    s["properties"]["exact_solution"] = property(lo.max_error < 1e-2, {{"max_error", lo.max_error}});
    if (c.linearized.kind == "membrane")
      s["properties"]["complementarity"] =
          property(lo.residual.complementarity() < 1e-6, {{"value", lo.residual.complementarity()}});
    out.converged = lo.converged;
  } else {
    const Scenario sc = make_scenario(c.scenario);
    s["grid"] = c.grid;
    const MinimizeResult r = solve_scenario(sc, c);
    write_field_csv(r.u, (fs::path(dir) / "field.csv").string());
    write_json(diagnostics_json(r.diag), (fs::path(dir) / "minimize.json").string());
    s["minimize"] = diagnostics_json(r.diag);
    s["properties"] = analyze_field(r.u, sc, c, dir);
    out.converged = r.diag.converged;
  }
  write_json(s, (fs::path(dir) / "summary.json").string());
  return out;
}

}  // namespace axibern
