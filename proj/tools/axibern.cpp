// axibern: minimize, analyze and blow up the two-phase axisymmetric scenarios.
//
// Exit status: 0 on success (property failures are recorded in summary.json),
// 1 on a precondition failure, 2 when a solver did not converge.

#include "axibern/pipeline.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <random>

using namespace axibern;

namespace {

struct Common {
  std::string config;
  std::string scenario;
  std::string out;
  std::string field;
  int grid = 0;
  std::uint64_t seed = 0;
  bool seed_given = false;
};

void add_common(CLI::App* app, Common& c, bool with_field) {
  app->add_option("--config", c.config, "scenario config file")->check(CLI::ExistingFile);
  app->add_option("--scenario", c.scenario, "built-in scenario: stratified, tilted, cavity, membrane-exact");
  app->add_option("--out", c.out, "output directory");
  app->add_option("--grid", c.grid, "cells per unit length")->check(CLI::PositiveNumber);
  app->add_option("--seed", c.seed, "seed recorded in the summary");
  if (with_field) app->add_option("--field", c.field, "field CSV from a previous minimize")->check(CLI::ExistingFile);
}

ScenarioConfig resolve(const Common& c) {
  if (!c.config.empty() && !c.scenario.empty()) throw PreconditionError("give either --config or --scenario");
  ScenarioConfig cfg = !c.config.empty() ? load_scenario_config(c.config)
                                         : default_config(c.scenario.empty() ? "stratified" : c.scenario);
  if (c.grid > 0) set_grid(cfg, c.grid);
  if (c.seed_given) cfg.seed = c.seed;
  if (!c.out.empty()) cfg.out_dir = c.out;
  return cfg;
}

ScalarField field_for(const Common& c, const Scenario& sc, const ScenarioConfig& cfg, bool& converged) {
  if (!c.field.empty()) {
    ScalarField u = read_field_csv(c.field);
    if (!(u.grid() == sc.grid)) throw PreconditionError("field grid does not match the scenario grid");
    return u;
  }
  const MinimizeResult r = solve_scenario(sc, cfg);
  converged = r.diag.converged;
  write_field_csv(r.u, cfg.out_dir + "/field.csv");
  write_json(diagnostics_json(r.diag), cfg.out_dir + "/minimize.json");
  return r.u;
}

int cmd_minimize(const Common& c) {
  const ScenarioConfig cfg = resolve(c);
  if (!cfg.field_scenario()) throw PreconditionError("minimize needs a field scenario");
  ensure_output_dir(cfg.out_dir);
  const Scenario sc = make_scenario(cfg.scenario);
  const MinimizeResult r = solve_scenario(sc, cfg);
  write_field_csv(r.u, cfg.out_dir + "/field.csv");
  write_json(diagnostics_json(r.diag), cfg.out_dir + "/minimize.json");
  std::cout << "energy " << format_double(r.diag.final_energy) << " iterations " << r.diag.iterations
            << (r.diag.converged ? "" : " NOT CONVERGED: " + r.diag.message) << '\n';
  return r.diag.converged ? 0 : 2;
}

int cmd_analysis(const Common& c, bool fb, bool blowup) {
  ScenarioConfig cfg = resolve(c);
  if (!cfg.field_scenario()) throw PreconditionError("this subcommand needs a field scenario");
  cfg.analysis = {fb, blowup, blowup, blowup};
  ensure_output_dir(cfg.out_dir);
  const Scenario sc = make_scenario(cfg.scenario);
  bool converged = true;
  const ScalarField u = field_for(c, sc, cfg, converged);
  const nlohmann::json props = analyze_field(u, sc, cfg, cfg.out_dir);
  write_json(props, cfg.out_dir + (fb ? "/fb_summary.json" : "/blowup_summary.json"));
  std::cout << props.dump(2) << '\n';
  return converged ? 0 : 2;
}

int cmd_linearized(const std::string& problem, const std::string& out) {
  const LinearizedSettings s = load_linearized_problem(problem);
  ensure_output_dir(out);
  const LinearizedOutcome lo = solve_linearized(s);
  lo.v.write_csv(out + "/solution.csv");
  write_json(lo.decay.to_json(), out + "/decay_report.json");
  write_json(lo.to_json(), out + "/linearized.json");
  std::cout << "decay exponent " << format_double(lo.decay.exponent) << (lo.decay.pass ? " PASS" : " FAIL")
            << " ratio " << format_double(lo.decay.ratio) << '\n';
  return lo.converged ? 0 : 2;
}

int cmd_run(const Common& c) {
  const ScenarioConfig cfg = resolve(c);
  const RunOutcome r = run_pipeline(cfg, cfg.out_dir);
  std::cout << "wrote " << cfg.out_dir << "/summary.json\n";
  if (r.summary.contains("properties"))
    for (const auto& [k, v] : r.summary["properties"].items())
      if (v.contains("pass")) std::cout << "  " << k << ": " << (v["pass"].get<bool>() ? "pass" : "FAIL") << '\n';
  return r.converged ? 0 : 2;
}

/// Exact-identity suite; each line is one identity that holds to rounding.
int cmd_selftest(std::uint64_t seed) {
  int failed = 0;
  auto report = [&](const std::string& name, bool ok, double value) {
    std::cout << (ok ? "PASS " : "FAIL ") << name << " (" << format_double(value) << ")\n";
    if (!ok) ++failed;
  };
  {
    const GridSpec g = GridSpec::rectangle(0.5, 1.5, 0.5, 1.5, 1.0 / 64);
    double worst = 0.0;
    for (auto f : std::vector<std::function<double(double, double)>>{
             [](double, double) { return 1.0; }, [](double a, double) { return a; },
             [](double, double b) { return b * b; }, [](double a, double b) { return a * b * b; }})
      worst = std::max(worst, apply_operator_L(ScalarField::from_function(g, f), 0.0).max_abs_defined());
    report("L annihilates 1, x1, x2^2, x1 x2^2", worst < 1e-12, worst);
  }
  {
    const GridSpec g = GridSpec::rectangle(0.5, 1.5, 0.5, 1.5, 1.0 / 32);
    const ScalarField exact = ScalarField::from_function(g, [](double a, double b) { return a * b * b; });
    ScalarField start = exact;
    NodeMask mask(g.size(), 0);
    for (int j = 1; j < g.n2() - 1; ++j)
      for (int i = 1; i < g.n1() - 1; ++i) mask[g.index(i, j)] = 1, start(i, j) = 0.0;
    const ScalarField u = solve_interior_dirichlet(mask, start, 0.0, 1e-13);
    double err = 0.0;
    for (std::size_t k = 0; k < g.size(); ++k) err = std::max(err, std::abs(u[k] - exact[k]));
    report("interior solver reproduces x1 x2^2", err < 1e-10, err);

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> U(-1.0, 1.0), P(0.0, 0.5);
    ScalarField a(g, 0.0), b(g, 0.0);
    for (int j = 0; j < g.n2(); ++j)
      for (int i = 0; i < g.n1(); ++i)
        if (g.on_boundary(i, j)) a(i, j) = U(rng), b(i, j) = a(i, j) + P(rng);
    const ScalarField ua = solve_interior_dirichlet(mask, a, 0.0, 1e-12), ub = solve_interior_dirichlet(mask, b, 0.0, 1e-12);
    double viol = 0.0;
    for (std::size_t k = 0; k < g.size(); ++k) viol = std::max(viol, ua[k] - ub[k]);
    report("comparison principle on random ordered data", viol <= 1e-12, viol);
  }
  {
    LinearizedSettings s;
    s.kind = "transmission";
    s.data = "linear";
    s.tau = -0.3;
    s.p = 0.4;
    s.resolution = 64;
    s.exponent = 2.0;
    const LinearizedOutcome lo = solve_linearized(s);
    report("transmission reproduces the exact linear pair", lo.max_error < 1e-9, lo.max_error);
    s.kind = "membrane";
    s.data = "psi";
    s.exponent = 1.5;
    const LinearizedOutcome mo = solve_linearized(s);
    report("membrane complementarity on the 3/2 solution", mo.residual.complementarity() < 1e-6,
           mo.residual.complementarity());
  }
  {
    const PhaseParams p{2.0, 1.0};
    const TwoPlane H = TwoPlane::make(p, 1.0, 2.5, {0.6, 0.8});
    LocalField ur(1.0, 16);
    for (int j = 0; j < ur.n(); ++j)
      for (int i = 0; i < ur.n(); ++i) ur(i, j) = H(ur.node(i, j));
    const FitResult f = fit_two_plane(ur, p, 1.0);
    report("two-plane self fit", f.eps < 1e-9, f.eps);
  }
  {
    const GridSpec g = GridSpec::rectangle(0, 1, 0, 1, 1.0 / 256);
    const ScalarField up = ScalarField::from_function(g, [](double, double b) { return std::max(b - 0.5, 0.0); });
    const ScalarField um = ScalarField::from_function(g, [](double, double b) { return std::max(0.5 - b, 0.0); });
    const auto tr = acf_phi(up, um, {0.5, 0.5}, {0.1, 0.2, 0.3, 0.4, 0.5}, 1.0, 0.5);
    double worst = 0.0;
    for (const auto& s : tr.samples)
      worst = std::max(worst, std::abs(s.phi / (std::numbers::pi * std::numbers::pi / 4 * std::exp(std::sqrt(s.r))) - 1));
    report("ACF closed-form pair", worst < 1e-3, worst);
  }
  {
    const PhiPropertyReport rep = phi_property_report(PhiTestFunction({0.6, 0.8}));
    report("phi test function properties", rep.all_pass(), rep.c);
  }
  return failed == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"axisymmetric two-phase Bernoulli lab"};
  app.require_subcommand(1);
  Common c;
  auto* mn = app.add_subcommand("minimize", "minimize a scenario and write field.csv");
  auto* fb = app.add_subcommand("analyze-fb", "extract the free boundary and check the boundary conditions");
  auto* bu = app.add_subcommand("blowup", "flatness, ACF, Hoelder, Harnack and linearizing ladders");
  auto* ln = app.add_subcommand("linearized", "solve a half-disc transmission or two-membrane problem");
  auto* rn = app.add_subcommand("run", "full pipeline with summary.json");
  auto* st = app.add_subcommand("selftest", "exact-identity suite");
  add_common(mn, c, false);
  add_common(fb, c, true);
  add_common(bu, c, true);
  add_common(rn, c, false);
  std::string problem, lin_out = "out";
  ln->add_option("--config", problem, "problem file")->required()->check(CLI::ExistingFile);
  ln->add_option("--out", lin_out, "output directory");
  st->add_option("--seed", c.seed, "seed for the randomized comparison check");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }
  for (auto* s : {mn, fb, bu, rn, st})
    if (s->count("--seed")) c.seed_given = true;
  try {
    if (*mn) return cmd_minimize(c);
    if (*fb) return cmd_analysis(c, true, false);
    if (*bu) return cmd_analysis(c, false, true);
    if (*ln) return cmd_linearized(problem, lin_out);
    if (*rn) return cmd_run(c);
    if (*st) return cmd_selftest(c.seed);
  } catch (const std::logic_error& e) {  // PreconditionError and other invariant failures
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
