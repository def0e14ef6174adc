#include "axibern/pipeline.hpp"

#include <gtest/gtest.h>

#include <cstdio>
#include <cstdlib>
#include <sys/wait.h>

using namespace axibern;
namespace fs = std::filesystem;

namespace {

struct Result {
  int status = -1;
  std::string output;
};

/// Runs the CLI with stdout and stderr captured.
Result cli(const std::string& args) {
  const std::string cmd = std::string(AXIBERN_CLI_PATH) + " " + args + " 2>&1";
  Result r;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[4096];
  while (std::size_t n = std::fread(buf, 1, sizeof buf, p)) r.output.append(buf, n);
  const int st = pclose(p);
  r.status = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  return r;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("axibern_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

fs::path write_file(const fs::path& dir, const std::string& name, const std::string& text) {
  const fs::path p = dir / name;
  std::ofstream(p) << text;
  return p;
}

nlohmann::json read_json(const fs::path& p) {
  std::ifstream is(p);
  return nlohmann::json::parse(is);
}

std::string first_line(const fs::path& p) {
  std::ifstream is(p);
  std::string s;
  std::getline(is, s);
  return s;
}

}  // namespace

TEST(Config, ParsesSectionsQuotesAndLists) {
  const ScenarioConfig c = parse_scenario_config(ConfigFile::parse(
      "# comment\n[scenario]\nname = \"tilted\"\ngrid = 48\nlambda_plus = 3\nlambda_minus = 2\n"
      "[solver]\nstrategy = both\n[analysis]\nacf_c0 = [0, 2.5, 10]\nharnack = false\n[output]\nseed = 9\n"));
  EXPECT_EQ(c.scenario.name, "tilted");
  EXPECT_EQ(c.grid, 48);
  EXPECT_DOUBLE_EQ(c.scenario.h, 1.0 / 48);
  EXPECT_DOUBLE_EQ(c.scenario.phase.lambda_plus, 3.0);
  EXPECT_EQ(c.strategy, Strategy::both);
  EXPECT_EQ(c.acf_c0, (std::vector<double>{0.0, 2.5, 10.0}));
  EXPECT_FALSE(c.analysis.harnack);
  EXPECT_TRUE(c.analysis.fb);
  EXPECT_EQ(c.seed, 9u);
}

TEST(Config, RejectsBadInput) {
  auto parse = [](const std::string& t) { return parse_scenario_config(ConfigFile::parse(t)); };
  EXPECT_THROW(parse("[scenario]\nnmae = tilted\n"), PreconditionError);
  EXPECT_THROW(parse("[scenario]\ngrid = many\n"), PreconditionError);
  EXPECT_THROW(parse("[scenario]\ngrid = 12.5\n"), PreconditionError);
  EXPECT_THROW(parse("[scenario]\nname = jet\n"), PreconditionError);
  EXPECT_THROW(parse("[scenario]\nlambda_plus = 1\nlambda_minus = 2\n"), PreconditionError);
  EXPECT_THROW(parse("[solver]\nstrategy = newton\n"), PreconditionError);
  EXPECT_THROW(parse("[analysis]\nfb = maybe\n"), PreconditionError);
  EXPECT_THROW(parse("grid = 64\n"), PreconditionError);
  EXPECT_THROW(parse("[scenario]\nname = membrane-exact\n[linearized]\nkind = transmission\ndata = psi\n"),
               PreconditionError);
}

TEST(Config, ShippedConfigsLoad) {
  const fs::path dir = fs::path(AXIBERN_SOURCE_DIR) / "configs";
  for (const char* f : {"stratified.toml", "tilted.toml", "cavity.toml", "membrane_exact.toml"})
    EXPECT_NO_THROW(load_scenario_config((dir / f).string())) << f;
  for (const char* f : {"membrane_separated.toml", "transmission_quadratic.toml"})
    EXPECT_NO_THROW(load_linearized_problem((dir / "problems" / f).string())) << f;
}

TEST(Linearized, DataFamiliesAreExact) {
  LinearizedSettings s;
  s.resolution = 64;
  for (const char* d : {"psi", "linear", "zero"}) {
    s.data = d;
    s.l = std::string(d) == "linear" ? 0.0 : 1.0;
    const LinearizedOutcome o = solve_linearized(s);
    EXPECT_LT(o.max_error, std::string(d) == "psi" ? 2e-3 : 1e-12) << d;
  }
  s.kind = "transmission";
  s.exponent = 2.0;
  for (const char* d : {"linear", "quadratic", "zero"}) {
    s.data = d;
    EXPECT_LT(solve_linearized(s).max_error, 1e-10) << d;
  }
}

TEST(Cli, SelftestPasses) {
  const Result r = cli("selftest --seed 3");
  EXPECT_EQ(r.status, 0) << r.output;
  EXPECT_EQ(r.output.find("FAIL"), std::string::npos);
}

TEST(Cli, StratifiedRunRecordsAxisDistanceAndResidual) {
  const fs::path out = scratch("stratified");
  const Result r = cli("run --scenario stratified --grid 128 --out " + out.string());
  ASSERT_EQ(r.status, 0) << r.output;
  const nlohmann::json s = read_json(out / "summary.json");
  EXPECT_GT(s["properties"]["axis_distance"]["value"].get<double>(), 0.0);
  EXPECT_TRUE(s["properties"]["op_residual"]["mean_rel_r_op"].is_number());
  EXPECT_TRUE(s["properties"]["op_residual"]["max_abs_r_op"].is_number());
  EXPECT_EQ(first_line(out / "free_boundary.csv"), "curve,seq,x1,x2,tag,branch");
  EXPECT_TRUE(fs::exists(out / "field.csv"));
  EXPECT_TRUE(fs::exists(out / "fb_report.json"));
  EXPECT_TRUE(fs::exists(out / "free_boundary.svg"));
  const nlohmann::json m = read_json(out / "minimize.json");
  for (const char* k : {"final_energy", "iterations", "residual"}) EXPECT_TRUE(m.contains(k)) << k;
}

TEST(Cli, InvalidPhaseConstantsExitOne) {
  const fs::path dir = scratch("bad");
  const fs::path cfg = write_file(dir, "bad.toml", "[scenario]\nname = stratified\nlambda_plus = 2\nlambda_minus = 3\n");
  const Result r = cli("run --config " + cfg.string() + " --out " + (dir / "out").string());
  EXPECT_EQ(r.status, 1);
  EXPECT_NE(r.output.find("lambda_plus >= lambda_minus"), std::string::npos) << r.output;
  EXPECT_FALSE(fs::exists(dir / "out" / "summary.json"));
}

TEST(Cli, PreconditionFailuresExitOne) {
  EXPECT_EQ(cli("run --scenario jet --out /tmp").status, 1);
  EXPECT_EQ(cli("run --scenario stratified --out /proc/axibern_nowhere").status, 1);
  EXPECT_EQ(cli("frobnicate").status, 1);
}

TEST(Cli, NonConvergenceExitsTwoWithArtifacts) {
  const fs::path dir = scratch("cap");
  const fs::path cfg =
      write_file(dir, "cap.toml", "[scenario]\nname = tilted\ngrid = 32\n[solver]\nmax_iterations = 1\n");
  const Result r = cli("run --config " + cfg.string() + " --out " + (dir / "out").string());
  EXPECT_EQ(r.status, 2) << r.output;
  const nlohmann::json s = read_json(dir / "out" / "summary.json");
  EXPECT_FALSE(s["minimize"]["converged"].get<bool>());
}

TEST(Cli, MembraneExactRecordsDecayPass) {
  const fs::path out = scratch("membrane");
  const Result r = cli("run --scenario membrane-exact --out " + out.string());
  ASSERT_EQ(r.status, 0) << r.output;
  const nlohmann::json s = read_json(out / "summary.json");
  EXPECT_TRUE(s["properties"]["decay_check"]["pass"].get<bool>());
  EXPECT_DOUBLE_EQ(s["properties"]["decay_check"]["exponent"].get<double>(), 1.5);
  EXPECT_EQ(first_line(out / "solution.csv"), "x1,x2,vplus,vminus");
  const nlohmann::json d = read_json(out / "decay_report.json");
  for (const char* k : {"exponent", "t", "p", "q", "radii", "quotients", "ratio", "pass"}) EXPECT_TRUE(d.contains(k)) << k;
}

TEST(Cli, LinearizedProblemFiles) {
  const fs::path dir = fs::path(AXIBERN_SOURCE_DIR) / "configs" / "problems";
  const fs::path out = scratch("lin");
  Result r = cli("linearized --config " + (dir / "membrane_separated.toml").string() + " --out " + out.string());
  ASSERT_EQ(r.status, 0) << r.output;
  EXPECT_FALSE(read_json(out / "decay_report.json")["pass"].get<bool>());
  r = cli("linearized --config " + (dir / "transmission_quadratic.toml").string() + " --out " + out.string());
  ASSERT_EQ(r.status, 0) << r.output;
  EXPECT_TRUE(read_json(out / "decay_report.json")["pass"].get<bool>());
}

TEST(Cli, MinimizeThenAnalyzeFromField) {
  const fs::path out = scratch("stages");
  ASSERT_EQ(cli("minimize --scenario tilted --grid 32 --out " + out.string()).status, 0);
  const Result fb = cli("analyze-fb --scenario tilted --grid 32 --field " + (out / "field.csv").string() + " --out " +
                        out.string());
  ASSERT_EQ(fb.status, 0) << fb.output;
  EXPECT_TRUE(fs::exists(out / "fb_summary.json"));
  EXPECT_TRUE(fs::exists(out / "free_boundary.csv"));
  const Result bu = cli("blowup --scenario tilted --grid 32 --field " + (out / "field.csv").string() + " --out " +
                        out.string());
  ASSERT_EQ(bu.status, 0) << bu.output;
  EXPECT_TRUE(fs::exists(out / "blowup_summary.json"));
  EXPECT_EQ(cli("analyze-fb --scenario tilted --grid 64 --field " + (out / "field.csv").string() + " --out " +
                out.string())
                .status,
            1);
}

TEST(Cli, RunIsDeterministic) {
  const fs::path a = scratch("det_a"), b = scratch("det_b");
  ASSERT_EQ(cli("run --scenario tilted --grid 32 --seed 5 --out " + a.string()).status, 0);
  ASSERT_EQ(cli("run --scenario tilted --grid 32 --seed 5 --out " + b.string()).status, 0);
  auto slurp = [](const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(is), {});
  };
  EXPECT_EQ(slurp(a / "summary.json"), slurp(b / "summary.json"));
  EXPECT_EQ(read_json(a / "summary.json")["seed"].get<std::uint64_t>(), 5u);
}
