#include "doctest.h"

#include "riemmix/errors.hpp"
#include "riemmix/harness.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <sys/wait.h>

using namespace riemmix;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("riemmix_harness_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

struct Shell {
  int code;
  std::string output;
};

Shell cli(const std::string& args) {
  const fs::path log = fs::temp_directory_path() / "riemmix_harness_cli.log";
  const std::string cmd = std::string(RIEMMIX_CLI) + " " + args + " >" + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(log)};
}

RunConfig generated(long n, long k, long d, std::uint64_t seed, const fs::path& out) {
  RunConfig c;
  c.gen_n = n;
  c.gen_k = k;
  c.gen_d = d;
  c.k = k;
  c.seed = seed;
  c.out = out.string();
  c.init_candidates = 5;
  return c;
}

std::vector<std::vector<std::string>> csv_rows(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

}  // namespace

TEST_CASE("config echo round trips byte for byte") {
  RunConfig c;
  c.gen_n = 50;
  c.k = 3;
  c.solver = "cg";
  c.beta = 0.25;
  c.step_end = 1e-4;
  c.seed = 18446744073709551615ull;
  const std::string once = config_to_json(c).dump(2);
  const std::string twice = config_to_json(config_from_json(Json::parse(once))).dump(2);
  CHECK(once == twice);

  Json bad = config_to_json(c);
  bad["learning-rate"] = 0.1;
  CHECK_THROWS_AS(config_from_json(bad), ArgumentError);
  Json typed = config_to_json(c);
  typed["k"] = "three";
  CHECK_THROWS_AS(config_from_json(typed), ArgumentError);
}

TEST_CASE("validation names the valid solvers") {
  RunConfig c;
  c.gen_n = 10;
  c.solver = "newton";
  try {
    validate_config(c);
    FAIL("expected a validation error");
  } catch (const ArgumentError& e) {
    const std::string msg = e.what();
    for (const auto& s : valid_solvers()) CHECK(msg.find(s) != std::string::npos);
  }
  c.solver = "lbfgs";
  c.data_path = "x.csv";
  CHECK_THROWS_AS(load_dataset(c), ArgumentError);
}

TEST_CASE("fit on single Gaussian data recovers the sample MLE") {
  const fs::path out = scratch("fit_mle");
  RunConfig c = generated(400, 1, 3, 5, out);
  c.penalty = "none";
  c.obj_tol = 0.0;
  c.grad_tol = 1e-10;
  std::ostringstream log;
  REQUIRE(cmd_fit(c, log) == 0);
  CHECK(log.str().find("fit: lbfgs stopped on") != std::string::npos);
  const Json report = Json::parse(slurp(out / "report.json"));
  const MixtureEstimate est = estimate_from_json(report["run"]["estimate"]);
  const MixtureEstimate mle = gaussian_mle(load_dataset(c).rows);
  CHECK((est.means[0] - mle.means[0]).norm() <= 1e-4 * std::max(1.0, mle.means[0].norm()));
  CHECK((est.covariances[0] - mle.covariances[0]).norm() <= 1e-4 * mle.covariances[0].norm());
  CHECK(report["config"] == config_to_json(c));
  CHECK(report["rng"] == std::string(kRngName));
  CHECK(report["version"] == std::string(kVersion));
  const auto trace = csv_rows(slurp(out / "trace.csv"));
  REQUIRE(trace.size() >= 2);
  CHECK(trace[0] == std::vector<std::string>{"evals", "objective", "grad_norm", "wall_ms"});
}

TEST_CASE("fit is byte-for-byte reproducible") {
  for (const std::string solver : {"lbfgs", "sgd", "em"}) {
    const fs::path a = scratch("det_a"), b = scratch("det_b");
    RunConfig c = generated(300, 2, 2, 11, a);
    c.solver = solver;
    std::ostringstream log;
    REQUIRE(cmd_fit(c, log) == 0);
    c.out = b.string();
    REQUIRE(cmd_fit(c, log) == 0);
    CHECK(slurp(a / "trace.csv") == slurp(b / "trace.csv"));
  }
}

TEST_CASE("compare shares one initialization and writes gap curves") {
  const fs::path out = scratch("compare");
  RunConfig c = generated(800, 2, 2, 21, out);
  c.gen_separation = 6.0;
  c.solvers = {"lbfgs", "em"};
  std::ostringstream log;
  REQUIRE(cmd_compare(c, log) == 0);
  const auto rows = csv_rows(slurp(out / "compare.csv"));
  REQUIRE(rows.size() > 2);
  CHECK(rows[0] == std::vector<std::string>{"solver", "evals", "gap"});
  std::map<std::string, double> last, lowest;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const std::string& s = rows[i][0];
    const double gap = std::stod(rows[i][2]);
    if (last.count(s)) CHECK(gap <= last[s]);
    last[s] = gap;
    lowest[s] = lowest.count(s) ? std::min(lowest[s], gap) : gap;
  }
  CHECK(lowest["lbfgs"] <= 1e-3);
  CHECK(lowest["em"] <= 1e-3);
  CHECK(fs::exists(out / "trace-lbfgs.csv"));
  CHECK(fs::exists(out / "trace-em.csv"));
  // The first record of every solver is the shared starting point.
  const auto ta = csv_rows(slurp(out / "trace-lbfgs.csv"));
  const auto tb = csv_rows(slurp(out / "trace-em.csv"));
  CHECK(ta[1][1] == tb[1][1]);
}

TEST_CASE("compare reports a failed solver with exit code 4") {
  const fs::path out = scratch("compare_fail");
  RunConfig c = generated(200, 2, 2, 22, out);
  c.solvers = {"lbfgs", "cg", "em"};
  std::ostringstream log;
  CommandHooks hooks;
  hooks.fail_solver = "cg";
  CHECK(cmd_compare(c, log, hooks) == 4);
  CHECK(fs::exists(out / "trace-lbfgs.csv"));
  CHECK(fs::exists(out / "trace-em.csv"));
  CHECK_FALSE(fs::exists(out / "trace-cg.csv"));
  const Json report = Json::parse(slurp(out / "compare.json"));
  CHECK(report["failures"][0]["solver"] == "cg");
}

TEST_CASE("gap_curve is the best-so-far gap") {
  ConvergenceTrace t;
  t.records = {{2, 5.0, 0, 0}, {4, 3.0, 0, 0}, {6, 4.0, 0, 0}, {8, 1.0, 0, 0}};
  const auto g = gap_curve(t, 1.0);
  CHECK(g == std::vector<double>{4.0, 2.0, 2.0, 0.0});
  CHECK(trace_csv(t).substr(0, kTraceHeader.size()) == kTraceHeader);
  CHECK(trace_csv(t).find("\n2,-5,0,0\n") != std::string::npos);
}

TEST_CASE("gen writes data and a truth sidecar that round trip") {
  const fs::path a = scratch("gen_a"), b = scratch("gen_b");
  RunConfig c = generated(100, 2, 3, 31, a);
  std::ostringstream log;
  REQUIRE(cmd_gen(c, log) == 0);
  const Dataset back = load_csv(a / "data.csv");
  CHECK(back.n() == 100);
  CHECK(back.d() == 3);
  CHECK(back.rows == load_dataset(c).rows);
  const Json side = Json::parse(slurp(a / "truth.json"));
  const MixtureEstimate truth = estimate_from_json(side["truth"]);
  CHECK(truth.num_components() == 2);
  CHECK(side["seed"] == 31);
  c.out = b.string();
  REQUIRE(cmd_gen(c, log) == 0);
  CHECK(slurp(a / "data.csv") == slurp(b / "data.csv"));
  CHECK(slurp(a / "truth.json") == slurp(b / "truth.json"));

  const fs::path e = scratch("gen_empty");
  RunConfig z = generated(0, 2, 3, 32, e);
  REQUIRE(cmd_gen(z, log) == 0);
  CHECK(slurp(e / "data.csv").empty());
  CHECK(Json::parse(slurp(e / "truth.json"))["n"] == 0);
}

TEST_CASE("gen into an unwritable path fails with exit code 2") {
  const fs::path blocker = scratch("blocker") / "file";
  std::ofstream(blocker) << "x";
  RunConfig c = generated(10, 1, 1, 1, blocker / "sub");
  std::ostringstream log;
  CHECK(cmd_gen(c, log) == 2);
}

TEST_CASE("command line exit codes") {
  const fs::path out = scratch("cli");
  const std::string base = "--out " + out.string();
  CHECK(cli("gen --n 50 --k 2 --d 2 --seed 3 " + base).code == 0);
  const std::string data = " --data " + (out / "data.csv").string();
  const Shell bad = cli("fit --solver newton --k 2" + data + " " + base);
  CHECK(bad.code == 2);
  CHECK(bad.output.find("lbfgs") != std::string::npos);
  CHECK(cli("fit --k 2 --data /nonexistent/file.csv " + base).code == 2);
  CHECK(cli("fit --bogus-flag").code == 2);
  CHECK(cli("fit --solver em --k 2" + data + " " + base).code == 0);
  CHECK(cli("compare --solvers lbfgs em --fail-solver em --k 2" + data + " " + base).code == 4);
}

TEST_CASE("selftest passes and detects a corrupted gradient") {
  const Shell ok = cli("selftest");
  CHECK(ok.code == 0);
  for (const char* group : {"manifold", "gradient", "wolfe", "concavity"}) {
    CHECK(ok.output.find(std::string("selftest: ") + group + " pass") != std::string::npos);
  }
  const Shell broken = cli("selftest --perturb-gradient");
  CHECK(broken.code == 1);
  CHECK(broken.output.find("selftest: gradient FAIL") != std::string::npos);
}
