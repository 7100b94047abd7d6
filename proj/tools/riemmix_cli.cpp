#include "riemmix/harness.hpp"

#include "CLI11.hpp"

#include <iostream>

using namespace riemmix;

namespace {

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> solver;
  std::optional<long> k;
  std::optional<long> batch_size;
  std::optional<int> max_epochs;
  std::optional<std::string> retraction;
  std::optional<std::string> data;
  std::optional<long> n;
  std::optional<long> d;
  std::vector<std::string> solvers;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "JSON run configuration");
  cmd->add_option("--seed", o.seed, "master seed");
  cmd->add_option("--out", o.out, "output directory");
  cmd->add_option("--k", o.k, "number of components");
}

void add_solver_flags(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--solver", o.solver, "lbfgs, cg, sgd or em");
  cmd->add_option("--batch-size", o.batch_size, "SGD batch size (default d)");
  cmd->add_option("--max-epochs", o.max_epochs, "SGD epoch budget");
  cmd->add_option("--retraction", o.retraction, "exp or euclidean");
  cmd->add_option("--data", o.data, "CSV data file");
}

RunConfig resolve(const Overrides& o) {
  RunConfig c = o.config.empty() ? RunConfig{} : load_config(o.config);
  if (o.seed) c.seed = *o.seed;
  if (o.out) c.out = *o.out;
  if (o.solver) c.solver = *o.solver;
  if (o.k) c.k = *o.k;
  if (o.batch_size) c.batch_size = *o.batch_size;
  if (o.max_epochs) c.max_epochs = *o.max_epochs;
  if (o.retraction) c.retraction = *o.retraction;
  if (o.data) {
    c.data_path = *o.data;
    c.gen_n.reset();
  }
  if (o.n) c.gen_n = *o.n;
  if (o.d) c.gen_d = *o.d;
  if (!o.solvers.empty()) c.solvers = o.solvers;
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gaussian mixture fitting by Riemannian optimization"};
  app.require_subcommand(1);
  Overrides o;
  CommandHooks hooks;

  auto* fit = app.add_subcommand("fit", "fit one solver and write trace.csv and report.json");
  add_common(fit, o);
  add_solver_flags(fit, o);

  auto* compare = app.add_subcommand("compare", "run several solvers from one initialization");
  add_common(compare, o);
  add_solver_flags(compare, o);
  compare->add_option("--solvers", o.solvers, "solvers to compare");
  compare->add_option("--fail-solver", hooks.fail_solver, "abort the named solver (testing)");

  auto* gen = app.add_subcommand("gen", "write a synthetic data set and its truth sidecar");
  add_common(gen, o);
  gen->add_option("--n", o.n, "number of samples");
  gen->add_option("--d", o.d, "dimension");

  auto* selftest = app.add_subcommand("selftest", "fast property checks");
  selftest->add_flag("--perturb-gradient", hooks.perturb_gradient, "corrupt the gradient (testing)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (selftest->parsed()) return cmd_selftest(std::cout, hooks);

  RunConfig c;
  try {
    c = resolve(o);
    if (gen->parsed() && o.k) c.gen_k = *o.k;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  if (fit->parsed()) return cmd_fit(c, std::cerr);
  if (compare->parsed()) return cmd_compare(c, std::cerr, hooks);
  return cmd_gen(c, std::cerr);
}
