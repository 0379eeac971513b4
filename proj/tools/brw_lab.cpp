// brw-lab: command-line front end for the branching random walk laboratory.
//
// Subcommands: simulate, spine, renewal, min-tail, theorem, verify.
// All runs honor --seed, --out, --workers; BRW_LAB_WORKERS overrides the
// worker count. Exit codes: 0 all contracts passed, 2 a statistical gate
// failed, 1 execution error.

#include <cstdio>
#include <exception>
#include <string>

#include "CLI11.hpp"

#include "brw/harness.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool seed_set = false;
  double samples = 0;
  bool samples_set = false;
  int workers = 0;
  double p = 0;
  bool p_set = false;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "configuration file");
  cmd->add_option("--out", args.out_dir, "output directory");
  auto* s = cmd->add_option("--seed", args.seed, "root seed");
  s->each([&args](const std::string&) { args.seed_set = true; });
  auto* n = cmd->add_option("--samples", args.samples, "sample count (accepts 1e6)");
  n->each([&args](const std::string&) { args.samples_set = true; });
  cmd->add_option("--workers", args.workers, "worker threads (0 = auto)");
  auto* pp = cmd->add_option("--p", args.p, "branching probability");
  pp->each([&args](const std::string&) { args.p_set = true; });
}

brw::harness::ExperimentConfig build_config(const CommonArgs& args) {
  brw::harness::ExperimentConfig cfg;
  if (!args.config_path.empty())
    cfg = brw::harness::parse_config_file(args.config_path);
  if (args.seed_set) cfg.seed = args.seed;
  if (args.samples_set) cfg.samples = static_cast<std::uint64_t>(args.samples);
  if (args.workers > 0) cfg.workers = args.workers;
  if (args.p_set) cfg.p = args.p;
  return cfg;
}

int emit(const brw::harness::ExperimentResult& result, const std::string& out_dir) {
  if (!out_dir.empty()) {
    brw::harness::write_outputs(result, out_dir);
  }
  // the summary always goes to stdout
  for (const auto& f : result.files)
    if (f.name == "summary.json") std::fputs(f.content.c_str(), stdout);
  return result.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"branching random walk laboratory"};
  app.require_subcommand(1);

  CommonArgs sim_args, spine_args, renewal_args, mintail_args, theorem_args,
      verify_args;

  auto* sim_cmd = app.add_subcommand("simulate", "replica tree simulation to CSV");
  add_common(sim_cmd, sim_args);
  int sim_horizon = 0;
  double sim_barrier_x = -1.0;
  sim_cmd->add_option("--horizon", sim_horizon, "generations to simulate");
  sim_cmd->add_option("--barrier-x", sim_barrier_x,
                      "minimum-event level for the adaptive barrier");

  auto* spine_cmd = app.add_subcommand("spine", "spine construction checks");
  add_common(spine_cmd, spine_args);
  std::string spine_check = "marginal";
  spine_cmd->add_option("--check", spine_check, "marginal | many-to-one | reversal");

  auto* renewal_cmd = app.add_subcommand("renewal", "renewal function tables");
  add_common(renewal_cmd, renewal_args);
  std::string ren_dist = "srw", ren_quantity = "rminus", ren_method = "dp",
              ren_u = "0:50";
  double ren_tol = 1e-6;
  renewal_cmd->add_option("--dist", ren_dist, "srw | asym212 | gaussian");
  renewal_cmd->add_option("--quantity", ren_quantity, "rminus | rplus | katoms");
  renewal_cmd->add_option("--method", ren_method, "dp | mc");
  renewal_cmd->add_option("--u", ren_u, "grid, e.g. 0:50");
  renewal_cmd->add_option("--tol", ren_tol, "truncation tolerance");

  auto* mintail_cmd = app.add_subcommand("min-tail", "importance-sampled P(M <= -x)");
  add_common(mintail_cmd, mintail_args);
  double mt_x = 6.0;
  int mt_kmax = 0;
  mintail_cmd->add_option("--x", mt_x, "tail level");
  mintail_cmd->add_option("--kmax", mt_kmax, "maximum spine depth");

  auto* theorem_cmd = app.add_subcommand("theorem", "theorem-level experiments");
  add_common(theorem_cmd, theorem_args);
  std::string which;
  theorem_cmd
      ->add_option("--which", which,
                   "cM | cDinf | overshoot | factorization | smoothing | "
                   "integrability | truncation")
      ->required();

  auto* verify_cmd = app.add_subcommand("verify", "identity / oracle checks");
  add_common(verify_cmd, verify_args);
  std::string verify_name;
  verify_cmd->add_option("name", verify_name,
                         "lemma25 | harmonicity | renewal-oracle | many-to-one | reversal")
      ->required();
  std::string verify_dist = "srw", verify_x = "1:10", verify_a = "1:5";
  verify_cmd->add_option("--dist", verify_dist, "srw | asym212 | gaussian");
  verify_cmd->add_option("--x-grid", verify_x, "x grid");
  verify_cmd->add_option("--a-grid", verify_a, "a grid");
  verify_cmd->add_option("--u-grid", verify_x, "alias of --x-grid");

  try {
    app.parse(argc, argv);

    if (sim_cmd->parsed()) {
      auto cfg = build_config(sim_args);
      if (sim_horizon > 0) cfg.horizon = sim_horizon;
      cfg.barrier_x = sim_barrier_x;
      return emit(brw::harness::run_experiment("simulate", cfg), sim_args.out_dir);
    }
    if (spine_cmd->parsed()) {
      auto cfg = build_config(spine_args);
      return emit(brw::harness::run_experiment("spine:" + spine_check, cfg),
                  spine_args.out_dir);
    }
    if (renewal_cmd->parsed()) {
      auto cfg = build_config(renewal_args);
      cfg.dist = ren_dist;
      cfg.quantity = ren_quantity;
      cfg.method = ren_method;
      cfg.tolerance = ren_tol;
      cfg.u_grid = brw::harness::parse_grid(ren_u);
      return emit(brw::harness::run_experiment("renewal", cfg), renewal_args.out_dir);
    }
    if (mintail_cmd->parsed()) {
      auto cfg = build_config(mintail_args);
      if (mt_kmax > 0) cfg.k_max = mt_kmax;
      cfg.x_grid = {mt_x};
      return emit(brw::harness::run_experiment("min-tail", cfg), mintail_args.out_dir);
    }
    if (theorem_cmd->parsed()) {
      auto cfg = build_config(theorem_args);
      return emit(brw::harness::run_experiment("theorem:" + which, cfg),
                  theorem_args.out_dir);
    }
    if (verify_cmd->parsed()) {
      auto cfg = build_config(verify_args);
      cfg.dist = verify_dist;
      cfg.u_grid = brw::harness::parse_grid(verify_x);
      cfg.a_grid = brw::harness::parse_grid(verify_a);
      return emit(brw::harness::run_experiment("verify:" + verify_name, cfg),
                  verify_args.out_dir);
    }
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
