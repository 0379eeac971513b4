#pragma once

// Experiment orchestration: key-value config with nested sections, seeding,
// worker control, experiment dispatch, and deterministic JSON/CSV/plot-data
// emission. Given (config, seed), every emitted byte is reproducible for any
// worker count.

#include <cstdint>
#include <string>
#include <vector>

#include "brw/models.hpp"
#include "brw/spine.hpp"
#include "brw/stats.hpp"
#include "brw/step_dist.hpp"

namespace brw::harness {

struct ExperimentConfig {
  // [model]
  models::Family family = models::Family::GaussianDyadic;
  double p = 1.0;

  // [run]
  std::uint64_t samples = 100000;
  std::uint64_t direct_replicas = 4000;
  int horizon = 24;
  int k_max = 200;
  double barrier_slack = 15.0;
  double barrier_x = -1.0;  // < 0: no barrier in plain simulation runs
  int subtree_horizon = 25;
  double subtree_slack = 12.0;
  std::int64_t population_cap = 100000000;
  int workers = 0;  // 0 = BRW_LAB_WORKERS or hardware concurrency
  std::uint64_t seed = 42;

  // [analysis]
  std::vector<double> x_grid = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12};
  std::vector<int> t_grid = {0, 5, 10, 15, 20, 25};
  std::vector<double> d_grid;  // derivative-tail grid; empty = log-spaced default
  double epsilon = 0.05;
  double overshoot_x = 8.0;
  int cdinf_horizon = 32;
  double cdinf_barrier = 12.0;
  double ks_alpha = 0.01;
  double tolerance = 1e-6;

  // [walk]
  std::string dist = "srw";  // srw | asym212 | gaussian
  std::string quantity = "rminus";
  std::string method = "dp";
  std::vector<double> u_grid = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  std::vector<double> a_grid = {1, 2, 3, 4, 5};

  models::PointProcessSpec spec() const { return models::make_spec(family, p); }
  spine::MinTailOptions min_tail_options() const;
  StepDistribution step_distribution() const;
  int effective_workers() const;
};

// Key-value configuration: `[section]` headers, `key = value` lines, `#` or
// `;` comments. Unknown keys are rejected with their full path.
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig parse_config_file(const std::string& path);
void apply_setting(ExperimentConfig& cfg, const std::string& section,
                   const std::string& key, const std::string& value);

std::vector<double> parse_grid(const std::string& text);

struct OutputFile {
  std::string name;
  std::string content;
};

struct ExperimentResult {
  std::string name;
  int exit_code = 0;  // 0 contracts pass, 2 statistical gate failed
  std::vector<OutputFile> files;
};

// Dispatch by name: simulate, spine:marginal, spine:many-to-one,
// spine:reversal, renewal, min-tail, theorem:{cM,cDinf,overshoot,
// factorization,smoothing,integrability,truncation}, verify:{lemma25,
// harmonicity,renewal-oracle,many-to-one,reversal}.
ExperimentResult run_experiment(const std::string& which,
                                const ExperimentConfig& cfg);

void write_outputs(const ExperimentResult& result, const std::string& out_dir);

std::string format_double(double v);

}  // namespace brw::harness
