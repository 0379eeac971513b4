#pragma once

// The size-biased (spine) construction: simulation under Q and under the
// hybrid measure that reverts to P after generation k, verification of the
// change of measure (many-to-one, spine marginal, time reversal), and the
// rare-event importance sampler for global-minimum events.

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "brw/models.hpp"
#include "brw/rng.hpp"
#include "brw/stats.hpp"
#include "brw/tree.hpp"

namespace brw::spine {

// ---------------------------------------------------------------------------
// Spine path under Q
// ---------------------------------------------------------------------------

class SpinePath {
 public:
  models::PointProcessSpec spec;
  std::vector<double> positions;                // V(w_0)=0 .. V(w_k)
  std::vector<std::vector<double>> sibling_rel; // per step j: displacements
                                                // of B(w_j) relative to w_{j-1}

  int depth() const { return static_cast<int>(positions.size()) - 1; }

  double sibling_abs(int j, std::size_t i) const {
    return positions[static_cast<std::size_t>(j) - 1] +
           sibling_rel[static_cast<std::size_t>(j) - 1][i];
  }

  // Lazily materialized ordinary P-tree rooted at sibling i of B(w_j),
  // positions relative to the sibling. Deterministic per (j, i).
  const sim::TreeState& sibling_subtree(int j, std::size_t i, int horizon,
                                        const sim::BarrierPolicy& barrier) const;

  RngStream subtree_base;

 private:
  mutable std::map<std::pair<int, std::size_t>, sim::TreeState> cache_;
};

SpinePath simulate_spine(const models::PointProcessSpec& spec, int k,
                         RngStream& rng);

// ---------------------------------------------------------------------------
// Registered path functionals (many-to-one) and spine functionals (reversal)
// ---------------------------------------------------------------------------

struct PathFunctional {
  std::string tag;
  // argument: lineage positions S_1..S_n
  std::function<double(std::span<const double>)> eval;
};

const PathFunctional& path_functional(const std::string& tag);
std::vector<std::string> path_functional_tags();

struct SpineView {
  // entry i (0-based) corresponds to index i+1 of the identity
  std::span<const double> positions;                 // V(w_1)..V(w_k) or reversed
  std::span<const std::vector<double>> sibling_sets; // matching displacement sets
};

struct SpineFunctional {
  std::string tag;
  bool needs_subtrees = false;
  std::function<double(const SpineView&)> eval;
};

const SpineFunctional& spine_functional(const std::string& tag);
std::vector<std::string> spine_functional_tags();

// ---------------------------------------------------------------------------
// Change-of-measure checks
// ---------------------------------------------------------------------------

struct ManyToOneOptions {
  bool tilted_walk_side = true;  // evaluate E[e^{S_n} g] by the exact
                                 // exponential change of variables
  int workers = 1;
};

// lhs: tree-side E[sum_{|z|=n} g(path)]; rhs: walk-side E[e^{S_n} g(S_1..S_n)].
std::pair<Estimate, Estimate> many_to_one_check(const models::PointProcessSpec& spec,
                                                int n, const std::string& g_tag,
                                                std::uint64_t n_samples,
                                                std::uint64_t seed,
                                                const ManyToOneOptions& opt = {});

struct TimeReversalOptions {
  bool allow_subtrees = false;
  int workers = 1;
};

std::pair<Estimate, Estimate> time_reversal_check(const models::PointProcessSpec& spec,
                                                  int k, const std::string& phi_tag,
                                                  std::uint64_t n_samples,
                                                  std::uint64_t seed,
                                                  const TimeReversalOptions& opt = {});

// ---------------------------------------------------------------------------
// Hybrid trees (Q up to k, P afterwards)
// ---------------------------------------------------------------------------

struct HybridTree {
  sim::TreeState tree;
  std::vector<std::int64_t> spine;  // indices of w_0..w_k
  int k = 0;
};

HybridTree hybrid_sim(const models::PointProcessSpec& spec, int k, int horizon,
                      const sim::BarrierPolicy& barrier, RngStream& rng,
                      std::int64_t population_cap = 100000000);

struct MinEventWeight {
  int k = 0;
  bool indicator = false;
  double weight = 0.0;  // e^{V(w_k)+x} / N_k when the indicator holds
  int n_k = 1;
  double error_bound = 0.0;  // killed + beyond-horizon mass that could flip it
};

// Evaluates the argmin-at-the-spine event for the interval I(x) = [-x-1, -x)
// on a fully materialized hybrid tree.
MinEventWeight min_event_weight(const HybridTree& hybrid, double x,
                                double tie_rel_tol = 1e-9);

// ---------------------------------------------------------------------------
// Importance-sampled global-minimum tail
// ---------------------------------------------------------------------------

struct MinTailOptions {
  int k_max = 200;
  int subtree_horizon = 25;
  double subtree_slack = 12.0;
  double tie_rel_tol = 1e-9;
  double pilot_fraction = 0.02;
  int workers = 1;
  std::vector<int> t_grid = {25};  // truncation depths recorded per sample
  bool collect_records = false;
  double tail_tolerance = 1e-4;    // geometric-tail reporting threshold
};

struct ConditionalRecord {
  double v_wk = 0.0;    // V(w_k) = M; overshoot at level x is -(v_wk + x)
  double weight = 0.0;  // e^{v_wk + x_base} / (q(k) N_k)
  int k = 0;
  double frak_d = 0.0;  // full min-anchored derivative mass (horizon approx)
  std::vector<double> frak_d_at_t;  // aligned with options.t_grid
  double d_error_bound = 0.0;
  double ind_error_bound = 0.0;
};

struct IntervalContribution {
  int j = 0;  // interval I(x + j)
  double p_hat = 0.0;
  double std_err = 0.0;
  std::uint64_t samples = 0;
};

struct MinTailResult {
  Estimate estimate;       // P(M <= -x)
  double exm_phat = 0.0;   // e^x * p_hat
  double truncation_bound = 0.0;
  double indicator_bias_bound = 0.0;
  std::vector<IntervalContribution> intervals;
  std::vector<std::uint64_t> depth_histogram;
  bool kmax_warning = false;
  std::uint64_t accepted = 0;
  double ess = 0.0;
  double mean_depth = 0.0;  // proposal diagnostics
  std::vector<ConditionalRecord> records;
};

MinTailResult estimate_min_tail(const models::PointProcessSpec& spec, double x,
                                std::uint64_t n_samples, const MinTailOptions& opt,
                                std::uint64_t seed);

}  // namespace brw::spine
