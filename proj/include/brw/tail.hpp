#pragma once

// Theorem-level experiments: the minimum-tail constant, the conditional
// overshoot law, the derivative-martingale tail and its factorization, the
// smoothing-transform fixed point, integrability and truncation profiles.
// Every result is an internal-consistency or stability statement; no external
// constants exist to compare against.

#include <cstdint>
#include <vector>

#include "brw/models.hpp"
#include "brw/spine.hpp"
#include "brw/stats.hpp"
#include "brw/tree.hpp"

namespace brw::tail {

struct TailCurve {
  std::vector<double> x_grid;
  std::vector<double> raw_p, raw_stderr;
  std::vector<double> transformed, transformed_stderr;
  PlateauFit fit;
  bool non_plateau_flag = false;
  std::vector<double> extra;  // per-point diagnostics (truncation bounds etc.)
};

// ---------------------------------------------------------------------------
// Direct-simulation minimum tail (the cross-check partner of the sampler)
// ---------------------------------------------------------------------------

struct DirectMinTail {
  Estimate p_le;             // P(M <= -x)
  Estimate p_interval;       // P(M in [-x-1, -x))
  double unresolved_bound = 0.0;  // killed + beyond-horizon mass per replica
};

DirectMinTail direct_min_tail(const models::PointProcessSpec& spec, double x,
                              int horizon, double slack, std::uint64_t n_replicas,
                              std::uint64_t seed, int workers);

// ---------------------------------------------------------------------------
// Theorem experiments
// ---------------------------------------------------------------------------

TailCurve estimate_cm(const models::PointProcessSpec& spec,
                      const std::vector<double>& x_grid,
                      std::uint64_t samples_per_x,
                      const spine::MinTailOptions& opt, std::uint64_t seed);

struct ConditionalSample {
  double x = 0.0;
  std::vector<spine::ConditionalRecord> records;
  double ess = 0.0;
  std::uint64_t accepted = 0;
  KsReport overshoot_ks;           // -(M+x) against Exp(1)
  double overshoot_mean = 0.0;     // weighted mean of M+x (should -> -1)
  double overshoot_mean_stderr = 0.0;
  double independence_corr = 0.0;  // weighted corr(-(M+x), ln(1+frakD))
  bool ess_warning = false;
};

ConditionalSample conditional_min_law(const models::PointProcessSpec& spec,
                                      double x, std::uint64_t n_samples,
                                      const spine::MinTailOptions& opt,
                                      std::uint64_t seed);

struct DerivativeTailResult {
  TailCurve curve;                        // x * P(D >= x)
  std::vector<double> integral_grid;      // X values for the slow-variation law
  std::vector<double> integral_over_logx; // E[min(D+, X)] / ln X
  std::vector<double> integral_stderr;
  bool horizon_sensitivity_flag = false;
  double survival_fraction = 0.0;
};

DerivativeTailResult estimate_cdinf(const models::PointProcessSpec& spec,
                                    int horizon, const std::vector<double>& x_grid,
                                    std::uint64_t n_replicas, double barrier_level,
                                    std::uint64_t seed, int workers);

struct FactorizationReport {
  Estimate c_m;
  Estimate c_dinf;
  Estimate e_frak;
  double residual = 0.0;
  double combined_halfwidth = 0.0;  // 95% half-widths combined in quadrature
  bool pass = false;
  bool upstream_flags = false;
};

FactorizationReport factorization_check(const TailCurve& cm_curve,
                                        const DerivativeTailResult& cdinf,
                                        const Estimate& frak_mean);

struct SmoothingReport {
  KsReport ks;             // D_h against sum e^{-V(z)} D_h^{(z)}
  KsReport degenerate_ks;  // control with subtree values forced to 0
  Estimate mean_a, mean_b;
};

SmoothingReport smoothing_fixed_point_test(const models::PointProcessSpec& spec,
                                           int horizon, std::uint64_t n_per_side,
                                           double barrier_level, std::uint64_t seed,
                                           int workers);

struct IntegrabilityProfile {
  std::vector<double> x_grid;
  std::vector<Estimate> log2_moment;  // E[frak ln^2(1+frak)]
  std::vector<Estimate> plain_mean;   // E[frak]
  std::vector<double> ess;
  std::vector<bool> heavy_tail_warning;
};

IntegrabilityProfile integrability_profile(const models::PointProcessSpec& spec,
                                           const std::vector<double>& x_grid,
                                           std::uint64_t n_samples,
                                           const spine::MinTailOptions& opt,
                                           std::uint64_t seed);

struct TruncationTable {
  std::vector<int> t_grid;
  std::vector<double> x_grid;
  std::vector<std::vector<double>> p;  // p[t][x] = P(frak gap >= eps | M <= -x)
  std::vector<double> sup_over_x;      // per t
};

TruncationTable truncation_profile(const models::PointProcessSpec& spec,
                                   const std::vector<int>& t_grid,
                                   const std::vector<double>& x_grid,
                                   double epsilon, std::uint64_t n_samples,
                                   const spine::MinTailOptions& opt,
                                   std::uint64_t seed);

// Direct-simulation sample of the min-anchored derivative mass, conditioned on
// M < 0; cross-checks the weighted sampler at x = 0.
Estimate direct_frak_mean(const models::PointProcessSpec& spec, int horizon,
                          double barrier_level, std::uint64_t n_replicas,
                          std::uint64_t seed, int workers);

struct CenteringReport {
  std::vector<int> n_grid;
  std::vector<double> median_centered;  // median of M_n - 1.5 ln n
  std::vector<double> median_wrong;     // median of M_n - 1.0 ln n (control)
};

CenteringReport centering_check(const models::PointProcessSpec& spec,
                                const std::vector<int>& n_grid,
                                std::uint64_t n_replicas, std::uint64_t seed,
                                int workers);

}  // namespace brw::tail
