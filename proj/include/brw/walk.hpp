#pragma once

// One-dimensional fluctuation theory for centered walks: ladder structure,
// renewal functions R-, R+, the extension R~(x, a), the lattice atoms K_a and
// theta_0, and numerical checks of the harmonicity / renewal identities.
//
// Two backends sit behind one interface:
//  * MonteCarloLadder works for any step law (the Gaussian spine walk).
//  * The exact lattice backend is reserved for finite-support integer laws.
//    Ladder-height laws come from first-passage linear systems (banded
//    M-matrices, absorbing boundary far away where the renewal phase has
//    mixed), renewal functions from convolution, and R~ from an independent
//    expected-visits system. Infinite time sums are also offered as truncated
//    series with a self-calibrated j^{-3/2} tail correction, which serves as
//    a third, structurally different route in tests.

#include <functional>
#include <optional>
#include <stdexcept>
#include <vector>

#include "brw/rng.hpp"
#include "brw/stats.hpp"
#include "brw/step_dist.hpp"

namespace brw::walk {

enum class Method { MonteCarloLadder, ExactLatticeDP };

struct ValueWithError {
  double value = 0.0;
  double error_bound = 0.0;
  Method method = Method::ExactLatticeDP;
};

// ---------------------------------------------------------------------------
// Exact lattice backend
// ---------------------------------------------------------------------------

class LatticeOracle {
 public:
  explicit LatticeOracle(const StepDistribution& dist, int cap = 400);

  const StepDistribution& dist() const { return dist_; }

  // Strict descending / ascending ladder height laws: F-(v) = P(H_1^- = -v),
  // F+(v) = P(H_1^+ = +v), v = 1..support width.
  const std::vector<double>& ladder_minus_law() const { return f_minus_; }
  const std::vector<double>& ladder_plus_law() const { return f_plus_; }

  double r_minus(double u) const;  // renewal function of descending ladders
  double r_plus(double u) const;
  double k_atom(double a) const;   // K_a = expected # ascending ladders at a
  double theta0() const { return theta0_; }
  double c_minus() const { return c_minus_; }  // lim R-(u)/u
  double c_plus() const { return c_plus_; }

  // R~(x, a) for integer a >= 0, real x >= 0, via the expected-visits system
  // of the walk killed on entering [0, inf). Independent of the ladder route.
  ValueWithError r_tilde(double x, long a) const;

  // Right-hand side of the renewal identity assembled from ladder data:
  // theta0 [ R-(x){R+(a) - K_a} + sum_m rho-(m) (K - R+)(a - x + m) ].
  double renewal_identity_rhs(double x, long a) const;

  // Green sum E_z[sum_l e^{-a S_l} 1{min >= 0}] solved exactly.
  ValueWithError green_sum_exact(double a_exp, long z) const;

  double error_bound() const { return cap_diff_; }

 private:
  void build(int cap, std::vector<double>& f_minus, std::vector<double>& f_plus,
             double& q0) const;

  StepDistribution dist_;
  int cap_;
  std::vector<double> f_minus_, f_plus_;
  std::vector<double> rho_minus_, k_seq_;  // renewal sequences
  double theta0_ = 0.0, c_minus_ = 0.0, c_plus_ = 0.0;
  double cap_diff_ = 0.0;
};

// ---------------------------------------------------------------------------
// Truncated time-series DP (independent route; also finite-n quantities)
// ---------------------------------------------------------------------------

struct SeriesResult {
  double value = 0.0;        // partial sum + fitted tail
  double partial = 0.0;      // truncated sum alone
  double tail_estimate = 0.0;
  double error_bound = 0.0;
  long terms = 0;
};

SeriesResult dp_rtilde_series(const StepDistribution& dist, double x, long a,
                              long path_length);
SeriesResult dp_theta0_series(const StepDistribution& dist, long path_length);
SeriesResult dp_green_series(const StepDistribution& dist, double a_exp, long z,
                             long path_length);

// Exact finite-n constrained-path probabilities.
double dp_survival(const StepDistribution& dist, long n, double u);
double dp_ballot(const StepDistribution& dist, long n, long a, long lo, long hi);

// ---------------------------------------------------------------------------
// Monte Carlo ladder backend
// ---------------------------------------------------------------------------

struct LadderSample {
  std::vector<double> desc_heights;  // strictly decreasing, excludes H_0 = 0
  std::vector<long long> desc_epochs;
  std::vector<double> asc_heights;   // strictly increasing
  std::vector<long long> asc_epochs;
  long long path_length = 0;
  bool desc_censored = false;  // final epoch may be incomplete at the cap
  bool asc_censored = false;
};

LadderSample ladder_sample(const StepDistribution& dist, long long path_length,
                           RngStream& rng);

// Empirical renewal tables on a regular grid with per-point standard errors.
struct McRenewalTable {
  double du = 0.0;
  std::vector<double> grid;
  std::vector<double> r_minus, r_minus_stderr;
  std::vector<double> r_plus, r_plus_stderr;
  double censored_fraction = 0.0;
  long long replicas = 0;

  double r_minus_at(double u) const;
  double r_plus_at(double u) const;
  double r_minus_stderr_at(double u) const;
};

McRenewalTable mc_renewal_table(const StepDistribution& dist, double u_max,
                                double du, long long replicas,
                                long long path_cap, RngStream& rng);

// Unified per-point access mirroring the spec operation.
ValueWithError renewal_minus(const StepDistribution& dist, double u, Method method,
                             const LatticeOracle* oracle = nullptr,
                             const McRenewalTable* table = nullptr);
ValueWithError renewal_plus(const StepDistribution& dist, double u, Method method,
                            const LatticeOracle* oracle = nullptr,
                            const McRenewalTable* table = nullptr);

// ---------------------------------------------------------------------------
// Statement checks
// ---------------------------------------------------------------------------

struct HarmonicityReport {
  double residual = 0.0;        // R-(u) - E[R-(S1+u) 1{S1 >= -u}]
  double residual_plus = 0.0;   // R+ twin
  double combined_stderr = 0.0; // 0 in exact mode
};

HarmonicityReport check_harmonicity(const LatticeOracle& oracle, double u);
HarmonicityReport check_harmonicity_mc(const McRenewalTable& table,
                                       const StepDistribution& dist, double u,
                                       long long n_samples, RngStream& rng);

struct IdentityReport {
  double lhs = 0.0;
  double rhs = 0.0;
  double residual = 0.0;
  double combined_bound = 0.0;
};

// Lemma-style identity between R~ and the ladder assembly; rejects a = 0,
// where the identity is known to fail.
IdentityReport check_renewal_identity(const LatticeOracle& oracle, double x, long a);

double check_tilde_increment_bound(const LatticeOracle& oracle, double x, long a,
                                   long b);

struct KozlovTable {
  std::vector<double> u_grid;
  std::vector<long long> n_grid;
  std::vector<std::vector<double>> scaled;  // sqrt(n) * P(min_{j<=n} >= -u)
  std::vector<std::vector<double>> scaled_stderr;
  double theta_minus_fit = 0.0;             // LS fit of scaled vs R-(u)
  double max_relative_residual = 0.0;
};

KozlovTable kozlov_check(const StepDistribution& dist,
                         const std::vector<double>& u_grid,
                         const std::vector<long long>& n_grid, long long n_samples,
                         const std::function<double(double)>& r_minus_fn,
                         RngStream& rng);

struct BallotReport {
  std::vector<long long> n_grid;
  std::vector<double> ratios;  // n^{3/2} P / ((u+1)(a+1)(b+u+1))
  std::vector<double> ratio_stderr;
  double max_ratio = 0.0;
};

BallotReport ballot_bound_check(const StepDistribution& dist, double a, double b,
                                double u, const std::vector<long long>& n_grid,
                                long long n_samples, RngStream& rng);

struct GreenSumResult {
  Estimate estimate;
  double tail_increment = 0.0;  // value change from L/2 to L
  double truncation_tail = 0.0; // fitted tail at L
};

GreenSumResult green_sum(const StepDistribution& dist, double a_exp, double z,
                         long long n_samples, long long path_length,
                         RngStream& rng);

}  // namespace brw::walk
