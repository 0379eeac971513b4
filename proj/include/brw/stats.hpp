#pragma once

// Scalar statistics shared by every estimator: running moments, merge rules,
// normal/exponential distribution helpers, KS tests and plateau fits.
//
// Merging accumulators is associative component-wise addition; callers fold
// per-replica partials in replica order so reported values never depend on
// worker scheduling.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace brw {

inline constexpr double kZ95 = 1.959963984540054;

struct Estimate {
  double value = 0.0;
  double stderror = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double n_effective = 0.0;
  std::string method;
  std::uint64_t seed = 0;

  void finalize_ci() {
    ci_low = value - kZ95 * stderror;
    ci_high = value + kZ95 * stderror;
  }
};

// Unweighted running moments. Compensated accumulation keeps the exact
// decomposition identities at ~1e-16 relative even with 1e7 summands.
struct Accumulator {
  double count = 0.0;
  long double sum = 0.0L;
  long double sumsq = 0.0L;

  void add(double x) {
    count += 1.0;
    sum += x;
    sumsq += static_cast<long double>(x) * x;
  }

  void merge(const Accumulator& o) {
    count += o.count;
    sum += o.sum;
    sumsq += o.sumsq;
  }

  double mean() const { return count > 0 ? static_cast<double>(sum / count) : 0.0; }

  double variance() const {
    if (count < 2) return 0.0;
    long double m = sum / count;
    long double v = (sumsq - count * m * m) / (count - 1);
    return v > 0 ? static_cast<double>(v) : 0.0;
  }

  double std_error() const {
    return count > 0 ? std::sqrt(variance() / count) : 0.0;
  }

  Estimate estimate(std::string method = {}, std::uint64_t seed = 0) const {
    Estimate e;
    e.value = mean();
    e.stderror = std_error();
    e.n_effective = count;
    e.method = std::move(method);
    e.seed = seed;
    e.finalize_ci();
    return e;
  }
};

// Weighted moments with effective-sample-size bookkeeping.
struct WeightedAccumulator {
  double count = 0.0;
  long double sumw = 0.0L;
  long double sumw2 = 0.0L;
  long double sumwx = 0.0L;
  long double sumwx2 = 0.0L;

  void add(double x, double w) {
    count += 1.0;
    sumw += w;
    sumw2 += static_cast<long double>(w) * w;
    sumwx += static_cast<long double>(w) * x;
    sumwx2 += static_cast<long double>(w) * x * x;
  }

  void merge(const WeightedAccumulator& o) {
    count += o.count;
    sumw += o.sumw;
    sumw2 += o.sumw2;
    sumwx += o.sumwx;
    sumwx2 += o.sumwx2;
  }

  double mean() const {
    return sumw > 0 ? static_cast<double>(sumwx / sumw) : 0.0;
  }

  double effective_n() const {
    return sumw2 > 0 ? static_cast<double>(sumw * sumw / sumw2) : 0.0;
  }

  // Normalized-weights variance of the weighted mean.
  double std_error() const {
    double ne = effective_n();
    if (ne < 2 || sumw <= 0) return 0.0;
    long double m = sumwx / sumw;
    long double var = (sumwx2 / sumw) - m * m;
    if (var < 0) var = 0;
    return std::sqrt(static_cast<double>(var) / ne);
  }

  Estimate estimate(std::string method = {}, std::uint64_t seed = 0) const {
    Estimate e;
    e.value = mean();
    e.stderror = std_error();
    e.n_effective = effective_n();
    e.method = std::move(method);
    e.seed = seed;
    e.finalize_ci();
    return e;
  }
};

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

inline double exp1_cdf(double x) { return x <= 0 ? 0.0 : 1.0 - std::exp(-x); }

// --------------------------------------------------------------------------
// Kolmogorov-Smirnov machinery. The weighted variants plug the effective
// sample size into the asymptotic critical values.
// --------------------------------------------------------------------------

inline double kolmogorov_tail(double lambda) {
  if (lambda < 1e-8) return 1.0;
  double sum = 0.0;
  for (int k = 1; k <= 200; ++k) {
    double term = 2.0 * std::pow(-1.0, k - 1) * std::exp(-2.0 * k * k * lambda * lambda);
    sum += term;
    if (std::abs(term) < 1e-14) break;
  }
  return std::clamp(sum, 0.0, 1.0);
}

// Stephens' finite-sample correction.
inline double ks_p_value(double statistic, double n_effective) {
  double sn = std::sqrt(n_effective);
  double lambda = (sn + 0.12 + 0.11 / sn) * statistic;
  return kolmogorov_tail(lambda);
}

struct KsReport {
  double statistic = 0.0;
  double p_value = 0.0;
  double n_effective = 0.0;
};

struct WeightedSample {
  double x;
  double w;
};

// One-sample KS of weighted data against a reference CDF.
template <typename Cdf>
KsReport ks_test_weighted(std::vector<WeightedSample> samples, Cdf&& cdf) {
  double sumw = 0.0, sumw2 = 0.0;
  for (const auto& s : samples) {
    sumw += s.w;
    sumw2 += s.w * s.w;
  }
  double ne = sumw2 > 0 ? sumw * sumw / sumw2 : 0.0;
  if (ne < 50.0) throw std::invalid_argument("ks_test: fewer than 50 effective samples");
  std::sort(samples.begin(), samples.end(),
            [](const WeightedSample& a, const WeightedSample& b) { return a.x < b.x; });
  double acc = 0.0, d = 0.0;
  for (const auto& s : samples) {
    double f = cdf(s.x);
    d = std::max(d, std::abs(acc / sumw - f));
    acc += s.w;
    d = std::max(d, std::abs(acc / sumw - f));
  }
  KsReport r;
  r.statistic = d;
  r.n_effective = ne;
  r.p_value = ks_p_value(d, ne);
  return r;
}

template <typename Cdf>
KsReport ks_test(const std::vector<double>& samples, Cdf&& cdf) {
  std::vector<WeightedSample> ws;
  ws.reserve(samples.size());
  for (double x : samples) ws.push_back({x, 1.0});
  return ks_test_weighted(std::move(ws), std::forward<Cdf>(cdf));
}

KsReport ks_test_two_sample(std::vector<double> a, std::vector<double> b);

// --------------------------------------------------------------------------
// Plateau fit: weighted least squares of a transformed tail curve against a
// constant over the top half of the grid; drift is the fitted slope times the
// window width, reported relative to the level by callers.
// --------------------------------------------------------------------------

struct PlateauFit {
  double level = 0.0;
  double level_stderr = 0.0;
  double drift = 0.0;  // |slope| * window width
  double window_lo = 0.0;
  double window_hi = 0.0;
  bool flagged = false;
};

PlateauFit plateau_fit(std::span<const double> x, std::span<const double> y,
                       std::span<const double> yerr);

// Deterministic fold of per-replica partials in index order.
template <typename T>
T fold_in_order(const std::vector<T>& partials) {
  T total{};
  for (const T& p : partials) total.merge(p);
  return total;
}

}  // namespace brw
