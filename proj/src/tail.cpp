#include "brw/tail.hpp"

#include <algorithm>
#include <cmath>

#include "brw/parallel.hpp"

namespace brw::tail {

namespace {

double tree_min(const sim::TreeState& tree) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& p : tree.particles) best = std::min(best, p.position);
  return best;
}

PlateauFit fit_top_half(TailCurve& curve) {
  std::size_t n = curve.x_grid.size();
  std::size_t lo = n / 2;
  std::vector<double> xs(curve.x_grid.begin() + lo, curve.x_grid.end());
  std::vector<double> ys(curve.transformed.begin() + lo, curve.transformed.end());
  std::vector<double> es(curve.transformed_stderr.begin() + lo,
                         curve.transformed_stderr.end());
  return plateau_fit(xs, ys, es);
}

}  // namespace

// ---------------------------------------------------------------------------
// Direct minimum tail
// ---------------------------------------------------------------------------

DirectMinTail direct_min_tail(const models::PointProcessSpec& spec, double x,
                              int horizon, double slack, std::uint64_t n_replicas,
                              std::uint64_t seed, int workers) {
  struct Partial {
    Accumulator hit_le, hit_interval, bound;
    void merge(const Partial& o) {
      hit_le.merge(o.hit_le);
      hit_interval.merge(o.hit_interval);
      bound.merge(o.bound);
    }
  };
  sim::BarrierPolicy barrier = sim::BarrierPolicy::adaptive(x, slack);
  auto parts = run_chunked<Partial>(
      n_replicas, workers, seed, 0,
      [&](std::uint64_t, RngStream& rng, Partial& part) {
        sim::TreeState tree = sim::simulate_tree(spec, horizon, barrier, rng);
        double m = tree_min(tree);
        part.hit_le.add(m <= -x ? 1.0 : 0.0);
        part.hit_interval.add(m >= -x - 1.0 && m < -x ? 1.0 : 0.0);
        double frontier = 0.0;
        auto [fb, fe] = tree.gen_range(tree.generations() - 1);
        for (std::int64_t i = fb; i < fe; ++i)
          frontier += std::exp(-(x + tree.particles[static_cast<std::size_t>(i)].position));
        part.bound.add(tree.killed_mass_bound + frontier);
      });
  Partial total;
  for (auto& p : parts) total.merge(p);
  DirectMinTail out;
  out.p_le = total.hit_le.estimate("direct-sim", seed);
  out.p_interval = total.hit_interval.estimate("direct-sim", seed);
  out.unresolved_bound = total.bound.mean();
  return out;
}

// ---------------------------------------------------------------------------
// c_M curve
// ---------------------------------------------------------------------------

TailCurve estimate_cm(const models::PointProcessSpec& spec,
                      const std::vector<double>& x_grid,
                      std::uint64_t samples_per_x,
                      const spine::MinTailOptions& opt, std::uint64_t seed) {
  TailCurve curve;
  curve.x_grid = x_grid;
  for (std::size_t i = 0; i < x_grid.size(); ++i) {
    double x = x_grid[i];
    spine::MinTailResult res = spine::estimate_min_tail(
        spec, x, samples_per_x, opt, seed + 7919 * (i + 1));
    curve.raw_p.push_back(res.estimate.value);
    curve.raw_stderr.push_back(res.estimate.stderror);
    curve.transformed.push_back(res.exm_phat);
    curve.transformed_stderr.push_back(std::exp(x) * res.estimate.stderror);
    curve.extra.push_back(res.truncation_bound);
  }
  curve.fit = fit_top_half(curve);
  curve.non_plateau_flag =
      curve.fit.level > 0 && curve.fit.drift > 0.10 * curve.fit.level;
  return curve;
}

// ---------------------------------------------------------------------------
// Conditional law at the minimum
// ---------------------------------------------------------------------------

ConditionalSample conditional_min_law(const models::PointProcessSpec& spec,
                                      double x, std::uint64_t n_samples,
                                      const spine::MinTailOptions& opt,
                                      std::uint64_t seed) {
  spine::MinTailOptions o = opt;
  o.collect_records = true;
  spine::MinTailResult res = spine::estimate_min_tail(spec, x, n_samples, o, seed);

  ConditionalSample out;
  out.x = x;
  out.accepted = res.accepted;
  out.ess = res.ess;
  out.records = std::move(res.records);
  out.ess_warning = out.ess < static_cast<double>(out.accepted) / 10.0;

  std::vector<WeightedSample> overshoot;
  overshoot.reserve(out.records.size());
  WeightedAccumulator mean_acc;
  WeightedAccumulator cx, cy, cxy, cxx, cyy;
  for (const auto& r : out.records) {
    double os = -(r.v_wk + x);
    overshoot.push_back({os, r.weight});
    mean_acc.add(r.v_wk + x, r.weight);
    double ln_frak = std::log1p(std::max(0.0, r.frak_d));
    cx.add(os, r.weight);
    cy.add(ln_frak, r.weight);
    cxy.add(os * ln_frak, r.weight);
    cxx.add(os * os, r.weight);
    cyy.add(ln_frak * ln_frak, r.weight);
  }
  out.overshoot_ks = ks_test_weighted(std::move(overshoot), exp1_cdf);
  out.overshoot_mean = mean_acc.mean();
  out.overshoot_mean_stderr = mean_acc.std_error();
  double mx = cx.mean(), my = cy.mean();
  double cov = cxy.mean() - mx * my;
  double vx = cxx.mean() - mx * mx;
  double vy = cyy.mean() - my * my;
  out.independence_corr =
      (vx > 0 && vy > 0) ? cov / std::sqrt(vx * vy) : 0.0;
  return out;
}

// ---------------------------------------------------------------------------
// Derivative-martingale tail
// ---------------------------------------------------------------------------

DerivativeTailResult estimate_cdinf(const models::PointProcessSpec& spec,
                                    int horizon, const std::vector<double>& x_grid,
                                    std::uint64_t n_replicas, double barrier_level,
                                    std::uint64_t seed, int workers) {
  const int half = horizon / 2;
  std::vector<double> integral_grid;
  for (double e = 3.0; e <= 6.01; e += 0.75) integral_grid.push_back(std::exp(e));

  struct Partial {
    std::vector<Accumulator> hits, hits_half, integral;
    Accumulator survival;
    void merge(const Partial& o) {
      if (hits.size() < o.hits.size()) hits.resize(o.hits.size());
      if (hits_half.size() < o.hits_half.size()) hits_half.resize(o.hits_half.size());
      if (integral.size() < o.integral.size()) integral.resize(o.integral.size());
      for (std::size_t i = 0; i < o.hits.size(); ++i) hits[i].merge(o.hits[i]);
      for (std::size_t i = 0; i < o.hits_half.size(); ++i)
        hits_half[i].merge(o.hits_half[i]);
      for (std::size_t i = 0; i < o.integral.size(); ++i)
        integral[i].merge(o.integral[i]);
      survival.merge(o.survival);
    }
  };

  sim::BarrierPolicy barrier = sim::BarrierPolicy::fixed(barrier_level, 0.0);
  barrier.compensate = true;

  auto parts = run_chunked<Partial>(
      n_replicas, workers, seed, 0,
      [&](std::uint64_t, RngStream& rng, Partial& part) {
        if (part.hits.empty()) {
          part.hits.resize(x_grid.size());
          part.hits_half.resize(x_grid.size());
          part.integral.resize(integral_grid.size());
        }
        sim::TreeState tree = sim::simulate_tree(spec, horizon, barrier, rng);
        double d_full =
            sim::derivative_martingale(tree, horizon) + tree.compensation_d(horizon);
        double d_half =
            sim::derivative_martingale(tree, half) + tree.compensation_d(half);
        for (std::size_t i = 0; i < x_grid.size(); ++i) {
          part.hits[i].add(d_full >= x_grid[i] ? 1.0 : 0.0);
          part.hits_half[i].add(d_half >= x_grid[i] ? 1.0 : 0.0);
        }
        for (std::size_t i = 0; i < integral_grid.size(); ++i)
          part.integral[i].add(std::min(std::max(d_full, 0.0), integral_grid[i]));
        part.survival.add(tree.frontier_size() > 0 ? 1.0 : 0.0);
      });
  Partial total;
  for (auto& p : parts) total.merge(p);

  DerivativeTailResult out;
  out.curve.x_grid = x_grid;
  bool sensitivity = false;
  for (std::size_t i = 0; i < x_grid.size(); ++i) {
    double p = total.hits[i].mean();
    double se = total.hits[i].std_error();
    out.curve.raw_p.push_back(p);
    out.curve.raw_stderr.push_back(se);
    out.curve.transformed.push_back(x_grid[i] * p);
    out.curve.transformed_stderr.push_back(x_grid[i] * se);
    double drift_h = std::abs(p - total.hits_half[i].mean());
    double gate = se + total.hits_half[i].std_error();
    if (i >= x_grid.size() / 2 && drift_h > 3.0 * gate + 1e-12) sensitivity = true;
  }
  out.curve.fit = fit_top_half(out.curve);
  out.curve.non_plateau_flag =
      out.curve.fit.level > 0 && out.curve.fit.drift > 0.15 * out.curve.fit.level;
  out.horizon_sensitivity_flag = sensitivity;
  out.integral_grid = integral_grid;
  for (std::size_t i = 0; i < integral_grid.size(); ++i) {
    double lx = std::log(integral_grid[i]);
    out.integral_over_logx.push_back(total.integral[i].mean() / lx);
    out.integral_stderr.push_back(total.integral[i].std_error() / lx);
  }
  out.survival_fraction = total.survival.mean();
  return out;
}

FactorizationReport factorization_check(const TailCurve& cm_curve,
                                        const DerivativeTailResult& cdinf,
                                        const Estimate& frak_mean) {
  FactorizationReport rep;
  rep.c_m.value = cm_curve.fit.level;
  rep.c_m.stderror = cm_curve.fit.level_stderr;
  rep.c_m.method = "plateau-exm";
  rep.c_m.finalize_ci();
  rep.c_dinf.value = cdinf.curve.fit.level;
  rep.c_dinf.stderror = cdinf.curve.fit.level_stderr;
  rep.c_dinf.method = "plateau-xd";
  rep.c_dinf.finalize_ci();
  rep.e_frak = frak_mean;

  double rhs = rep.c_m.value * rep.e_frak.value;
  rep.residual = std::abs(rep.c_dinf.value - rhs);
  double hw_lhs = kZ95 * rep.c_dinf.stderror;
  double hw_rhs = kZ95 * std::sqrt(std::pow(rep.c_m.stderror * rep.e_frak.value, 2) +
                                   std::pow(rep.e_frak.stderror * rep.c_m.value, 2));
  rep.combined_halfwidth = std::sqrt(hw_lhs * hw_lhs + hw_rhs * hw_rhs);
  rep.pass = rep.residual <= 3.0 * rep.combined_halfwidth;
  rep.upstream_flags = cm_curve.non_plateau_flag || cdinf.curve.non_plateau_flag ||
                       cdinf.horizon_sensitivity_flag;
  return rep;
}

// ---------------------------------------------------------------------------
// Smoothing transform fixed point
// ---------------------------------------------------------------------------

SmoothingReport smoothing_fixed_point_test(const models::PointProcessSpec& spec,
                                           int horizon, std::uint64_t n_per_side,
                                           double barrier_level, std::uint64_t seed,
                                           int workers) {
  sim::BarrierPolicy barrier = sim::BarrierPolicy::fixed(barrier_level, 0.0);
  barrier.compensate = true;

  struct SamplesPartial {
    std::vector<double> values;
    Accumulator mean;
    void merge(SamplesPartial& o) {
      values.insert(values.end(), o.values.begin(), o.values.end());
      mean.merge(o.mean);
    }
  };

  auto side_a = run_chunked<SamplesPartial>(
      n_per_side, workers, seed, 0,
      [&](std::uint64_t, RngStream& rng, SamplesPartial& part) {
        sim::TreeState tree = sim::simulate_tree(spec, horizon, barrier, rng);
        double d = sim::derivative_martingale(tree, horizon) +
                   tree.compensation_d(horizon);
        part.values.push_back(d);
        part.mean.add(d);
      });
  auto side_b = run_chunked<SamplesPartial>(
      n_per_side, workers, seed, (1ULL << 42),
      [&](std::uint64_t, RngStream& rng, SamplesPartial& part) {
        models::OffspringDraw draw = models::sample_offspring(spec, rng);
        double b = 0.0;
        for (int c = 0; c < draw.count; ++c) {
          sim::TreeState sub = sim::simulate_tree(spec, horizon, barrier, rng);
          double d = sim::derivative_martingale(sub, horizon) +
                     sub.compensation_d(horizon);
          b += std::exp(-draw.displacements[c]) * d;
        }
        part.values.push_back(b);
        part.mean.add(b);
      });

  SamplesPartial a, b;
  for (auto& p : side_a) a.merge(p);
  for (auto& p : side_b) b.merge(p);

  SmoothingReport rep;
  rep.mean_a = a.mean.estimate("fresh-trees", seed);
  rep.mean_b = b.mean.estimate("one-step-assembly", seed);
  std::vector<double> zeros(a.values.size(), 0.0);
  rep.ks = ks_test_two_sample(a.values, b.values);
  rep.degenerate_ks = ks_test_two_sample(a.values, zeros);
  return rep;
}

// ---------------------------------------------------------------------------
// Integrability and truncation profiles
// ---------------------------------------------------------------------------

IntegrabilityProfile integrability_profile(const models::PointProcessSpec& spec,
                                           const std::vector<double>& x_grid,
                                           std::uint64_t n_samples,
                                           const spine::MinTailOptions& opt,
                                           std::uint64_t seed) {
  double x_base = *std::min_element(x_grid.begin(), x_grid.end());
  ConditionalSample base = conditional_min_law(spec, x_base, n_samples, opt, seed);

  IntegrabilityProfile prof;
  prof.x_grid = x_grid;
  for (double x : x_grid) {
    WeightedAccumulator m2, m0;
    std::vector<std::pair<double, double>> contributions;  // (moment term, weight)
    for (const auto& r : base.records) {
      if (r.v_wk > -x) continue;
      double frak = std::max(0.0, r.frak_d);
      double term = frak * std::pow(std::log1p(frak), 2);
      m2.add(term, r.weight);
      m0.add(frak, r.weight);
      contributions.push_back({term * r.weight, r.weight});
    }
    prof.log2_moment.push_back(m2.estimate("weighted-conditional", seed));
    prof.plain_mean.push_back(m0.estimate("weighted-conditional", seed));
    prof.ess.push_back(m2.effective_n());
    // heavy-tail warning: top 1% of samples carry more than half of the moment
    std::sort(contributions.begin(), contributions.end(),
              [](auto& l, auto& r2) { return l.first > r2.first; });
    double total = 0.0, top = 0.0;
    for (auto& c : contributions) total += c.first;
    std::size_t top_n = std::max<std::size_t>(1, contributions.size() / 100);
    for (std::size_t i = 0; i < top_n && i < contributions.size(); ++i)
      top += contributions[i].first;
    prof.heavy_tail_warning.push_back(total > 0 && top > 0.5 * total);
  }
  return prof;
}

TruncationTable truncation_profile(const models::PointProcessSpec& spec,
                                   const std::vector<int>& t_grid,
                                   const std::vector<double>& x_grid,
                                   double epsilon, std::uint64_t n_samples,
                                   const spine::MinTailOptions& opt,
                                   std::uint64_t seed) {
  spine::MinTailOptions o = opt;
  o.t_grid = t_grid;
  o.collect_records = true;
  double x_base = *std::min_element(x_grid.begin(), x_grid.end());
  spine::MinTailResult res = spine::estimate_min_tail(spec, x_base, n_samples, o, seed);

  TruncationTable table;
  table.t_grid = t_grid;
  table.x_grid = x_grid;
  table.p.assign(t_grid.size(), std::vector<double>(x_grid.size(), 0.0));
  table.sup_over_x.assign(t_grid.size(), 0.0);
  for (std::size_t ti = 0; ti < t_grid.size(); ++ti) {
    for (std::size_t xi = 0; xi < x_grid.size(); ++xi) {
      double num = 0.0, den = 0.0;
      for (const auto& r : res.records) {
        if (r.v_wk > -x_grid[xi]) continue;
        double gap = r.frak_d - r.frak_d_at_t[ti];
        num += r.weight * (gap >= epsilon ? 1.0 : 0.0);
        den += r.weight;
      }
      table.p[ti][xi] = den > 0 ? num / den : 0.0;
      table.sup_over_x[ti] = std::max(table.sup_over_x[ti], table.p[ti][xi]);
    }
  }
  return table;
}

Estimate direct_frak_mean(const models::PointProcessSpec& spec, int horizon,
                          double barrier_level, std::uint64_t n_replicas,
                          std::uint64_t seed, int workers) {
  struct Partial {
    WeightedAccumulator frak;
    void merge(const Partial& o) { frak.merge(o.frak); }
  };
  sim::BarrierPolicy barrier = sim::BarrierPolicy::fixed(barrier_level, 0.0);
  auto parts = run_chunked<Partial>(
      n_replicas, workers, seed, 0,
      [&](std::uint64_t, RngStream& rng, Partial& part) {
        sim::TreeState tree = sim::simulate_tree(spec, horizon, barrier, rng);
        double m = tree_min(tree);
        if (m >= 0.0) return;  // condition on M < 0
        sim::MinRecord rec = sim::global_min(tree, rng);
        sim::DecompositionTerms terms = sim::min_decomposition(tree, rec, horizon);
        part.frak.add(terms.frak_d, 1.0);
      });
  Partial total;
  for (auto& p : parts) total.merge(p);
  return total.frak.estimate("direct-conditioned", seed);
}

// ---------------------------------------------------------------------------
// Centering sanity check
// ---------------------------------------------------------------------------

CenteringReport centering_check(const models::PointProcessSpec& spec,
                                const std::vector<int>& n_grid,
                                std::uint64_t n_replicas, std::uint64_t seed,
                                int workers) {
  int n_max = *std::max_element(n_grid.begin(), n_grid.end());
  double barrier_level = std::log(static_cast<double>(n_max)) + 6.0;
  sim::BarrierPolicy barrier = sim::BarrierPolicy::fixed(barrier_level, 0.0);

  struct Partial {
    std::vector<std::vector<double>> mins;  // per grid point
    void merge(Partial& o) {
      if (mins.size() < o.mins.size()) mins.resize(o.mins.size());
      for (std::size_t i = 0; i < o.mins.size(); ++i)
        mins[i].insert(mins[i].end(), o.mins[i].begin(), o.mins[i].end());
    }
  };
  auto parts = run_chunked<Partial>(
      n_replicas, workers, seed, 0,
      [&](std::uint64_t, RngStream& rng, Partial& part) {
        if (part.mins.empty()) part.mins.resize(n_grid.size());
        sim::TreeState tree = sim::simulate_tree(spec, n_max, barrier, rng);
        for (std::size_t gi = 0; gi < n_grid.size(); ++gi) {
          auto [b, e] = tree.gen_range(n_grid[gi]);
          if (b == e) continue;  // extinct
          double mn = std::numeric_limits<double>::infinity();
          for (std::int64_t i = b; i < e; ++i)
            mn = std::min(mn, tree.particles[static_cast<std::size_t>(i)].position);
          part.mins[gi].push_back(mn);
        }
      });
  Partial total;
  for (auto& p : parts) total.merge(p);

  CenteringReport rep;
  rep.n_grid = n_grid;
  for (std::size_t gi = 0; gi < n_grid.size(); ++gi) {
    auto& v = total.mins[gi];
    std::sort(v.begin(), v.end());
    double med = v.empty() ? 0.0 : v[v.size() / 2];
    double ln_n = std::log(static_cast<double>(n_grid[gi]));
    rep.median_centered.push_back(med - 1.5 * ln_n);
    rep.median_wrong.push_back(med - 1.0 * ln_n);
  }
  return rep;
}

}  // namespace brw::tail
