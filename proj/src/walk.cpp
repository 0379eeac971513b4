#include "brw/walk.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>

namespace brw::walk {

namespace {

double step_prob(const StepDistribution& d, int s) {
  for (std::size_t i = 0; i < d.offsets.size(); ++i)
    if (d.offsets[i] == s) return d.probs[i];
  return 0.0;
}

StepDistribution mirrored(const StepDistribution& d) {
  std::vector<int> offs;
  std::vector<double> probs;
  for (std::size_t i = d.offsets.size(); i-- > 0;) {
    offs.push_back(-d.offsets[i]);
    probs.push_back(d.probs[i]);
  }
  return StepDistribution::lattice(std::move(offs), std::move(probs),
                                   d.name + "-mirror");
}

// Banded (I - P) system for substochastic P; an M-matrix, so plain LU without
// pivoting is stable.
class Banded {
 public:
  Banded(int n, int kl, int ku)
      : n_(n), kl_(kl), ku_(ku), w_(kl + ku + 1),
        a_(static_cast<std::size_t>(n) * w_, 0.0) {}

  double& at(int i, int j) { return a_[static_cast<std::size_t>(i) * w_ + (j - i + kl_)]; }
  double get(int i, int j) const { return a_[static_cast<std::size_t>(i) * w_ + (j - i + kl_)]; }

  void factorize() {
    for (int k = 0; k < n_; ++k) {
      double piv = at(k, k);
      int imax = std::min(n_ - 1, k + kl_);
      int jmax = std::min(n_ - 1, k + ku_);
      for (int i = k + 1; i <= imax; ++i) {
        double f = at(i, k) / piv;
        at(i, k) = f;
        for (int j = k + 1; j <= jmax; ++j) at(i, j) -= f * get(k, j);
      }
    }
  }

  void solve(std::vector<double>& b) const {
    for (int k = 0; k < n_; ++k) {
      int imax = std::min(n_ - 1, k + kl_);
      for (int i = k + 1; i <= imax; ++i) b[i] -= get(i, k) * b[k];
    }
    for (int k = n_ - 1; k >= 0; --k) {
      int jmax = std::min(n_ - 1, k + ku_);
      double acc = b[k];
      for (int j = k + 1; j <= jmax; ++j) acc -= get(k, j) * b[j];
      b[k] = acc / get(k, k);
    }
  }

 private:
  int n_, kl_, ku_, w_;
  std::vector<double> a_;
};

// Law of the strict descending ladder height: the walk lives on [0, cap]
// until its first entry into (-inf, 0); jumps above cap are clamped to cap,
// where the landing law has long converged (renewal phase mixing is
// exponential for bounded increments).
std::vector<double> landing_law(const StepDistribution& d, int cap) {
  const int W = -d.min_offset();
  const int Wp = d.max_offset();
  const int n = cap + 1;
  Banded m(n, W, Wp);
  for (int u = 0; u <= cap; ++u) m.at(u, u) = 1.0;
  for (int u = 0; u <= cap; ++u) {
    for (std::size_t si = 0; si < d.offsets.size(); ++si) {
      int v = u + d.offsets[si];
      if (v < 0) continue;
      m.at(u, std::min(v, cap)) -= d.probs[si];
    }
  }
  m.factorize();
  std::vector<double> law(W, 0.0);
  for (int v = 1; v <= W; ++v) {
    std::vector<double> b(n, 0.0);
    for (int u = 0; u <= cap; ++u) {
      double p = step_prob(d, -v - u);
      if (p > 0.0) b[u] = p;
    }
    m.solve(b);
    law[v - 1] = b[0];
  }
  return law;
}

// P(the first weak descending ladder point sits exactly at the origin), i.e.
// the walk returns to 0 without ever exceeding it.
double return_to_origin_prob(const StepDistribution& d, int cap) {
  StepDistribution md = mirrored(d);  // mirrored walk must stay >= 1
  const int W = -md.min_offset();
  const int Wp = md.max_offset();
  const int n = cap;  // states 1..cap
  Banded m(n, W, Wp);
  for (int u = 1; u <= cap; ++u) m.at(u - 1, u - 1) = 1.0;
  for (int u = 1; u <= cap; ++u) {
    for (std::size_t si = 0; si < md.offsets.size(); ++si) {
      int v = u + md.offsets[si];
      if (v < 1) continue;
      m.at(u - 1, std::min(v, cap) - 1) -= md.probs[si];
    }
  }
  m.factorize();
  std::vector<double> b(n, 0.0);
  for (int u = 1; u <= cap; ++u) {
    double p = step_prob(md, -u);  // jump landing exactly at 0
    if (p > 0.0) b[u - 1] = p;
  }
  m.solve(b);
  double q0 = step_prob(md, 0);
  for (std::size_t si = 0; si < md.offsets.size(); ++si) {
    int s = md.offsets[si];
    if (s >= 1) q0 += md.probs[si] * b[std::min(s, cap) - 1];
  }
  return q0;
}

// Expected visits to {-floor(x)..-1} of the walk killed on entering [0, inf),
// by start point. States use w = -position in [1, cap].
std::vector<double> visits_below(const StepDistribution& d, long fx, int cap) {
  const int W = -d.min_offset();
  const int Wp = d.max_offset();
  Banded m(cap, Wp, W);  // w -> w - s
  for (int w = 1; w <= cap; ++w) m.at(w - 1, w - 1) = 1.0;
  for (int w = 1; w <= cap; ++w) {
    for (std::size_t si = 0; si < d.offsets.size(); ++si) {
      int w2 = w - d.offsets[si];
      if (w2 < 1) continue;  // entered [0, inf): killed
      m.at(w - 1, std::min(w2, cap) - 1) -= d.probs[si];
    }
  }
  m.factorize();
  std::vector<double> b(cap, 0.0);
  for (int w = 1; w <= cap && w <= fx; ++w) b[w - 1] = 1.0;
  m.solve(b);
  return b;
}

}  // namespace

// ---------------------------------------------------------------------------
// LatticeOracle
// ---------------------------------------------------------------------------

void LatticeOracle::build(int cap, std::vector<double>& f_minus,
                          std::vector<double>& f_plus, double& q0) const {
  f_minus = landing_law(dist_, cap);
  f_plus = landing_law(mirrored(dist_), cap);
  q0 = return_to_origin_prob(dist_, cap);
}

LatticeOracle::LatticeOracle(const StepDistribution& dist, int cap)
    : dist_(dist), cap_(cap) {
  if (!dist.is_lattice())
    throw std::invalid_argument("LatticeOracle: continuous step law rejected");
  double q0 = 0.0, q0_half = 0.0;
  build(cap_, f_minus_, f_plus_, q0);
  std::vector<double> fm2, fp2;
  build(cap_ / 2, fm2, fp2, q0_half);
  cap_diff_ = std::abs(q0 - q0_half);
  for (std::size_t i = 0; i < f_minus_.size(); ++i)
    cap_diff_ = std::max(cap_diff_, std::abs(f_minus_[i] - fm2[i]));
  for (std::size_t i = 0; i < f_plus_.size(); ++i)
    cap_diff_ = std::max(cap_diff_, std::abs(f_plus_[i] - fp2[i]));
  cap_diff_ += 1e-13;

  theta0_ = 1.0 / (1.0 - q0);

  const int m_max = 20000;
  rho_minus_.assign(m_max + 1, 0.0);
  rho_minus_[0] = 1.0;
  for (int m = 1; m <= m_max; ++m) {
    double acc = 0.0;
    for (std::size_t v = 1; v <= f_minus_.size() && static_cast<int>(v) <= m; ++v)
      acc += f_minus_[v - 1] * rho_minus_[m - v];
    rho_minus_[m] = acc;
  }
  k_seq_.assign(m_max + 1, 0.0);
  k_seq_[0] = 1.0;
  for (int m = 1; m <= m_max; ++m) {
    double acc = 0.0;
    for (std::size_t v = 1; v <= f_plus_.size() && static_cast<int>(v) <= m; ++v)
      acc += f_plus_[v - 1] * k_seq_[m - v];
    k_seq_[m] = acc;
  }

  double mean_minus = 0.0, mean_plus = 0.0;
  for (std::size_t v = 1; v <= f_minus_.size(); ++v) mean_minus += v * f_minus_[v - 1];
  for (std::size_t v = 1; v <= f_plus_.size(); ++v) mean_plus += v * f_plus_[v - 1];
  c_minus_ = 1.0 / mean_minus;
  c_plus_ = 1.0 / mean_plus;
}

double LatticeOracle::r_minus(double u) const {
  if (u < -1e-9) return 0.0;
  long fu = static_cast<long>(std::floor(u + 1e-9));
  fu = std::min<long>(fu, static_cast<long>(rho_minus_.size()) - 1);
  double acc = 0.0;
  for (long m = 0; m <= fu; ++m) acc += rho_minus_[m];
  return acc;
}

double LatticeOracle::r_plus(double u) const {
  if (u < -1e-9) return 0.0;
  long fu = static_cast<long>(std::floor(u + 1e-9));
  fu = std::min<long>(fu, static_cast<long>(k_seq_.size()) - 1);
  double acc = 0.0;
  for (long m = 0; m <= fu; ++m) acc += k_seq_[m];
  return acc;
}

double LatticeOracle::k_atom(double a) const {
  if (a < -1e-9) return 0.0;
  double r = std::round(a);
  if (std::abs(a - r) > 1e-9) return 0.0;
  long m = static_cast<long>(r);
  if (m >= static_cast<long>(k_seq_.size())) return 1.0 / c_plus_;
  return k_seq_[m];
}

ValueWithError LatticeOracle::r_tilde(double x, long a) const {
  if (x < 0 || a < 0) throw std::invalid_argument("r_tilde: x, a must be >= 0");
  long fx = static_cast<long>(std::floor(x + 1e-9));
  auto eval = [&](int cap) {
    int states = static_cast<int>(std::max<long>(fx, a)) + cap;
    std::vector<double> v = visits_below(dist_, fx, states);
    if (a >= 1) return v[a - 1];
    double val = 1.0;  // time-0 term: start at the origin, 0 >= -x
    for (std::size_t si = 0; si < dist_.offsets.size(); ++si) {
      int s = dist_.offsets[si];
      if (s <= -1) val += dist_.probs[si] * v[-s - 1];
    }
    return val;
  };
  double v1 = eval(cap_);
  double v2 = eval(cap_ / 2 + 37);
  ValueWithError out;
  out.value = v1;
  out.error_bound = std::abs(v1 - v2) + 1e-12 * (1.0 + std::abs(v1));
  out.method = Method::ExactLatticeDP;
  return out;
}

double LatticeOracle::renewal_identity_rhs(double x, long a) const {
  if (a <= 0)
    throw std::invalid_argument(
        "renewal identity: a = 0 rejected (the identity fails there)");
  double head = r_minus(x) * (r_plus(static_cast<double>(a)) - k_atom(static_cast<double>(a)));
  long fx = static_cast<long>(std::floor(x + 1e-9));
  double corr = 0.0;
  for (long m = 0; m <= fx; ++m) {
    double v = static_cast<double>(a) - x + static_cast<double>(m);
    if (v < -1e-9) continue;
    corr += rho_minus_[m] * (k_atom(v) - r_plus(v));
  }
  return theta0_ * (head + corr);
}

ValueWithError LatticeOracle::green_sum_exact(double a_exp, long z) const {
  if (a_exp <= 0) throw std::invalid_argument("green_sum: exponent must be positive");
  if (z < 0) throw std::invalid_argument("green_sum: start must be >= 0");
  auto eval = [&](int cap) {
    const int W = -dist_.min_offset();
    const int Wp = dist_.max_offset();
    int top = static_cast<int>(z) + cap;
    int n = top + 1;
    Banded m(n, W, Wp);
    for (int u = 0; u <= top; ++u) m.at(u, u) = 1.0;
    for (int u = 0; u <= top; ++u) {
      for (std::size_t si = 0; si < dist_.offsets.size(); ++si) {
        int v = u + dist_.offsets[si];
        if (v < 0) continue;  // killed below the origin
        m.at(u, std::min(v, top)) -= dist_.probs[si];
      }
    }
    m.factorize();
    std::vector<double> b(n, 0.0);
    for (int u = 0; u <= top; ++u) b[u] = std::exp(-a_exp * u);
    m.solve(b);
    return b[z];
  };
  double v1 = eval(cap_);
  double v2 = eval(cap_ / 2 + 37);
  ValueWithError out;
  out.value = v1;
  out.error_bound = std::abs(v1 - v2) + 1e-12 * (1.0 + std::abs(v1));
  out.method = Method::ExactLatticeDP;
  return out;
}

// ---------------------------------------------------------------------------
// Time-series DP
// ---------------------------------------------------------------------------

namespace {

constexpr long kNoBound = std::numeric_limits<long>::max() / 4;

struct DpLine {
  long lo = 0;
  std::vector<double> mass;
  double pruned = 0.0;

  void step(const StepDistribution& d, long mask_lo, long mask_hi, long prune_lo,
            long prune_hi) {
    long hi = lo + static_cast<long>(mass.size()) - 1;
    long nlo = std::max(lo + d.min_offset(), std::max(mask_lo, prune_lo));
    long nhi = std::min(hi + d.max_offset(), std::min(mask_hi, prune_hi));
    if (nhi < nlo) {
      mass.clear();
      lo = 0;
      return;
    }
    std::vector<double> next(static_cast<std::size_t>(nhi - nlo + 1), 0.0);
    for (std::size_t i = 0; i < mass.size(); ++i) {
      double mi = mass[i];
      if (mi == 0.0) continue;
      long pos = lo + static_cast<long>(i);
      for (std::size_t si = 0; si < d.offsets.size(); ++si) {
        long p2 = pos + d.offsets[si];
        if (p2 < mask_lo || p2 > mask_hi) continue;  // constraint: exact kill
        double contribution = mi * d.probs[si];
        if (p2 < nlo || p2 > nhi)
          pruned += contribution;  // window truncation: tracked
        else
          next[static_cast<std::size_t>(p2 - nlo)] += contribution;
      }
    }
    mass.swap(next);
    lo = nlo;
  }

  double sum_range(long a, long b) const {
    long hi = lo + static_cast<long>(mass.size()) - 1;
    a = std::max(a, lo);
    b = std::min(b, hi);
    double acc = 0.0;
    for (long p = a; p <= b; ++p) acc += mass[static_cast<std::size_t>(p - lo)];
    return acc;
  }

  double at(long p) const {
    long hi = lo + static_cast<long>(mass.size()) - 1;
    if (p < lo || p > hi) return 0.0;
    return mass[static_cast<std::size_t>(p - lo)];
  }
};

double zeta32_tail(long L) {
  // sum_{j > L} j^{-3/2}: explicit head plus integral remainder
  double acc = 0.0;
  long head_end = L + 200000;
  for (long j = L + 1; j <= head_end; ++j) acc += std::pow(static_cast<double>(j), -1.5);
  acc += 2.0 / std::sqrt(static_cast<double>(head_end) + 0.5);
  return acc;
}

// Fit the j^{-3/2} decay of the summands over the last window and extrapolate
// the tail; the spread between the two half-window fits bounds the systematic.
SeriesResult finish_series(const std::vector<double>& terms, double pruned,
                           long L) {
  SeriesResult res;
  res.terms = L;
  long double partial = 0.0L;
  for (double t : terms) partial += t;
  res.partial = static_cast<double>(partial);

  long w_lo = L / 2, w_mid = (3 * L) / 4;
  double num_a = 0.0, den_a = 0.0, num_b = 0.0, den_b = 0.0;
  for (long j = w_lo; j <= L; ++j) {
    double weight = std::pow(static_cast<double>(j), -1.5);
    if (j <= w_mid) {
      num_a += terms[static_cast<std::size_t>(j)];
      den_a += weight;
    } else {
      num_b += terms[static_cast<std::size_t>(j)];
      den_b += weight;
    }
  }
  double kappa_a = den_a > 0 ? num_a / den_a : 0.0;
  double kappa_b = den_b > 0 ? num_b / den_b : 0.0;
  double kappa = den_a + den_b > 0 ? (num_a + num_b) / (den_a + den_b) : 0.0;
  double tail_factor = zeta32_tail(L);
  res.tail_estimate = kappa * tail_factor;
  res.value = res.partial + res.tail_estimate;
  res.error_bound = 2.0 * std::abs(kappa_a - kappa_b) * tail_factor +
                    pruned * static_cast<double>(L) +
                    1e-14 * (1.0 + std::abs(res.value));
  return res;
}

long prune_radius(const StepDistribution& d, long L) {
  return static_cast<long>(10.0 * std::sqrt(d.variance * static_cast<double>(L))) +
         4 * std::max(-d.min_offset(), d.max_offset()) + 50;
}

}  // namespace

SeriesResult dp_rtilde_series(const StepDistribution& dist, double x, long a,
                              long path_length) {
  if (!dist.is_lattice())
    throw std::invalid_argument("dp series: lattice step law required");
  long fx = static_cast<long>(std::floor(x + 1e-9));
  DpLine line;
  line.lo = -a;
  line.mass = {1.0};
  std::vector<double> terms(static_cast<std::size_t>(path_length) + 1, 0.0);
  terms[0] = (static_cast<double>(a) <= x + 1e-9) ? 1.0 : 0.0;
  long prune_lo = -(fx + prune_radius(dist, path_length));
  for (long j = 1; j <= path_length; ++j) {
    line.step(dist, -kNoBound, -1, prune_lo, kNoBound);
    terms[static_cast<std::size_t>(j)] = line.sum_range(-fx, -1);
  }
  return finish_series(terms, line.pruned, path_length);
}

SeriesResult dp_theta0_series(const StepDistribution& dist, long path_length) {
  if (!dist.is_lattice())
    throw std::invalid_argument("dp series: lattice step law required");
  DpLine line;
  line.lo = 0;
  line.mass = {1.0};
  std::vector<double> terms(static_cast<std::size_t>(path_length) + 1, 0.0);
  terms[0] = 1.0;
  long prune_lo = -prune_radius(dist, path_length);
  for (long j = 1; j <= path_length; ++j) {
    line.step(dist, -kNoBound, 0, prune_lo, kNoBound);
    terms[static_cast<std::size_t>(j)] = line.at(0);
  }
  return finish_series(terms, line.pruned, path_length);
}

SeriesResult dp_green_series(const StepDistribution& dist, double a_exp, long z,
                             long path_length) {
  if (!dist.is_lattice())
    throw std::invalid_argument("dp series: lattice step law required");
  DpLine line;
  line.lo = z;
  line.mass = {1.0};
  std::vector<double> terms(static_cast<std::size_t>(path_length) + 1, 0.0);
  terms[0] = std::exp(-a_exp * static_cast<double>(z));
  long prune_hi = z + prune_radius(dist, path_length);
  for (long j = 1; j <= path_length; ++j) {
    line.step(dist, 0, kNoBound, -kNoBound, prune_hi);
    double acc = 0.0;
    long hi = line.lo + static_cast<long>(line.mass.size()) - 1;
    for (long p = line.lo; p <= hi; ++p)
      acc += std::exp(-a_exp * static_cast<double>(p)) * line.at(p);
    terms[static_cast<std::size_t>(j)] = acc;
  }
  return finish_series(terms, line.pruned, path_length);
}

double dp_survival(const StepDistribution& dist, long n, double u) {
  if (!dist.is_lattice())
    throw std::invalid_argument("dp_survival: lattice step law required");
  long floor_u = static_cast<long>(std::floor(u + 1e-9));
  DpLine line;
  line.lo = 0;
  line.mass = {1.0};
  long prune_hi = prune_radius(dist, n);
  for (long j = 1; j <= n; ++j)
    line.step(dist, -floor_u, kNoBound, -kNoBound, prune_hi);
  long hi = line.lo + static_cast<long>(line.mass.size()) - 1;
  return line.sum_range(-floor_u, hi) + line.pruned;
}

double dp_ballot(const StepDistribution& dist, long n, long a, long lo, long hi) {
  if (!dist.is_lattice())
    throw std::invalid_argument("dp_ballot: lattice step law required");
  DpLine line;
  line.lo = 0;
  line.mass = {1.0};
  long prune_hi = prune_radius(dist, n);
  for (long j = 1; j <= n; ++j)
    line.step(dist, -a, kNoBound, -kNoBound, prune_hi);
  return line.sum_range(lo, hi);
}

// ---------------------------------------------------------------------------
// Monte Carlo ladder backend
// ---------------------------------------------------------------------------

LadderSample ladder_sample(const StepDistribution& dist, long long path_length,
                           RngStream& rng) {
  LadderSample out;
  out.path_length = path_length;
  double s = 0.0, run_min = 0.0, run_max = 0.0;
  for (long long j = 1; j <= path_length; ++j) {
    s += dist.sample(rng);
    if (s < run_min) {
      run_min = s;
      out.desc_heights.push_back(s);
      out.desc_epochs.push_back(j);
    }
    if (s > run_max) {
      run_max = s;
      out.asc_heights.push_back(s);
      out.asc_epochs.push_back(j);
    }
  }
  out.desc_censored = true;  // later epochs always possible past the cap
  out.asc_censored = true;
  return out;
}

McRenewalTable mc_renewal_table(const StepDistribution& dist, double u_max,
                                double du, long long replicas,
                                long long path_cap, RngStream& rng) {
  McRenewalTable table;
  table.du = du;
  std::size_t points = static_cast<std::size_t>(std::floor(u_max / du)) + 1;
  table.grid.resize(points);
  for (std::size_t i = 0; i < points; ++i) table.grid[i] = du * static_cast<double>(i);

  std::vector<Accumulator> acc_minus(points), acc_plus(points);
  const double needed = u_max + 2.0 * du;
  long long censored = 0;

  std::vector<double> desc, asc;
  for (long long r = 0; r < replicas; ++r) {
    desc.clear();
    asc.clear();
    double s = 0.0, run_min = 0.0, run_max = 0.0;
    long long j = 0;
    while ((run_min > -needed || run_max < needed) && j < path_cap) {
      ++j;
      s += dist.sample(rng);
      if (s < run_min) {
        run_min = s;
        if (s >= -needed) desc.push_back(-s);
      }
      if (s > run_max) {
        run_max = s;
        if (s <= needed) asc.push_back(s);
      }
    }
    if (run_min > -needed || run_max < needed) ++censored;
    // ladder magnitudes arrive sorted; sweep the grid with two pointers
    std::size_t di = 0, ai = 0;
    for (std::size_t g = 0; g < points; ++g) {
      while (di < desc.size() && desc[di] <= table.grid[g] + 1e-12) ++di;
      while (ai < asc.size() && asc[ai] <= table.grid[g] + 1e-12) ++ai;
      acc_minus[g].add(1.0 + static_cast<double>(di));  // +1 for H_0 = 0
      acc_plus[g].add(1.0 + static_cast<double>(ai));
    }
  }

  table.replicas = replicas;
  table.censored_fraction =
      replicas > 0 ? static_cast<double>(censored) / static_cast<double>(replicas) : 0.0;
  table.r_minus.resize(points);
  table.r_minus_stderr.resize(points);
  table.r_plus.resize(points);
  table.r_plus_stderr.resize(points);
  for (std::size_t g = 0; g < points; ++g) {
    table.r_minus[g] = acc_minus[g].mean();
    table.r_minus_stderr[g] = acc_minus[g].std_error();
    table.r_plus[g] = acc_plus[g].mean();
    table.r_plus_stderr[g] = acc_plus[g].std_error();
  }
  return table;
}

namespace {

double interp(const std::vector<double>& grid, const std::vector<double>& val,
              double du, double u) {
  if (u <= grid.front()) return val.front();
  double idx = u / du;
  std::size_t i = static_cast<std::size_t>(idx);
  if (i + 1 >= grid.size()) {
    // linear extrapolation with the terminal slope (R grows affinely)
    std::size_t n = grid.size();
    double slope = (val[n - 1] - val[n - 2]) / du;
    return val[n - 1] + slope * (u - grid[n - 1]);
  }
  double frac = idx - static_cast<double>(i);
  return val[i] * (1.0 - frac) + val[i + 1] * frac;
}

}  // namespace

double McRenewalTable::r_minus_at(double u) const {
  return interp(grid, r_minus, du, u);
}
double McRenewalTable::r_plus_at(double u) const { return interp(grid, r_plus, du, u); }
double McRenewalTable::r_minus_stderr_at(double u) const {
  return interp(grid, r_minus_stderr, du, u);
}

ValueWithError renewal_minus(const StepDistribution& dist, double u, Method method,
                             const LatticeOracle* oracle,
                             const McRenewalTable* table) {
  ValueWithError out;
  out.method = method;
  if (method == Method::ExactLatticeDP) {
    if (!dist.is_lattice())
      throw std::invalid_argument("ExactLatticeDP rejected for continuous step law");
    if (!oracle) throw std::invalid_argument("renewal_minus: oracle required");
    out.value = oracle->r_minus(u);
    out.error_bound = oracle->error_bound() * (1.0 + u);
  } else {
    if (!table) throw std::invalid_argument("renewal_minus: MC table required");
    out.value = table->r_minus_at(u);
    out.error_bound = table->r_minus_stderr_at(u);
  }
  return out;
}

ValueWithError renewal_plus(const StepDistribution& dist, double u, Method method,
                            const LatticeOracle* oracle,
                            const McRenewalTable* table) {
  ValueWithError out;
  out.method = method;
  if (method == Method::ExactLatticeDP) {
    if (!dist.is_lattice())
      throw std::invalid_argument("ExactLatticeDP rejected for continuous step law");
    if (!oracle) throw std::invalid_argument("renewal_plus: oracle required");
    out.value = oracle->r_plus(u);
    out.error_bound = oracle->error_bound() * (1.0 + u);
  } else {
    if (!table) throw std::invalid_argument("renewal_plus: MC table required");
    out.value = table->r_plus_at(u);
    out.error_bound = 0.0;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checks
// ---------------------------------------------------------------------------

HarmonicityReport check_harmonicity(const LatticeOracle& oracle, double u) {
  const StepDistribution& d = oracle.dist();
  double exp_minus = 0.0, exp_plus = 0.0;
  for (std::size_t si = 0; si < d.offsets.size(); ++si) {
    double s = d.offsets[si], p = d.probs[si];
    if (u + s >= -1e-9) exp_minus += p * oracle.r_minus(u + s);
    if (u - s >= -1e-9) exp_plus += p * oracle.r_plus(u - s);
  }
  HarmonicityReport rep;
  rep.residual = oracle.r_minus(u) - exp_minus;
  rep.residual_plus = oracle.r_plus(u) - exp_plus;
  rep.combined_stderr = 0.0;
  return rep;
}

HarmonicityReport check_harmonicity_mc(const McRenewalTable& table,
                                       const StepDistribution& dist, double u,
                                       long long n_samples, RngStream& rng) {
  Accumulator acc_minus, acc_plus, table_err;
  for (long long i = 0; i < n_samples; ++i) {
    double s = dist.sample(rng);
    double vm = (u + s >= 0.0) ? table.r_minus_at(u + s) : 0.0;
    double vp = (u - s >= 0.0) ? table.r_plus_at(u - s) : 0.0;
    acc_minus.add(vm);
    acc_plus.add(vp);
    double te = (u + s >= 0.0) ? table.r_minus_stderr_at(u + s) : 0.0;
    table_err.add(te * te);
  }
  HarmonicityReport rep;
  rep.residual = table.r_minus_at(u) - acc_minus.mean();
  rep.residual_plus = table.r_plus_at(u) - acc_plus.mean();
  double t0 = table.r_minus_stderr_at(u);
  rep.combined_stderr = std::sqrt(acc_minus.std_error() * acc_minus.std_error() +
                                  t0 * t0 + table_err.mean());
  return rep;
}

IdentityReport check_renewal_identity(const LatticeOracle& oracle, double x, long a) {
  if (a <= 0)
    throw std::invalid_argument(
        "renewal identity: a = 0 rejected (the identity fails there)");
  ValueWithError lhs = oracle.r_tilde(x, a);
  double rhs = oracle.renewal_identity_rhs(x, a);
  IdentityReport rep;
  rep.lhs = lhs.value;
  rep.rhs = rhs;
  rep.residual = lhs.value - rhs;
  rep.combined_bound = lhs.error_bound +
                       oracle.error_bound() * (1.0 + x) * (1.0 + static_cast<double>(a)) +
                       1e-11 * (1.0 + std::abs(rhs));
  return rep;
}

double check_tilde_increment_bound(const LatticeOracle& oracle, double x, long a,
                                   long b) {
  if (b == 0) return 0.0;
  double hi = oracle.r_tilde(x + static_cast<double>(b), a).value;
  double lo = oracle.r_tilde(x, a).value;
  double denom = (1.0 + static_cast<double>(a)) *
                 (1.0 + static_cast<double>(b)) * (1.0 + static_cast<double>(b));
  return (hi - lo) / denom;
}

KozlovTable kozlov_check(const StepDistribution& dist,
                         const std::vector<double>& u_grid,
                         const std::vector<long long>& n_grid, long long n_samples,
                         const std::function<double(double)>& r_minus_fn,
                         RngStream& rng) {
  KozlovTable out;
  out.u_grid = u_grid;
  out.n_grid = n_grid;
  long long n_max = *std::max_element(n_grid.begin(), n_grid.end());

  std::vector<std::vector<Accumulator>> cells(
      u_grid.size(), std::vector<Accumulator>(n_grid.size()));
  for (long long rep = 0; rep < n_samples; ++rep) {
    double s = 0.0, run_min = 0.0;
    std::size_t gi = 0;
    for (long long j = 1; j <= n_max; ++j) {
      s += dist.sample(rng);
      run_min = std::min(run_min, s);
      while (gi < n_grid.size() && n_grid[gi] == j) {
        for (std::size_t ui = 0; ui < u_grid.size(); ++ui)
          cells[ui][gi].add(run_min >= -u_grid[ui] ? 1.0 : 0.0);
        ++gi;
      }
    }
  }

  out.scaled.assign(u_grid.size(), std::vector<double>(n_grid.size(), 0.0));
  out.scaled_stderr = out.scaled;
  double num = 0.0, den = 0.0;
  for (std::size_t ui = 0; ui < u_grid.size(); ++ui) {
    double r = r_minus_fn(u_grid[ui]);
    for (std::size_t ni = 0; ni < n_grid.size(); ++ni) {
      double root = std::sqrt(static_cast<double>(n_grid[ni]));
      double v = root * cells[ui][ni].mean();
      double se = root * cells[ui][ni].std_error();
      out.scaled[ui][ni] = v;
      out.scaled_stderr[ui][ni] = se;
      double w = se > 0 ? 1.0 / (se * se) : 1.0;
      num += w * r * v;
      den += w * r * r;
    }
  }
  out.theta_minus_fit = den > 0 ? num / den : 0.0;
  for (std::size_t ui = 0; ui < u_grid.size(); ++ui) {
    double r = r_minus_fn(u_grid[ui]);
    for (std::size_t ni = 0; ni < n_grid.size(); ++ni) {
      double fit = out.theta_minus_fit * r;
      if (fit > 0)
        out.max_relative_residual = std::max(
            out.max_relative_residual, std::abs(out.scaled[ui][ni] - fit) / fit);
    }
  }
  return out;
}

BallotReport ballot_bound_check(const StepDistribution& dist, double a, double b,
                                double u, const std::vector<long long>& n_grid,
                                long long n_samples, RngStream& rng) {
  BallotReport out;
  out.n_grid = n_grid;
  long long n_max = *std::max_element(n_grid.begin(), n_grid.end());
  std::vector<Accumulator> acc(n_grid.size());
  for (long long rep = 0; rep < n_samples; ++rep) {
    double s = 0.0, run_min = 0.0;
    std::size_t gi = 0;
    for (long long j = 1; j <= n_max; ++j) {
      s += dist.sample(rng);
      run_min = std::min(run_min, s);
      while (gi < n_grid.size() && n_grid[gi] == j) {
        bool hit = run_min >= -a && s >= b - a && s <= b - a + u;
        acc[gi].add(hit ? 1.0 : 0.0);
        ++gi;
      }
    }
  }
  double denom = (u + 1.0) * (a + 1.0) * (b + u + 1.0);
  out.ratios.resize(n_grid.size());
  out.ratio_stderr.resize(n_grid.size());
  for (std::size_t gi = 0; gi < n_grid.size(); ++gi) {
    double scale = std::pow(static_cast<double>(n_grid[gi]), 1.5) / denom;
    out.ratios[gi] = scale * acc[gi].mean();
    out.ratio_stderr[gi] = scale * acc[gi].std_error();
    out.max_ratio = std::max(out.max_ratio, out.ratios[gi]);
  }
  return out;
}

GreenSumResult green_sum(const StepDistribution& dist, double a_exp, double z,
                         long long n_samples, long long path_length,
                         RngStream& rng) {
  GreenSumResult out;
  if (dist.is_lattice()) {
    SeriesResult full = dp_green_series(dist, a_exp, static_cast<long>(z), path_length);
    SeriesResult half = dp_green_series(dist, a_exp, static_cast<long>(z), path_length / 2);
    out.estimate.value = full.partial;
    out.estimate.stderror = 0.0;
    out.estimate.n_effective = static_cast<double>(path_length);
    out.estimate.method = "exact-lattice-dp";
    out.estimate.finalize_ci();
    out.tail_increment = full.partial - half.partial;
    out.truncation_tail = full.tail_estimate;
    return out;
  }
  Accumulator acc, acc_half;
  for (long long rep = 0; rep < n_samples; ++rep) {
    double s = z;
    double total = std::exp(-a_exp * s);
    double at_half = 0.0;
    long long l = 0;
    while (l < path_length) {
      ++l;
      s += dist.sample(rng);
      if (s < 0.0) break;
      total += std::exp(-a_exp * s);
      if (l == path_length / 2) at_half = total;
    }
    if (l <= path_length / 2 && at_half == 0.0) at_half = total;
    acc.add(total);
    acc_half.add(at_half);
  }
  out.estimate = acc.estimate("mc-truncated");
  out.tail_increment = acc.mean() - acc_half.mean();
  out.truncation_tail = out.tail_increment;  // crude MC tail proxy
  return out;
}

}  // namespace brw::walk
