#pragma once

// Centered one-step laws for the spine walk S: either a continuous Gaussian
// (the law induced by a point-process family) or a finite-support integer
// lattice law (the verification vehicle for the renewal-theory oracles).

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "brw/rng.hpp"
#include "brw/stats.hpp"

namespace brw {

struct StepDistribution {
  enum class Kind { ContinuousGaussian, Lattice };

  Kind kind = Kind::ContinuousGaussian;
  double mean = 0.0;
  double variance = 1.0;
  std::vector<int> offsets;       // lattice support (sorted)
  std::vector<double> probs;      // matching probabilities
  std::vector<double> cum;        // prefix sums for sampling
  std::string name;

  static StepDistribution gaussian(double mean, double variance,
                                   std::string name = "gaussian") {
    if (!(variance > 0.0) || !std::isfinite(variance))
      throw std::invalid_argument("step distribution: variance must be finite and positive");
    if (std::abs(mean) > 1e-12)
      throw std::invalid_argument("step distribution: mean must vanish (centered walk)");
    StepDistribution d;
    d.kind = Kind::ContinuousGaussian;
    d.mean = 0.0;
    d.variance = variance;
    d.name = std::move(name);
    return d;
  }

  static StepDistribution lattice(std::vector<int> offsets_in,
                                  std::vector<double> probs_in,
                                  std::string name = "lattice") {
    if (offsets_in.size() != probs_in.size() || offsets_in.empty())
      throw std::invalid_argument("step distribution: offsets/probs mismatch");
    double total = std::accumulate(probs_in.begin(), probs_in.end(), 0.0);
    if (std::abs(total - 1.0) > 1e-12)
      throw std::invalid_argument("step distribution: probabilities must sum to 1");
    double m = 0.0, v = 0.0;
    for (std::size_t i = 0; i < offsets_in.size(); ++i) m += offsets_in[i] * probs_in[i];
    if (std::abs(m) > 1e-12)
      throw std::invalid_argument("step distribution: mean must vanish (centered walk)");
    for (std::size_t i = 0; i < offsets_in.size(); ++i) {
      double d = offsets_in[i] - m;
      v += d * d * probs_in[i];
    }
    if (!(v > 0.0))
      throw std::invalid_argument("step distribution: variance must be positive");
    StepDistribution d;
    d.kind = Kind::Lattice;
    d.mean = 0.0;
    d.variance = v;
    d.offsets = std::move(offsets_in);
    d.probs = std::move(probs_in);
    d.cum.resize(d.probs.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < d.probs.size(); ++i) {
      acc += d.probs[i];
      d.cum[i] = acc;
    }
    d.cum.back() = 1.0;
    d.name = std::move(name);
    return d;
  }

  // Simple +-1 walk; every renewal quantity has a closed form.
  static StepDistribution srw() {
    return lattice({-1, 1}, {0.5, 0.5}, "srw");
  }

  // Asymmetric centered aperiodic walk on {-2,...,2}.
  static StepDistribution asym_lattice() {
    return lattice({-2, -1, 0, 1, 2}, {0.10, 0.35, 0.15, 0.25, 0.15}, "asym212");
  }

  bool is_lattice() const { return kind == Kind::Lattice; }

  int min_offset() const { return offsets.front(); }
  int max_offset() const { return offsets.back(); }

  double sample(RngStream& rng) const {
    if (kind == Kind::ContinuousGaussian)
      return rng.gaussian(0.0, std::sqrt(variance));
    double u = rng.uniform();
    for (std::size_t i = 0; i < cum.size(); ++i)
      if (u < cum[i]) return offsets[i];
    return offsets.back();
  }

  int sample_lattice(RngStream& rng) const {
    double u = rng.uniform();
    for (std::size_t i = 0; i < cum.size(); ++i)
      if (u < cum[i]) return offsets[i];
    return offsets.back();
  }

  double cdf(double x) const {
    if (kind == Kind::ContinuousGaussian)
      return normal_cdf(x / std::sqrt(variance));
    double acc = 0.0;
    for (std::size_t i = 0; i < offsets.size(); ++i)
      if (offsets[i] <= x) acc += probs[i];
    return acc;
  }
};

}  // namespace brw
