#include "brw/models.hpp"

#include <cmath>
#include <stdexcept>

#include "brw/quadrature.hpp"

namespace brw::models {

std::string family_name(Family f) {
  switch (f) {
    case Family::GaussianDyadic:
      return "gaussian-dyadic";
  }
  return "unknown";
}

Family family_from_name(const std::string& name) {
  if (name == "gaussian-dyadic") return Family::GaussianDyadic;
  throw std::invalid_argument("unknown point-process family: " + name);
}

PointProcessSpec make_spec(Family family, double p) {
  if (family != Family::GaussianDyadic)
    throw std::invalid_argument("unsupported family");
  if (!(p > 0.5))
    throw std::invalid_argument(
        "make_spec: p must exceed 1/2 (normalization needs positive variance)");
  if (!(p <= 1.0)) throw std::invalid_argument("make_spec: p must be <= 1");
  PointProcessSpec spec;
  spec.family = family;
  spec.p = p;
  // Mass: 2p e^{-mu + sigma^2/2} = 1 and tilt: mu = sigma^2 give
  // mu = sigma^2 = 2 ln(2p).
  spec.sigma_g2 = 2.0 * std::log(2.0 * p);
  spec.mu = spec.sigma_g2;
  return spec;
}

namespace {

double gaussian_density(double x, double mu, double var) {
  double z = x - mu;
  return std::exp(-0.5 * z * z / var) / std::sqrt(6.283185307179586 * var);
}

}  // namespace

BoundaryReport validate_boundary(const PointProcessSpec& spec) {
  const double mu = spec.mu;
  const double var = spec.sigma_g2;
  const double sd = std::sqrt(var);
  // e^{-x} * N(x; mu, var) is a Gaussian bump centered near mu - var; cover
  // both centers with a wide pad so the truncation error sits far below the
  // quadrature tolerance.
  const double lo = std::min(mu, mu - var) - 14.0 * sd - 1.0;
  const double hi = std::max(mu, mu - var) + 14.0 * sd + 1.0;
  const double twop = 2.0 * spec.p;

  auto mass = integrate(
      [&](double x) { return twop * std::exp(-x) * gaussian_density(x, mu, var); },
      lo, hi, 1e-13);
  auto tilt = integrate(
      [&](double x) { return twop * x * std::exp(-x) * gaussian_density(x, mu, var); },
      lo, hi, 1e-13);
  auto second = integrate(
      [&](double x) {
        return twop * x * x * std::exp(-x) * gaussian_density(x, mu, var);
      },
      lo, hi, 1e-13);

  BoundaryReport report;
  report.residual_mass = std::abs(mass - 1.0);
  report.residual_tilt = std::abs(tilt);
  report.sigma2_spine = second;
  return report;
}

OffspringDraw sample_offspring(const PointProcessSpec& spec, RngStream& rng) {
  OffspringDraw draw;
  if (rng.bernoulli(spec.p)) {
    const double sd = std::sqrt(spec.sigma_g2);
    draw.count = 2;
    draw.displacements[0] = rng.gaussian(spec.mu, sd);
    draw.displacements[1] = rng.gaussian(spec.mu, sd);
  }
  return draw;
}

StepDistribution spine_step_law(const PointProcessSpec& spec) {
  // The e^{-x}-tilt of N(mu, s2) is N(mu - s2, s2); mu = s2 centers it.
  return StepDistribution::gaussian(0.0, spec.sigma_g2, "spine-" + family_name(spec.family));
}

TiltedDraw sample_tilted_offspring(const PointProcessSpec& spec, RngStream& rng) {
  const double sd = std::sqrt(spec.sigma_g2);
  TiltedDraw draw;
  draw.spine_displacement = rng.gaussian(0.0, sd);
  draw.sibling_count = 1;
  draw.sibling_displacements[0] = rng.gaussian(spec.mu, sd);
  return draw;
}

double extinction_probability(const PointProcessSpec& spec, int horizon) {
  // Offspring generating function f(s) = (1-p) + p s^2.
  double q = 0.0;
  if (horizon >= 0) {
    for (int i = 0; i < horizon; ++i) q = (1.0 - spec.p) + spec.p * q * q;
    return q;
  }
  for (int i = 0; i < 100000; ++i) {
    double next = (1.0 - spec.p) + spec.p * q * q;
    if (std::abs(next - q) < 1e-15) return next;
    q = next;
  }
  return q;
}

}  // namespace brw::models
