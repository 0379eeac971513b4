#pragma once

// Boundary-case point-process families and their spine-tilted laws.
//
// The shipped family is GaussianDyadic(p): with probability p the particle
// has two children, each displaced by an independent Gaussian(mu, sigma_g2);
// otherwise it has none. Both boundary normalizations hold in closed form
// when mu = sigma_g2 = 2 ln(2p), which pins the family to a single parameter
// p in (1/2, 1].

#include <array>
#include <string>

#include "brw/rng.hpp"
#include "brw/step_dist.hpp"

namespace brw::models {

enum class Family { GaussianDyadic };

std::string family_name(Family f);
Family family_from_name(const std::string& name);

struct PointProcessSpec {
  Family family = Family::GaussianDyadic;
  double p = 1.0;         // branching probability
  double mu = 0.0;        // mean displacement (nats)
  double sigma_g2 = 0.0;  // displacement variance (nats^2)
};

// Validating factory; rejects p outside (1/2, 1].
PointProcessSpec make_spec(Family family, double p);

struct BoundaryReport {
  double residual_mass = 0.0;   // |E sum e^{-V} - 1|
  double residual_tilt = 0.0;   // |E sum V e^{-V}|
  double sigma2_spine = 0.0;    // E sum V^2 e^{-V}
};

// Adaptive-quadrature diagnostic, deliberately independent of the closed
// forms used by make_spec.
BoundaryReport validate_boundary(const PointProcessSpec& spec);

struct OffspringDraw {
  int count = 0;
  std::array<double, 2> displacements{};
};

OffspringDraw sample_offspring(const PointProcessSpec& spec, RngStream& rng);

struct TiltedDraw {
  double spine_displacement = 0.0;
  int sibling_count = 0;
  std::array<double, 2> sibling_displacements{};
};

// One-step law of the spine under the size-biased measure: the e^{-x}-tilt of
// the displacement law, which the boundary conditions center exactly.
StepDistribution spine_step_law(const PointProcessSpec& spec);

// Joint draw of (spine displacement, sibling displacements) under Q. For
// GaussianDyadic the children are i.i.d., so the pair factorizes: the spine
// step is the tilted Gaussian and the single sibling keeps the original law.
TiltedDraw sample_tilted_offspring(const PointProcessSpec& spec, RngStream& rng);

// Exact extinction probability by generation `horizon` (iterated generating
// function); horizon < 0 iterates to the fixed point.
double extinction_probability(const PointProcessSpec& spec, int horizon = -1);

}  // namespace brw::models
