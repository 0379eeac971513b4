#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "brw/models.hpp"
#include "brw/stats.hpp"

using namespace brw;
using namespace brw::models;

TEST_CASE("boundary normalization in closed form") {
  PointProcessSpec s1 = make_spec(Family::GaussianDyadic, 1.0);
  CHECK(s1.mu == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-12));
  CHECK(s1.sigma_g2 == doctest::Approx(1.3862943611198906).epsilon(1e-12));

  PointProcessSpec s08 = make_spec(Family::GaussianDyadic, 0.8);
  CHECK(s08.sigma_g2 == doctest::Approx(2.0 * std::log(1.6)).epsilon(1e-12));
  CHECK(s08.sigma_g2 == doctest::Approx(0.9400072584914712).epsilon(1e-9));

  CHECK_THROWS_AS(make_spec(Family::GaussianDyadic, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(make_spec(Family::GaussianDyadic, 0.2), std::invalid_argument);
  CHECK_THROWS_AS(make_spec(Family::GaussianDyadic, 1.2), std::invalid_argument);
}

TEST_CASE("quadrature residuals below 1e-10 across the family") {
  for (double p : {0.6, 0.8, 1.0}) {
    PointProcessSpec spec = make_spec(Family::GaussianDyadic, p);
    BoundaryReport rep = validate_boundary(spec);
    CHECK(rep.residual_mass < 1e-10);
    CHECK(rep.residual_tilt < 1e-10);
  }
  // tilted second moment at p = 1 equals 2 ln 2
  BoundaryReport rep = validate_boundary(make_spec(Family::GaussianDyadic, 1.0));
  CHECK(rep.sigma2_spine == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-9));
}

TEST_CASE("a corrupted spec is reported, not repaired") {
  PointProcessSpec broken = make_spec(Family::GaussianDyadic, 0.8);
  broken.mu = broken.sigma_g2 + 0.3;
  BoundaryReport rep = validate_boundary(broken);
  CHECK(rep.residual_tilt > 1e-3);
}

TEST_CASE("offspring sampling matches the law") {
  PointProcessSpec spec = make_spec(Family::GaussianDyadic, 0.8);
  RngStream rng(101, 0);
  Accumulator branch, disp, mass;
  const int n = 1000000;
  for (int i = 0; i < n; ++i) {
    OffspringDraw draw = sample_offspring(spec, rng);
    branch.add(draw.count == 2 ? 1.0 : 0.0);
    if (draw.count == 2) {
      disp.add(draw.displacements[0]);
      disp.add(draw.displacements[1]);
    }
    double w = 0.0;
    for (int c = 0; c < draw.count; ++c) w += std::exp(-draw.displacements[c]);
    mass.add(w);
  }
  CHECK(std::abs(branch.mean() - spec.p) <= 3.0 * branch.std_error());
  CHECK(std::abs(disp.mean() - spec.mu) <= 3.0 * disp.std_error());
  // lognormal-moment oracle: E sum e^{-V} = 2p e^{-mu + sigma^2/2} = 1
  CHECK(std::abs(mass.mean() - 1.0) <= 3.0 * mass.std_error());
}

TEST_CASE("spine step law is the centered tilted Gaussian") {
  PointProcessSpec spec = make_spec(Family::GaussianDyadic, 1.0);
  StepDistribution law = spine_step_law(spec);
  CHECK(law.mean == 0.0);
  CHECK(law.variance == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-12));

  BoundaryReport rep = validate_boundary(spec);
  CHECK(std::abs(law.variance - rep.sigma2_spine) < 1e-10);

  // self-consistency of the two samplers: V(w_1) against the step law
  RngStream rng(55, 0);
  std::vector<double> xs;
  for (int i = 0; i < 100000; ++i)
    xs.push_back(sample_tilted_offspring(spec, rng).spine_displacement);
  double sd = std::sqrt(law.variance);
  KsReport ks = ks_test(xs, [&](double v) { return normal_cdf(v / sd); });
  CHECK(ks.p_value > 0.01);
}

TEST_CASE("tilted offspring factorizes: tilted spine, untilted sibling") {
  PointProcessSpec spec = make_spec(Family::GaussianDyadic, 0.8);
  RngStream rng(7, 0);
  Accumulator sib, sp;
  for (int i = 0; i < 1000000; ++i) {
    TiltedDraw draw = sample_tilted_offspring(spec, rng);
    REQUIRE(draw.sibling_count == 1);  // the spine parent always branches
    sib.add(draw.sibling_displacements[0]);
    sp.add(draw.spine_displacement);
  }
  CHECK(std::abs(sib.mean() - spec.mu) <= 3.0 * sib.std_error());
  CHECK(std::abs(sp.mean()) <= 3.0 * sp.std_error());
}

TEST_CASE("many-to-one at n = 1 by direct sampling") {
  PointProcessSpec spec = make_spec(Family::GaussianDyadic, 0.8);
  StepDistribution law = spine_step_law(spec);
  RngStream rng(13, 0);
  const int n = 1000000;

  struct G {
    const char* name;
    double (*f)(double);
  };
  const G gs[] = {{"one", [](double) { return 1.0; }},
                  {"below", [](double v) { return v <= 0.0 ? 1.0 : 0.0; }},
                  {"identity", [](double v) { return v; }}};

  for (const G& g : gs) {
    Accumulator tree_side, walk_side;
    RngStream rt(13, 1), rw(13, 2);
    for (int i = 0; i < n; ++i) {
      OffspringDraw draw = sample_offspring(spec, rt);
      double acc = 0.0;
      for (int c = 0; c < draw.count; ++c) acc += g.f(draw.displacements[c]);
      tree_side.add(acc);
      double s1 = law.sample(rw);
      walk_side.add(std::exp(s1) * g.f(s1));
    }
    double comb = std::sqrt(tree_side.std_error() * tree_side.std_error() +
                            walk_side.std_error() * walk_side.std_error());
    CHECK(std::abs(tree_side.mean() - walk_side.mean()) <= 3.0 * comb);
  }
  (void)rng;
}

TEST_CASE("extinction probability by generating-function iteration") {
  PointProcessSpec spec = make_spec(Family::GaussianDyadic, 0.8);
  CHECK(extinction_probability(spec) == doctest::Approx(0.25).epsilon(1e-10));
  CHECK(extinction_probability(spec, 0) == 0.0);
  double q5 = extinction_probability(spec, 5);
  double q20 = extinction_probability(spec, 20);
  CHECK(q5 < q20);
  CHECK(q20 < 0.25);
}
