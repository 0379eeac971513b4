#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "brw/quadrature.hpp"
#include "brw/rng.hpp"
#include "brw/stats.hpp"

using namespace brw;

TEST_CASE("accumulator merge equals sequential accumulation exactly") {
  RngStream rng(5, 0);
  std::vector<double> xs;
  for (int i = 0; i < 10000; ++i) xs.push_back(rng.gaussian());

  Accumulator whole;
  for (double x : xs) whole.add(x);

  std::vector<Accumulator> chunks(7);
  for (std::size_t i = 0; i < xs.size(); ++i) chunks[i / 1500].add(xs[i]);
  Accumulator folded = fold_in_order(chunks);

  CHECK(folded.mean() == whole.mean());
  CHECK(folded.variance() == whole.variance());
}

TEST_CASE("ks calibration: Exp(1) draws against Exp(1)") {
  int below = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    RngStream rng(seed, 0);
    std::vector<double> xs;
    for (int i = 0; i < 10000; ++i) xs.push_back(rng.exponential());
    KsReport r = ks_test(xs, exp1_cdf);
    if (r.p_value < 0.1) ++below;
  }
  CHECK(below <= 2);
}

TEST_CASE("ks power: Exp(1) against Exp(2)") {
  RngStream rng(11, 0);
  std::vector<double> xs;
  for (int i = 0; i < 10000; ++i) xs.push_back(rng.exponential(2.0));
  KsReport r = ks_test(xs, exp1_cdf);
  CHECK(r.p_value < 1e-6);
}

TEST_CASE("two-sample ks: identical samples give statistic 0") {
  RngStream rng(3, 0);
  std::vector<double> xs;
  for (int i = 0; i < 500; ++i) xs.push_back(rng.gaussian());
  KsReport r = ks_test_two_sample(xs, xs);
  CHECK(r.statistic == 0.0);
}

TEST_CASE("undersampled ks input is rejected") {
  std::vector<double> xs(20, 1.0);
  CHECK_THROWS_AS(ks_test(xs, exp1_cdf), std::invalid_argument);
}

TEST_CASE("weighted ks uses effective sample size") {
  RngStream rng(17, 0);
  std::vector<WeightedSample> ws;
  for (int i = 0; i < 4000; ++i) ws.push_back({rng.exponential(), rng.uniform() + 0.5});
  KsReport r = ks_test_weighted(ws, exp1_cdf);
  CHECK(r.n_effective < 4000.0);
  CHECK(r.n_effective > 3000.0);
  CHECK(r.p_value > 0.001);
}

TEST_CASE("plateau fit: constant, 1/x perturbation, linear control") {
  std::vector<double> x, y, e;
  for (double v = 6; v <= 12; v += 1) {
    x.push_back(v);
    y.push_back(1.0);
    e.push_back(0.01);
  }
  PlateauFit flat = plateau_fit(x, y, e);
  CHECK(flat.drift == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(flat.level == doctest::Approx(1.0));

  std::vector<double> y2;
  for (double v : x) y2.push_back(1.0 + 1.0 / v);
  PlateauFit curved = plateau_fit(x, y2, e);
  CHECK(curved.drift < 0.10 * curved.level);

  std::vector<double> y3;
  for (double v : x) y3.push_back(v);
  PlateauFit linear = plateau_fit(x, y3, e);
  CHECK(linear.drift > 0.10 * linear.level);
}

TEST_CASE("plateau fit rejects short curves") {
  std::vector<double> x = {1, 2, 3}, y = {1, 1, 1}, e = {0.1, 0.1, 0.1};
  CHECK_THROWS_AS(plateau_fit(x, y, e), std::invalid_argument);
}

TEST_CASE("adaptive quadrature hits 1e-12 on smooth integrands") {
  double cubic = integrate([](double t) { return t * t; }, 0.0, 1.0, 1e-13);
  CHECK(std::abs(cubic - 1.0 / 3.0) < 1e-12);
  double gauss = integrate(
      [](double t) { return std::exp(-0.5 * t * t) / std::sqrt(6.283185307179586); },
      -10.0, 10.0, 1e-13);
  CHECK(std::abs(gauss - 1.0) < 1e-11);
}
