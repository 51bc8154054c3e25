#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <random>

#include "oracle_helpers.hpp"
#include "rd/band.hpp"

using namespace rd;
using rd::testing::kPi;
using rd::testing::mc_probability;
using rd::testing::simulate_suprema;

namespace {

OmegaMatrix omega_from(double v, double c, double vp, double h) {
  OmegaMatrix om;
  om.v = v;
  om.c = c;
  om.vp = vp;
  om.omega << v, c, c, vp;
  const Eigen::Matrix2d scale = Eigen::DiagonalMatrix<double, 2>(1.0, 1.0 / h);
  om.omega_h = scale * om.omega * scale;
  return om;
}

JointEstimates point_estimates(double tau, double tau_prime) {
  JointEstimates est;
  est.tau_tilde = tau;
  est.tau_prime_tilde = tau_prime;
  return est;
}

}  // namespace

TEST_CASE("extrapolation point evaluation") {
  const JointEstimates est = point_estimates(1.0, 0.5);
  CHECK(extrapolate_point(est, 0.0) == 1.0);
  CHECK(extrapolate_point(est, 2.0) == doctest::Approx(2.0));
  const double left = extrapolate_point(est, 1.0);
  const double right = extrapolate_point(est, -1.0);
  CHECK(left + right == 2.0 * extrapolate_point(est, 0.0));
}

TEST_CASE("direction angle for canonical shapes") {
  CHECK(direction_angle(Eigen::Matrix2d::Identity(), 1.0, 1.0) ==
        doctest::Approx(kPi / 2.0).epsilon(1e-12));
  CHECK(direction_angle(Eigen::Matrix2d::Identity(), 0.0, 0.0) ==
        doctest::Approx(0.0));
  Eigen::Matrix2d diag41;
  diag41 << 4.0, 0.0, 0.0, 1.0;
  CHECK(direction_angle(diag41, 1.0, 1.0) ==
        doctest::Approx(std::acos(3.0 / 5.0)).epsilon(1e-12));
}

TEST_CASE("Gram angle agrees with the explicit square-root construction") {
  std::mt19937 rng(99);
  std::uniform_real_distribution<double> u(0.2, 3.0);
  std::uniform_real_distribution<double> ud(0.05, 2.0);
  for (int trial = 0; trial < 100; ++trial) {
    const double a = u(rng), b = u(rng), r = 0.85 * std::sqrt(a * b);
    Eigen::Matrix2d omega_h;
    omega_h << a, r, r, b;
    const double d1 = ud(rng), d2 = ud(rng);
    const double gram = direction_angle(omega_h, d1, d2);

    const Eigen::Matrix2d root = sym_sqrt_2x2(omega_h);
    const Eigen::Vector2d v1 = root * Eigen::Vector2d(1.0, -d1);
    const Eigen::Vector2d v2 = root * Eigen::Vector2d(1.0, d2);
    const double direct =
        std::acos(std::clamp(v1.dot(v2) / (v1.norm() * v2.norm()), -1.0, 1.0));
    CHECK(gram == doctest::Approx(direct).epsilon(1e-12));
  }
}

TEST_CASE("coverage probability limits") {
  CHECK(band_coverage_probability(0.0, 1.0) == doctest::Approx(0.0));
  // arc angle pi: pure Rayleigh distribution function
  CHECK(band_coverage_probability(2.447747, kPi) == doctest::Approx(0.95).epsilon(1e-6));
  for (double s : {0.5, 1.5, 2.5})
    CHECK(band_coverage_probability(s, kPi) ==
          doctest::Approx(1.0 - std::exp(-s * s / 2.0)).epsilon(1e-8));
}

TEST_CASE("coverage probability matches the polar Monte Carlo oracle") {
  const auto sups = simulate_suprema(kPi / 2.0, 1000000, 2024);
  const double mc = mc_probability(sups, 2.2);
  CHECK(std::abs(band_coverage_probability(2.2, kPi / 2.0) - mc) < 0.002);
}

TEST_CASE("critical value analytic limits and monotonicity") {
  CHECK(std::abs(critical_value(0.05, kPi) - 2.447747) < 1e-4);
  CHECK(std::abs(critical_value(0.05, 0.0) - 1.959964) < 1e-4);
  const double mid = critical_value(0.05, kPi / 2.0);
  CHECK(mid > 1.959964);
  CHECK(mid < 2.447747);

  double prev = 0.0;
  for (double ell : {0.0, 0.5, 1.0, 1.8, 2.6, kPi}) {
    const double c = critical_value(0.05, ell);
    CHECK(c >= prev);
    prev = c;
  }
}

TEST_CASE("critical value matches the Monte Carlo 95th percentile") {
  auto sups = simulate_suprema(kPi / 2.0, 1000000, 4096);
  std::nth_element(sups.begin(), sups.begin() + 950000, sups.end());
  const double q95 = sups[950000];
  CHECK(std::abs(critical_value(0.05, kPi / 2.0) - q95) < 0.01);
}

TEST_CASE("critical value approaches the marginal limit as deltas vanish") {
  const double z = 1.959963984540054;
  double prev_gap = 1.0;
  for (double delta : {1e-1, 1e-2, 1e-3}) {
    const OmegaMatrix om = omega_from(1.0, 0.2, 0.8, 0.5);
    BandRequest req;
    req.delta_lo = delta;
    req.delta_hi = delta;
    const UniformBand band =
        uniform_band(point_estimates(1.0, 0.3), om, req);
    const double gap = band.c_star - z;
    CHECK(gap >= -1e-9);
    CHECK(gap < prev_gap);
    prev_gap = gap;
  }
}

TEST_CASE("degenerate request reduces to the marginal critical value") {
  const OmegaMatrix om = omega_from(1.0, 0.1, 0.5, 0.4);
  BandRequest req;  // delta_lo = delta_hi = 0
  const UniformBand band = uniform_band(point_estimates(2.0, 0.3), om, req);
  CHECK(band.xs.size() == 1);
  CHECK(band.xs[0] == 0.0);
  CHECK(band.arc_angle == doctest::Approx(0.0));
  CHECK(band.c_star == doctest::Approx(1.959963984540054).epsilon(1e-9));
}

TEST_CASE("band geometry: grid, center, envelope dominance") {
  const OmegaMatrix om = omega_from(0.9, 0.15, 0.7, 0.45);
  const JointEstimates est = point_estimates(1.3, 0.4);
  BandRequest req;
  req.delta_lo = 0.5;
  req.delta_hi = 0.8;
  req.grid_size = 101;
  const UniformBand band = uniform_band(est, om, req);
  REQUIRE(band.xs.size() >= 101);
  CHECK(std::is_sorted(band.xs.begin(), band.xs.end()));
  CHECK(std::find(band.xs.begin(), band.xs.end(), 0.0) != band.xs.end());
  CHECK(band.xs.front() == doctest::Approx(-0.5));
  CHECK(band.xs.back() == doctest::Approx(0.8));
  CHECK(band.center.back() == doctest::Approx(extrapolate_point(est, 0.8)).epsilon(1e-14));

  BandRequest env_req = req;
  env_req.variant = BandVariant::envelope;
  const UniformBand envelope = uniform_band(est, om, env_req);
  CHECK(envelope.arc_angle == doctest::Approx(kPi));
  const double sqrt_c = std::sqrt(chi2_quantile_2df(0.95));
  CHECK(envelope.c_star == doctest::Approx(sqrt_c).epsilon(1e-12));
  for (std::size_t i = 0; i < band.xs.size(); ++i) {
    const double x = band.xs[i];
    const Eigen::Vector2d rx(1.0, x);
    const double gxx = rx.dot(om.omega_h * rx);
    // envelope half-width is exactly sqrt(c_{1-alpha}) sqrt(g(x,x))
    CHECK(envelope.hi[i] - envelope.center[i] ==
          doctest::Approx(sqrt_c * std::sqrt(gxx)).epsilon(1e-12));
    // and dominates the uniform band pointwise
    CHECK(envelope.hi[i] - envelope.lo[i] >= band.hi[i] - band.lo[i]);
    // uniform band half-width formula
    CHECK(band.hi[i] - band.center[i] ==
          doctest::Approx(band.c_star * std::sqrt(gxx)).epsilon(1e-12));
  }
}

TEST_CASE("band request validation and degenerate covariance") {
  BandRequest req;
  req.delta_lo = -0.1;
  CHECK_THROWS_AS(req.check(), SpecError);
  BandRequest bad_grid;
  bad_grid.delta_hi = 0.5;  // non-degenerate request, so the grid matters
  bad_grid.grid_size = 1;
  CHECK_THROWS_AS(bad_grid.check(), SpecError);

  OmegaMatrix zero;  // all-zero covariance
  BandRequest ok;
  ok.delta_lo = 0.2;
  ok.delta_hi = 0.2;
  CHECK_THROWS_AS(uniform_band(point_estimates(1.0, 0.0), zero, ok), InferenceError);
}
