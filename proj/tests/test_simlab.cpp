#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <array>
#include <cmath>
#include <set>
#include <sstream>

#include "rd/philox.hpp"
#include "rd/simlab.hpp"

using namespace rd;

namespace {

DgpSpec benchmark_dgp() {
  DgpSpec dgp;
  dgp.mu_left = {0.0, 0.5, 0.25, -0.1};
  dgp.mu_right = {1.0, 0.8, 0.45, 0.05};
  dgp.noise_sd_left = 0.5;
  dgp.noise_sd_right = 0.5;
  dgp.seed = 20260826;
  return dgp;
}

}  // namespace

TEST_CASE("polynomial evaluation") {
  CHECK(eval_poly({1.0, 2.0, 3.0}, 0.5) == doctest::Approx(1.0 + 1.0 + 0.75));
  CHECK(eval_poly({4.0}, 100.0) == 4.0);
}

TEST_CASE("noiseless samples sit exactly on the polynomials") {
  DgpSpec dgp;
  dgp.mu_left = {0.0, 0.0, 1.0};   // x^2
  dgp.mu_right = {2.0, 1.0, 3.0};  // 2 + x + 3x^2
  dgp.noise_sd_left = 0.0;
  dgp.noise_sd_right = 0.0;
  dgp.seed = 1;
  const Sample s = generate_dgp(dgp, 500, 0);
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double x = s.running[i];
    const double mu = eval_poly(x >= 0.0 ? dgp.mu_right : dgp.mu_left, x);
    CHECK(s.outcome[i] == mu);
  }
}

TEST_CASE("identical inputs give bit-identical samples") {
  const DgpSpec dgp = benchmark_dgp();
  const Sample a = generate_dgp(dgp, 1000, 17);
  const Sample b = generate_dgp(dgp, 1000, 17);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a.running[i] == b.running[i]);
    CHECK(a.outcome[i] == b.outcome[i]);
  }
  const Sample c = generate_dgp(dgp, 1000, 18);
  bool all_equal = true;
  for (std::size_t i = 0; i < a.size(); ++i)
    all_equal = all_equal && a.running[i] == c.running[i];
  CHECK_FALSE(all_equal);
}

TEST_CASE("uniform running variable has near-zero mean at n = 1e6") {
  DgpSpec dgp = benchmark_dgp();
  const Sample s = generate_dgp(dgp, 1000000, 3);
  double mean = 0.0;
  for (double x : s.running) mean += x;
  mean /= static_cast<double>(s.size());
  CHECK(std::abs(mean) < 0.003);
}

TEST_CASE("truncated normal draws stay in support and straddle the cutoff") {
  DgpSpec dgp = benchmark_dgp();
  dgp.x_dist.kind = XDist::Kind::truncnormal;
  dgp.x_dist.mean = 0.2;
  dgp.x_dist.sd = 0.6;
  dgp.x_dist.lo = -1.0;
  dgp.x_dist.hi = 1.0;
  const Sample s = generate_dgp(dgp, 20000, 5);
  int left = 0, right = 0;
  for (double x : s.running) {
    CHECK(x >= -1.0);
    CHECK(x <= 1.0);
    (x < 0.0 ? left : right)++;
  }
  CHECK(left > 1000);
  CHECK(right > 1000);
}

TEST_CASE("fuzzy spec draws a valid treatment column") {
  DgpSpec dgp = benchmark_dgp();
  dgp.fuzzy_left = {0.2};
  dgp.fuzzy_right = {0.8, 0.1};
  const Sample s = generate_dgp(dgp, 5000, 2);
  REQUIRE(s.treatment.has_value());
  double left_rate = 0.0, right_rate = 0.0;
  int nl = 0, nr = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s.running[i] < 0.0) {
      left_rate += (*s.treatment)[i];
      ++nl;
    } else {
      right_rate += (*s.treatment)[i];
      ++nr;
    }
  }
  CHECK(left_rate / nl == doctest::Approx(0.2).epsilon(0.15));
  CHECK(right_rate / nr == doctest::Approx(0.8 + 0.1 * 0.5).epsilon(0.15));
}

TEST_CASE("invalid fuzzy probabilities are rejected") {
  DgpSpec dgp = benchmark_dgp();
  dgp.fuzzy_left = {0.2};
  dgp.fuzzy_right = {0.8, 0.9};  // exceeds 1 inside the support
  try {
    generate_dgp(dgp, 100, 0);
    FAIL("expected SpecError");
  } catch (const SpecError& e) {
    CHECK(e.code() == "bad_dgp");
  }
}

TEST_CASE("negative noise sd is rejected") {
  DgpSpec dgp = benchmark_dgp();
  dgp.noise_sd_left = -0.5;
  CHECK_THROWS_AS(generate_dgp(dgp, 100, 0), SpecError);
}

TEST_CASE("replication streams pass a basic collision check") {
  std::set<std::array<double, 4>> seen;
  for (std::uint64_t rep = 0; rep < 10000; ++rep) {
    const Philox gen(123456789, rep);
    const std::array<double, 4> head = {gen.uniform(0), gen.uniform(1),
                                        gen.uniform(2), gen.uniform(3)};
    CHECK(seen.insert(head).second);
  }
}

TEST_CASE("philox deviates are uniform-ish and order independent") {
  const Philox gen(42, 7);
  CHECK(gen.uniform(123) == gen.uniform(123));
  double mean = 0.0;
  for (int k = 0; k < 20000; ++k) {
    const double u = gen.uniform(k);
    CHECK(u > 0.0);
    CHECK(u < 1.0);
    mean += u;
  }
  CHECK(std::abs(mean / 20000 - 0.5) < 0.01);
}

TEST_CASE("reps = 0 yields an empty report") {
  const CoverageReport report =
      coverage_experiment(benchmark_dgp(), FitSpec{}, 100, 0, Targets{});
  CHECK(report.reps == 0);
  CHECK(report.valid_reps == 0);
  CHECK(report.rate_region == 0.0);
  CHECK(report.rate_marginal == 0.0);
  CHECK(report.failures.empty());
}

TEST_CASE("coverage at alpha = 0.5 is near one half") {
  DgpSpec dgp = benchmark_dgp();
  FitSpec spec;  // h = 0: rule-of-thumb per replication
  spec.alpha = 0.5;
  Targets targets;
  targets.band.reset();
  const CoverageReport report = coverage_experiment(dgp, spec, 500, 600, targets, 4);
  CHECK(report.valid_reps == 600);
  CHECK(report.rate_region > 0.42);
  CHECK(report.rate_region < 0.58);
  CHECK(report.mean_region_area > 0.0);
}

TEST_CASE("report is identical for any jobs value") {
  DgpSpec dgp = benchmark_dgp();
  // Exact linear treatment effect for the band target.
  dgp.mu_left = {0.0, 0.5, 0.45, 0.05};
  FitSpec spec;
  Targets targets;
  BandRequest band;
  band.delta_lo = 0.5;
  band.delta_hi = 0.5;
  targets.band = band;
  const CoverageReport r1 = coverage_experiment(dgp, spec, 300, 60, targets, 1);
  const CoverageReport r8 = coverage_experiment(dgp, spec, 300, 60, targets, 8);
  CHECK(r1.hits_region == r8.hits_region);
  CHECK(r1.hits_band == r8.hits_band);
  CHECK(r1.hits_marginal == r8.hits_marginal);
  CHECK(r1.mean_region_area == r8.mean_region_area);
  CHECK(r1.mean_band_width == r8.mean_band_width);
  CHECK(r1.valid_reps == r8.valid_reps);
  CHECK(r1.nesting_violations == 0);
}

TEST_CASE("config parser round trip and rejection paths") {
  std::istringstream good(
      "# benchmark\n"
      "mu_left = 0 0.5 0.25 -0.1\n"
      "mu_right = 1 0.8 0.45 0.05\n"
      "noise_sd_left = 0.5\n"
      "noise_sd_right = 0.5\n"
      "x_dist = uniform -1 1\n"
      "seed = 99\n"
      "n = 400\n"
      "reps = 20\n"
      "alpha = 0.05\n"
      "delta_lo = 0.5\n"
      "delta_hi = 0.5\n"
      "targets = region band marginal\n");
  const ExperimentConfig cfg = parse_experiment_config(good);
  CHECK(cfg.n == 400);
  CHECK(cfg.reps == 20);
  CHECK(cfg.dgp.seed == 99);
  CHECK(cfg.dgp.mu_right[2] == 0.45);
  REQUIRE(cfg.targets.band.has_value());
  CHECK(cfg.targets.band->delta_lo == 0.5);
  CHECK(cfg.targets.region);

  std::istringstream bad_key("mu_left = 0\nmu_right = 1\nn = 10\nwat = 3\n");
  CHECK_THROWS_AS(parse_experiment_config(bad_key), SpecError);

  std::istringstream bad_sd(
      "mu_left = 0\nmu_right = 1\nnoise_sd_left = -1\nn = 10\n");
  try {
    parse_experiment_config(bad_sd);
    FAIL("expected SpecError");
  } catch (const SpecError& e) {
    CHECK(e.code() == "bad_dgp");
  }
}
