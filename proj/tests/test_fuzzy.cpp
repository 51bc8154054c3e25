#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "oracle_helpers.hpp"
#include "rd/fuzzy.hpp"
#include "rd/inference.hpp"

using namespace rd;

namespace {

FitSpec basic_spec(double h, double b) {
  FitSpec spec;
  spec.h = h;
  spec.b = b;
  return spec;
}

// Replicated design points with exact treatment-probability means: at each
// x, `reps` observations carry T = 1 in exact proportion p(x), so the local
// fits of T recover the conditional mean polynomial without error.
Sample replicated_fuzzy_sample(int reps) {
  Sample s;
  s.treatment.emplace();
  auto add_block = [&](double x, double y, double p) {
    const int ones = static_cast<int>(std::lround(p * reps));
    for (int k = 0; k < reps; ++k) {
      s.running.push_back(x);
      s.outcome.push_back(y);
      s.treatment->push_back(k < ones ? 1.0 : 0.0);
    }
  };
  // Left: Y = 0, P(T=1) = 0.2 (flat). Right: Y = 1 + 0.25x,
  // P(T=1) = 0.7 + 0.5x. Jumps: tau_Y = 1, tau_Y' = 0.25,
  // tau_T = 0.5, tau_T' = 0.5.
  for (double x : {-0.8, -0.6, -0.4, -0.2}) add_block(x, 0.0, 0.2);
  for (double x : {0.0, 0.2, 0.4, 0.6}) add_block(x, 1.0 + 0.25 * x, 0.7 + 0.5 * x);
  return s;
}

Sample sharp_compliance_sample(unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> ux(-1.0, 1.0);
  std::normal_distribution<double> noise(0.0, 0.5);
  Sample s;
  s.treatment.emplace();
  for (int i = 0; i < 400; ++i) {
    const double x = ux(rng);
    s.running.push_back(x);
    s.outcome.push_back((x >= 0.0 ? 1.0 + 0.8 * x : 0.5 * x) + noise(rng));
    s.treatment->push_back(x >= 0.0 ? 1.0 : 0.0);
  }
  return s;
}

}  // namespace

TEST_CASE("sharp compliance reduces the fuzzy level to the sharp estimate") {
  const Sample s = sharp_compliance_sample(11);
  const FitSpec spec = basic_spec(0.7, 0.9);
  const FuzzyEstimates fz = estimate_fuzzy(s, spec);
  const JointEstimates sharp = estimate_sharp(s, spec);

  CHECK(fz.tau_t_hat == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(fz.tau_t_prime_hat == doctest::Approx(0.0));
  CHECK(fz.tau_frd == doctest::Approx(sharp.tau_tilde).epsilon(1e-10));
  CHECK_FALSE(fz.tau_prime_frd.has_value());
  try {
    fz.tau_prime();
    FAIL("expected EstimationError");
  } catch (const EstimationError& e) {
    CHECK(e.code() == "weak_first_stage_derivative");
  }

  // Variance reduction: with a deterministic first stage the fuzzy level
  // variance equals the sharp one divided by tau_T^2 = 1.
  const VarianceDiagonals v = nn_variance(s, spec);
  const OmegaMatrix sharp_omega = assemble_omega(sharp, v, spec);
  CHECK(fuzzy_level_variance(fz, v, spec) ==
        doctest::Approx(sharp_omega.v).epsilon(1e-10));
}

TEST_CASE("noiseless ratio example: tau_frd = 2, tau'_frd = 0.5") {
  const Sample s = replicated_fuzzy_sample(1000);
  const FitSpec spec = basic_spec(1.0, 1.0);
  const FuzzyEstimates fz = estimate_fuzzy(s, spec);
  CHECK(fz.tau_t_hat == doctest::Approx(0.5).epsilon(1e-10));
  CHECK(fz.tau_t_prime_hat == doctest::Approx(0.5).epsilon(1e-10));
  CHECK(fz.tau_frd == doctest::Approx(2.0).epsilon(1e-10));
  REQUIRE(fz.tau_prime_frd.has_value());
  CHECK(fz.tau_prime() == doctest::Approx(0.5).epsilon(1e-10));
}

TEST_CASE("treatment column absent is a schema error") {
  Sample s;
  for (int i = 0; i < 40; ++i) {
    s.running.push_back(-1.0 + (2.0 * i + 1.0) / 40.0);
    s.outcome.push_back(s.running.back());
  }
  CHECK_THROWS_AS(estimate_fuzzy(s, basic_spec(1.0, 1.0)), SchemaError);
}

TEST_CASE("weak first-stage level throws") {
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> ux(-1.0, 1.0);
  std::bernoulli_distribution coin(0.5);
  Sample s;
  s.treatment.emplace();
  for (int i = 0; i < 400; ++i) {
    const double x = ux(rng);
    s.running.push_back(x);
    s.outcome.push_back(x);
    s.treatment->push_back(coin(rng) ? 1.0 : 0.0);  // no jump at the cutoff
  }
  bool weak_or_small = false;
  try {
    const FuzzyEstimates fz = estimate_fuzzy(s, basic_spec(0.8, 0.9));
    weak_or_small = std::abs(fz.tau_t_hat) >= 1e-2;  // happened to clear floor
  } catch (const EstimationError& e) {
    weak_or_small = e.code() == "weak_first_stage_level";
  }
  CHECK(weak_or_small);
}

TEST_CASE("deterministic first stage: covariance collapses to scaled sharp forms") {
  const Sample s = replicated_fuzzy_sample(1000);
  const FitSpec spec = basic_spec(1.0, 1.0);
  const FuzzyEstimates fz = estimate_fuzzy(s, spec);

  // Plug sigma_T = sigma_YT = 0: all T-terms vanish from the displays, so
  // V_FRD = V_SRD(Y)/tau_T^2 and C_FRD = C_SRD(Y)/(tau_T tau_T').
  const std::size_t n = s.size();
  VarianceDiagonals v;
  v.y.assign(n, 0.0);
  v.t.assign(n, 0.0);
  v.yt.assign(n, 0.0);
  std::mt19937 rng(21);
  std::uniform_real_distribution<double> us(0.3, 1.7);
  for (double& value : v.y) value = us(rng);

  const OmegaMatrix sharp_omega = assemble_omega(fz.y_part, v, spec);
  const OmegaMatrix fuzzy_omega = assemble_omega_fuzzy(fz, v, spec);
  const double tt = fz.tau_t_hat, ttp = fz.tau_t_prime_hat;
  CHECK(fuzzy_omega.v == doctest::Approx(sharp_omega.v / (tt * tt)).epsilon(1e-12));
  CHECK(fuzzy_omega.vp == doctest::Approx(sharp_omega.vp / (ttp * ttp)).epsilon(1e-12));
  CHECK(fuzzy_omega.c == doctest::Approx(sharp_omega.c / (tt * ttp)).epsilon(1e-12));
  CHECK(fuzzy_level_variance(fz, v, spec) ==
        doctest::Approx(fuzzy_omega.v).epsilon(1e-12));

  // structural: symmetry and positive semidefiniteness
  CHECK(fuzzy_omega.omega(0, 1) == fuzzy_omega.omega(1, 0));
  CHECK(fuzzy_omega.omega.determinant() >= -1e-12);
  CHECK(fuzzy_omega.omega(0, 0) >= 0.0);
}

TEST_CASE("stacked influence oracle over (Y, T) with plugged diagonal blocks") {
  // The Y and T fits share designs, so the stacked influence vector of the
  // linearized level is (a psi0, b psi0) over (Y, T), and similarly for the
  // scaled derivative with (a', b', psi1). Evaluate the quadratic and
  // bilinear forms directly against plugged diagonal sigma blocks.
  const Sample s = replicated_fuzzy_sample(10);  // n = 80
  const FitSpec spec = basic_spec(1.0, 1.0);
  FuzzyEstimates fz = estimate_fuzzy(s, spec);
  // At n = 80 the derivative first stage is statistically weak; fill in the
  // raw ratio so the covariance assembly itself is still exercised.
  if (!fz.tau_prime_frd)
    fz.tau_prime_frd = fz.y_part.tau_prime_hat / fz.tau_t_prime_hat;

  const std::size_t n = s.size();
  std::mt19937 rng(31337);
  std::uniform_real_distribution<double> us(0.2, 1.5);
  VarianceDiagonals v;
  v.y.resize(n);
  v.t.resize(n);
  v.yt.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    v.y[i] = us(rng);
    v.t[i] = us(rng);
    v.yt[i] = 0.5 * std::sqrt(v.y[i] * v.t[i]) * (i % 2 == 0 ? 1.0 : -1.0);
  }

  const rd::testing::InfluenceVectors psi =
      rd::testing::influence_oracle(fz.y_part, spec);
  const double a = 1.0 / fz.tau_t_hat;
  const double b = -fz.y_part.tau_hat / (fz.tau_t_hat * fz.tau_t_hat);
  const double ap = 1.0 / fz.tau_t_prime_hat;
  const double bp = -fz.y_part.tau_prime_hat / (fz.tau_t_prime_hat * fz.tau_t_prime_hat);

  using rd::testing::quad_form;
  auto combined = [&](const std::vector<double>& pa, double wa1, double wa2,
                      const std::vector<double>& pb, double wb1, double wb2) {
    // Cov(wa1 pa'Y + wa2 pa'T, wb1 pb'Y + wb2 pb'T) with diagonal blocks.
    return wa1 * wb1 * quad_form(pa, v.y, pb) + wa2 * wb2 * quad_form(pa, v.t, pb) +
           (wa1 * wb2 + wa2 * wb1) * quad_form(pa, v.yt, pb);
  };

  const OmegaMatrix omega = assemble_omega_fuzzy(fz, v, spec);
  CHECK(omega.v ==
        doctest::Approx(combined(psi.psi0, a, b, psi.psi0, a, b)).epsilon(1e-10));
  CHECK(omega.vp ==
        doctest::Approx(combined(psi.psi1, ap, bp, psi.psi1, ap, bp)).epsilon(1e-10));
  CHECK(omega.c ==
        doctest::Approx(combined(psi.psi0, a, b, psi.psi1, ap, bp)).epsilon(1e-10));
}
