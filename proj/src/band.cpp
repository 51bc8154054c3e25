#include "rd/band.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "rd/quadrature.hpp"

namespace rd {

void BandRequest::check() const {
  if (!(delta_lo >= 0.0) || !(delta_hi >= 0.0))
    throw SpecError("bad_spec", "delta_lo and delta_hi must be nonnegative");
  if (grid_size < 2 && !(delta_lo == 0.0 && delta_hi == 0.0))
    throw SpecError("bad_spec", "grid_size must be >= 2");
  if (!(alpha > 0.0 && alpha < 1.0))
    throw SpecError("bad_alpha", "alpha must lie in (0,1)");
}

double extrapolate_point(const JointEstimates& estimates, double x) {
  return estimates.tau_tilde + estimates.tau_prime_tilde * x;
}

namespace {

double gram(const Eigen::Matrix2d& m, double x, double y) {
  return m(0, 0) + m(0, 1) * y + m(1, 0) * x + m(1, 1) * x * y;
}

void require_spd(const Eigen::Matrix2d& m) {
  if (!(m(0, 0) > 0.0 && m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0) > 0.0))
    throw InferenceError("degenerate_covariance",
                         "Omega_h is not positive definite");
}

}  // namespace

double direction_angle(const Eigen::Matrix2d& omega_h, double delta_lo,
                       double delta_hi) {
  require_spd(omega_h);
  if (!(delta_lo >= 0.0) || !(delta_hi >= 0.0))
    throw SpecError("bad_spec", "deltas must be nonnegative");
  const double num = gram(omega_h, -delta_lo, delta_hi);
  const double den = std::sqrt(gram(omega_h, -delta_lo, -delta_lo) *
                               gram(omega_h, delta_hi, delta_hi));
  const double cosine = std::clamp(num / den, -1.0, 1.0);
  return std::acos(cosine);
}

double band_coverage_probability(double s, double arc_angle) {
  if (!(s >= 0.0)) throw SpecError("bad_spec", "s must be nonnegative");
  if (!(arc_angle >= 0.0 && arc_angle <= std::numbers::pi))
    throw SpecError("bad_spec", "arc angle must lie in [0, pi]");
  if (s == 0.0) return 0.0;
  const double pi = std::numbers::pi;
  const double rayleigh = 1.0 - std::exp(-0.5 * s * s);
  const double upper = pi / 2.0 - arc_angle / 2.0;
  const double integral = adaptive_simpson(
      [s](double u) {
        const double c = std::cos(u);
        if (c <= 0.0) return 1.0;  // integrand limit at u -> pi/2
        return 1.0 - std::exp(-0.5 * s * s / (c * c));
      },
      0.0, upper, 1e-10);
  return (arc_angle / pi) * rayleigh + (2.0 / pi) * integral;
}

double critical_value(double alpha, double arc_angle) {
  if (!(alpha > 0.0 && alpha < 1.0))
    throw SpecError("bad_alpha", "alpha must lie in (0,1)");
  const double target = 1.0 - alpha;
  // Analytic limits bracket the root: ell -> 0 gives |N(0,1)|, ell = pi the
  // Rayleigh; P at fixed s is nonincreasing in ell.
  double lo = normal_quantile(1.0 - alpha / 2.0);
  double hi = std::sqrt(chi2_quantile_2df(1.0 - alpha));
  if (band_coverage_probability(lo, arc_angle) >= target) return lo;
  if (band_coverage_probability(hi, arc_angle) <= target) return hi;
  while (hi - lo > 1e-8) {
    const double mid = 0.5 * (lo + hi);
    if (band_coverage_probability(mid, arc_angle) < target)
      lo = mid;
    else
      hi = mid;
  }
  // two secant refinements inside the converged bracket
  double s0 = lo, s1 = hi;
  double f0 = band_coverage_probability(s0, arc_angle) - target;
  double f1 = band_coverage_probability(s1, arc_angle) - target;
  for (int it = 0; it < 2 && f1 != f0; ++it) {
    const double s2 = s1 - f1 * (s1 - s0) / (f1 - f0);
    if (!std::isfinite(s2)) break;
    s0 = s1;
    f0 = f1;
    s1 = s2;
    f1 = band_coverage_probability(s1, arc_angle) - target;
  }
  return s1;
}

namespace {

std::vector<double> band_grid(const BandRequest& req) {
  if (req.delta_lo == 0.0 && req.delta_hi == 0.0) return {0.0};
  std::vector<double> xs;
  xs.reserve(req.grid_size + 1);
  const double lo = -req.delta_lo, hi = req.delta_hi;
  for (int k = 0; k < req.grid_size; ++k)
    xs.push_back(lo + (hi - lo) * k / (req.grid_size - 1));
  xs.push_back(0.0);  // force the cutoff onto the grid
  std::sort(xs.begin(), xs.end());
  xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
  return xs;
}

}  // namespace

UniformBand uniform_band(double tau_tilde, double tau_prime_tilde,
                         const OmegaMatrix& omega, const BandRequest& request) {
  request.check();
  omega.require_positive_definite();
  const Eigen::Matrix2d& oh = omega.omega_h;

  UniformBand band;
  if (request.variant == BandVariant::envelope) {
    band.arc_angle = std::numbers::pi;
    band.c_star = std::sqrt(chi2_quantile_2df(1.0 - request.alpha));
  } else if (request.delta_lo == 0.0 && request.delta_hi == 0.0) {
    // degenerate interval: the band collapses to the marginal RBC interval
    band.arc_angle = 0.0;
    band.c_star = normal_quantile(1.0 - request.alpha / 2.0);
  } else {
    band.arc_angle = direction_angle(oh, request.delta_lo, request.delta_hi);
    band.c_star = critical_value(request.alpha, band.arc_angle);
  }

  band.xs = band_grid(request);
  band.center.reserve(band.xs.size());
  band.lo.reserve(band.xs.size());
  band.hi.reserve(band.xs.size());
  for (double x : band.xs) {
    const double mid = tau_tilde + tau_prime_tilde * x;
    const double half = band.c_star * std::sqrt(gram(oh, x, x));
    band.center.push_back(mid);
    band.lo.push_back(mid - half);
    band.hi.push_back(mid + half);
  }
  return band;
}

UniformBand uniform_band(const JointEstimates& estimates, const OmegaMatrix& omega,
                         const BandRequest& request) {
  return uniform_band(estimates.tau_tilde, estimates.tau_prime_tilde, omega, request);
}

}  // namespace rd
