#include "rd/inference.hpp"

#include <cmath>
#include <numbers>

namespace rd {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0))
    throw SpecError("bad_prob", "probability must lie in (0,1)");

  // Acklam's rational approximation (relative error < 1.15e-9), then one
  // Newton step through the exact erfc-based CDF.
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425;
  double x;
  if (p < plow) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - plow) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double err = normal_cdf(x) - p;
  const double pdf =
      std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  if (pdf > 0.0) x -= err / pdf;
  return x;
}

double chi2_quantile_2df(double prob) {
  if (!(prob > 0.0 && prob < 1.0))
    throw SpecError("bad_prob", "probability must lie in (0,1)");
  return -2.0 * std::log1p(-prob);
}

Interval rbc_marginal_interval(double estimate, double variance, double alpha) {
  if (!(variance > 0.0))
    throw InferenceError("degenerate_covariance", "variance must be positive");
  if (!(alpha > 0.0 && alpha < 1.0))
    throw SpecError("bad_alpha", "alpha must lie in (0,1)");
  const double half = normal_quantile(1.0 - alpha / 2.0) * std::sqrt(variance);
  return {estimate - half, estimate + half};
}

namespace {

void require_spd(const Eigen::Matrix2d& m) {
  if (!(m(0, 0) > 0.0 && m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0) > 0.0))
    throw InferenceError("degenerate_covariance",
                         "2x2 shape matrix is not positive definite");
}

}  // namespace

bool ConfidenceRegion::contains(double t, double t_prime) const {
  return wald_statistic(*this, t, t_prime) <= chi2_crit;
}

ConfidenceRegion make_region(double tau_tilde, double tau_prime_tilde,
                             const Eigen::Matrix2d& omega_h, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0))
    throw SpecError("bad_alpha", "alpha must lie in (0,1)");
  require_spd(omega_h);
  ConfidenceRegion region;
  region.center_tau = tau_tilde;
  region.center_tau_prime = tau_prime_tilde;
  region.shape = omega_h;
  region.level = 1.0 - alpha;
  region.chi2_crit = chi2_quantile_2df(1.0 - alpha);
  return region;
}

ConfidenceRegion make_region(const JointEstimates& estimates, const OmegaMatrix& omega,
                             double alpha) {
  omega.require_positive_definite();
  return make_region(estimates.tau_tilde, estimates.tau_prime_tilde, omega.omega_h, alpha);
}

double wald_statistic(const ConfidenceRegion& region, double t, double t_prime) {
  require_spd(region.shape);
  const double d0 = region.center_tau - t;
  const double d1 = region.center_tau_prime - t_prime;
  const Eigen::Matrix2d& m = region.shape;
  const double det = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
  return (m(1, 1) * d0 * d0 - 2.0 * m(0, 1) * d0 * d1 + m(0, 0) * d1 * d1) / det;
}

Eigen::Matrix2d sym_sqrt_2x2(const Eigen::Matrix2d& m) {
  require_spd(m);
  // For SPD M: sqrt(M) = (M + sqrt(det) I) / sqrt(tr + 2 sqrt(det)).
  const double s = std::sqrt(m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0));
  const double t = std::sqrt(m(0, 0) + m(1, 1) + 2.0 * s);
  return (m + s * Eigen::Matrix2d::Identity()) / t;
}

std::vector<std::pair<double, double>> region_boundary(const ConfidenceRegion& region,
                                                       int n_points) {
  if (n_points < 8) throw SpecError("bad_spec", "boundary needs at least 8 points");
  const Eigen::Matrix2d root = std::sqrt(region.chi2_crit) * sym_sqrt_2x2(region.shape);
  std::vector<std::pair<double, double>> pts;
  pts.reserve(n_points);
  for (int k = 0; k < n_points; ++k) {
    const double theta = 2.0 * std::numbers::pi * k / n_points;
    const Eigen::Vector2d z(std::cos(theta), std::sin(theta));
    const Eigen::Vector2d v = root * z;
    pts.emplace_back(region.center_tau + v(0), region.center_tau_prime + v(1));
  }
  return pts;
}

}  // namespace rd
