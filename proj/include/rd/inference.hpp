#pragma once

#include <Eigen/Dense>
#include <utility>
#include <vector>

#include "rd/sharp.hpp"

namespace rd {

// Standard normal quantile, rational approximation plus one Newton-type
// refinement through erfc; absolute error well below 1e-9.
double normal_quantile(double p);
double normal_cdf(double x);

// Closed-form chi-square(2df) quantile: -2 ln(1 - prob).
double chi2_quantile_2df(double prob);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  bool contains(double v) const { return lo <= v && v <= hi; }
};

// estimate +/- Psi^{-1}(1 - alpha/2) sqrt(variance).
Interval rbc_marginal_interval(double estimate, double variance, double alpha);

// Chi-square ellipse for the bias-corrected pair.
struct ConfidenceRegion {
  double center_tau = 0.0;
  double center_tau_prime = 0.0;
  Eigen::Matrix2d shape = Eigen::Matrix2d::Identity();  // Omega_h
  double level = 0.95;
  double chi2_crit = 0.0;

  bool contains(double t, double t_prime) const;
};

ConfidenceRegion make_region(double tau_tilde, double tau_prime_tilde,
                             const Eigen::Matrix2d& omega_h, double alpha);
ConfidenceRegion make_region(const JointEstimates& estimates, const OmegaMatrix& omega,
                             double alpha);

double wald_statistic(const ConfidenceRegion& region, double t, double t_prime);

// Boundary points center + sqrt(chi2_crit) Omega_h^{1/2} (cos, sin) at
// equally spaced angles, counterclockwise from angle zero.
std::vector<std::pair<double, double>> region_boundary(const ConfidenceRegion& region,
                                                       int n_points);

// Closed-form symmetric square root of a 2x2 SPD matrix.
Eigen::Matrix2d sym_sqrt_2x2(const Eigen::Matrix2d& m);

}  // namespace rd
