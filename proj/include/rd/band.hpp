#pragma once

#include <Eigen/Dense>
#include <vector>

#include "rd/inference.hpp"
#include "rd/sharp.hpp"

namespace rd {

enum class BandVariant { uniform, envelope };

struct BandRequest {
  double delta_lo = 0.0;  // extrapolation reaches down to -delta_lo
  double delta_hi = 0.0;  // and up to +delta_hi
  int grid_size = 101;
  double alpha = 0.05;
  BandVariant variant = BandVariant::uniform;

  void check() const;  // throws SpecError
};

// Grid of extrapolated effects with simultaneous limits. The half-width at x
// is c_star * sqrt((1,x) Omega_h (1,x)').
struct UniformBand {
  std::vector<double> xs;
  std::vector<double> center;
  std::vector<double> lo;
  std::vector<double> hi;
  double c_star = 0.0;
  double arc_angle = 0.0;  // ell in [0, pi]; pi for the envelope variant
};

// tau_tilde + tau_prime_tilde * x.
double extrapolate_point(const JointEstimates& estimates, double x);

// Smallest angle between the standardized directions at the extrapolation
// endpoints, computed from the Gram form g(x,y) = (1,x) Omega_h (1,y)'.
double direction_angle(const Eigen::Matrix2d& omega_h, double delta_lo, double delta_hi);

// P(s): distribution function of the supremum of the standardized
// extrapolation process; mixture of a Rayleigh mass on the arc and a
// cosine-projected Rayleigh off it.
double band_coverage_probability(double s, double arc_angle);

// Root of P(s) = 1 - alpha, bracketed by the normal and Rayleigh limits.
double critical_value(double alpha, double arc_angle);

UniformBand uniform_band(double tau_tilde, double tau_prime_tilde,
                         const OmegaMatrix& omega, const BandRequest& request);
UniformBand uniform_band(const JointEstimates& estimates, const OmegaMatrix& omega,
                         const BandRequest& request);

}  // namespace rd
