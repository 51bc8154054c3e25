#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "rd/locpoly.hpp"
#include "rd/sample.hpp"

namespace rd {

// Raw and bias-corrected (tau, tau') with the four one-sided fits that
// produced them. The correction removes the leading h^{p+1} smoothing bias
// using (p+1)-th derivative pilots from the order-q fits.
struct JointEstimates {
  double tau_hat = 0.0;
  double tau_prime_hat = 0.0;
  double tau_tilde = 0.0;
  double tau_prime_tilde = 0.0;
  double mu_p1_left = 0.0;   // pilot (p+1)-th derivative, control side
  double mu_p1_right = 0.0;  // pilot (p+1)-th derivative, treated side
  OneSidedFit p_left, p_right;  // order p, bandwidth h
  OneSidedFit q_left, q_right;  // order q, bandwidth b
  std::vector<std::string> warnings;
};

// Per-observation conditional variance proxies. t/yt are populated only for
// fuzzy designs. Entries outside both bandwidth windows are zero; the
// sandwich forms never read them.
struct VarianceDiagonals {
  std::vector<double> y;
  std::vector<double> t;
  std::vector<double> yt;
};

// Joint covariance of the bias-corrected pair. v/vp/c are stated in the
// scaled parameterization (tau_tilde, h * tau_prime_tilde); omega_h is the
// natural-parameter covariance of (tau_tilde, tau_prime_tilde).
struct OmegaMatrix {
  double v = 0.0;   // Var(tau_tilde)
  double vp = 0.0;  // Var(h * tau_prime_tilde)
  double c = 0.0;   // Cov(tau_tilde, h * tau_prime_tilde)
  Eigen::Matrix2d omega = Eigen::Matrix2d::Zero();
  Eigen::Matrix2d omega_h = Eigen::Matrix2d::Zero();

  bool positive_definite() const;
  void require_positive_definite() const;  // throws InferenceError
};

// The three-term variance and four-term covariance sandwich forms for one
// side, evaluated with an arbitrary diagonal sigma (one entry per
// observation). Shared by the sharp and fuzzy assemblies.
struct SandwichForms {
  double v = 0.0;
  double vp = 0.0;
  double c = 0.0;
};

SandwichForms sandwich_side(const OneSidedFit& p_fit, const OneSidedFit& q_fit,
                            const std::vector<double>& sigma, int p);

JointEstimates estimate_sharp(const Sample& sample, const FitSpec& spec);

// Same estimator run on a selectable outcome column; the fuzzy module uses
// this for the first stage.
JointEstimates estimate_sharp(const Sample& sample, const FitSpec& spec,
                              OutcomeVar outcome);

// J-nearest-neighbor conditional variance estimates, same-side neighbors
// by |X_j - X_i|, excluding i. Fuzzy samples also get treatment variances
// and the Y-T covariance diagonal.
VarianceDiagonals nn_variance(const Sample& sample, const FitSpec& spec);

OmegaMatrix assemble_omega(const JointEstimates& estimates,
                           const VarianceDiagonals& variances, const FitSpec& spec);

struct RotBandwidths {
  double h = 0.0;
  double b = 0.0;
  std::vector<std::string> warnings;
};

// Simplified MSE plug-in: global one-sided pilot polynomials of order p+2
// give curvature and residual variance; h and b minimize the corresponding
// asymptotic MSE proxies. Degenerate pilots fall back to scale rules with a
// warning.
RotBandwidths rule_of_thumb_bandwidths(const Sample& sample, int p, KernelId kernel);

}  // namespace rd
