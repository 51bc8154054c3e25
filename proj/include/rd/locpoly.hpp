#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "rd/sample.hpp"

namespace rd {

// Kernel weight K(u): symmetric, nonnegative, supported on [-1,1].
double kernel_weight(KernelId kernel, double u);

enum class Side { left, right };
enum class OutcomeVar { y, t };

// One-sided kernel-weighted polynomial fit in the scaled basis
// r_degree((x - cutoff)/bandwidth). Level and derivatives at the cutoff are
// recovered from beta_scaled by dividing out powers of the bandwidth.
struct OneSidedFit {
  Side side = Side::right;
  int degree = 1;
  double bandwidth = 0.0;
  Eigen::VectorXd beta_scaled;   // length degree+1
  Eigen::MatrixXd gamma;         // Gamma = R^T W R / n
  Eigen::VectorXd vartheta;      // vartheta = R^T W S / n, S_i = u_i^{degree+1}
  std::vector<double> weights;   // 1{side} K(u_i)/bandwidth, per observation
  std::vector<double> u_scaled;  // (x_i - cutoff)/bandwidth, per observation
  std::vector<double> residuals; // exactly zero at zero-weight observations
  long n_effective = 0;
  std::vector<std::string> warnings;

  double level() const { return beta_scaled(0); }
  double slope() const { return beta_scaled(1) / bandwidth; }
  // j-th derivative at the cutoff: j! beta_j / bandwidth^j.
  double derivative(int j) const;
};

// Kernel-weighted least squares on one side of the cutoff, solved by a
// rank-revealing orthogonal factorization. Rank deficiency raises
// EstimationError("singular_design") rather than regularizing.
OneSidedFit fit_one_sided(const Sample& sample, OutcomeVar outcome, Side side,
                          int degree, double bandwidth, KernelId kernel);

struct BiasConstants {
  double level;  // B  = e0' Gamma^{-1} vartheta
  double slope;  // B' = e1' Gamma^{-1} vartheta
};

BiasConstants bias_constants(const OneSidedFit& fit);

}  // namespace rd
