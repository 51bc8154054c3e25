#include "rd/locpoly.hpp"

#include <cmath>

namespace rd {

double kernel_weight(KernelId kernel, double u) {
  const double a = std::abs(u);
  if (a > 1.0) return 0.0;
  switch (kernel) {
    case KernelId::triangular: return 1.0 - a;
    case KernelId::epanechnikov: return 0.75 * (1.0 - u * u);
    case KernelId::uniform: return 0.5;
  }
  return 0.0;
}

double OneSidedFit::derivative(int j) const {
  double fact = 1.0;
  for (int k = 2; k <= j; ++k) fact *= k;
  return fact * beta_scaled(j) / std::pow(bandwidth, j);
}

namespace {

Eigen::VectorXd scaled_basis(double u, int degree) {
  Eigen::VectorXd r(degree + 1);
  double v = 1.0;
  for (int j = 0; j <= degree; ++j) {
    r(j) = v;
    v *= u;
  }
  return r;
}

}  // namespace

OneSidedFit fit_one_sided(const Sample& sample, OutcomeVar outcome, Side side,
                          int degree, double bandwidth, KernelId kernel) {
  if (degree < 0) throw SpecError("bad_spec", "negative polynomial degree");
  if (!(bandwidth > 0.0)) throw SpecError("bad_spec", "bandwidth must be positive");
  if (outcome == OutcomeVar::t && !sample.treatment)
    throw SchemaError("missing_column", "treatment variable requested but absent");

  const std::size_t n = sample.size();
  const int m = degree + 1;

  OneSidedFit fit;
  fit.side = side;
  fit.degree = degree;
  fit.bandwidth = bandwidth;
  fit.weights.assign(n, 0.0);
  fit.u_scaled.assign(n, 0.0);
  fit.residuals.assign(n, 0.0);
  fit.gamma = Eigen::MatrixXd::Zero(m, m);
  fit.vartheta = Eigen::VectorXd::Zero(m);

  std::vector<std::size_t> active;
  for (std::size_t i = 0; i < n; ++i) {
    const bool on_side = (side == Side::right) == sample.treated_side(i);
    if (!on_side) continue;
    const double u = sample.centered(i) / bandwidth;
    fit.u_scaled[i] = u;
    const double k = kernel_weight(kernel, u);
    if (k <= 0.0) continue;
    fit.weights[i] = k / bandwidth;
    active.push_back(i);
  }
  fit.n_effective = static_cast<long>(active.size());
  if (active.empty())
    throw EstimationError("singular_design",
                          std::string("empty window on the ") +
                              (side == Side::right ? "treated" : "control") + " side");

  const auto& yvec = (outcome == OutcomeVar::y) ? sample.outcome : *sample.treatment;

  Eigen::MatrixXd design(active.size(), m);
  Eigen::VectorXd target(active.size());
  for (std::size_t row = 0; row < active.size(); ++row) {
    const std::size_t i = active[row];
    const double u = sample.centered(i) / bandwidth;
    const double w = fit.weights[i];
    const Eigen::VectorXd r = scaled_basis(u, degree);
    fit.gamma.noalias() += (w / n) * r * r.transpose();
    fit.vartheta.noalias() += (w / n) * std::pow(u, degree + 1) * r;
    const double sw = std::sqrt(w);
    design.row(row) = sw * r.transpose();
    target(row) = sw * yvec[i];
  }

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  if (qr.rank() < m)
    throw EstimationError("singular_design",
                          "rank-deficient local design (need " + std::to_string(m) +
                              " distinct in-window points)");
  fit.beta_scaled = qr.solve(target);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(fit.gamma);
  const double emin = es.eigenvalues().minCoeff();
  const double emax = es.eigenvalues().maxCoeff();
  if (emin <= 0.0 || emax / emin > 1e10)
    fit.warnings.push_back("ill_conditioned_gamma");

  for (std::size_t i : active) {
    const double u = sample.centered(i) / bandwidth;
    fit.residuals[i] = yvec[i] - scaled_basis(u, degree).dot(fit.beta_scaled);
  }
  return fit;
}

BiasConstants bias_constants(const OneSidedFit& fit) {
  Eigen::FullPivLU<Eigen::MatrixXd> lu(fit.gamma);
  if (!lu.isInvertible())
    throw EstimationError("singular_design", "singular Gamma in bias constants");
  Eigen::VectorXd g = lu.solve(fit.vartheta);
  return {g(0), g(1)};
}

}  // namespace rd
