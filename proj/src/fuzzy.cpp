#include "rd/fuzzy.hpp"

#include <cmath>

namespace rd {

namespace {

constexpr double kWeakLevelFloor = 1e-2;
constexpr double kWeakDerivTRatio = 4.0;  // |tau_T'| must exceed 4 x its SE

double factorial(int k) {
  double f = 1.0;
  for (int j = 2; j <= k; ++j) f *= j;
  return f;
}

// Variance of the raw scaled slope jump h * tau_T_prime_hat: the first
// sandwich term only, both sides.
double raw_slope_variance_scaled(const JointEstimates& t_part,
                                 const std::vector<double>& sigma_t) {
  double total = 0.0;
  for (const OneSidedFit* fit : {&t_part.p_left, &t_part.p_right}) {
    const std::size_t n = fit->weights.size();
    Eigen::FullPivLU<Eigen::MatrixXd> lu(fit->gamma);
    if (!lu.isInvertible())
      throw EstimationError("singular_design", "singular Gamma in first-stage variance");
    const Eigen::VectorXd g1 = lu.solve(Eigen::VectorXd::Unit(fit->degree + 1, 1));
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double w = fit->weights[i];
      if (w == 0.0 || sigma_t[i] == 0.0) continue;
      Eigen::VectorXd r(fit->degree + 1);
      double v = 1.0;
      for (int j = 0; j <= fit->degree; ++j) {
        r(j) = v;
        v *= fit->u_scaled[i];
      }
      const double a1 = w * g1.dot(r);
      acc += a1 * a1 * sigma_t[i];
    }
    total += acc / (static_cast<double>(n) * static_cast<double>(n));
  }
  return total;
}

struct RatioWeights {
  double a;  // 1 / denominator
  double b;  // -numerator / denominator^2
};

}  // namespace

double FuzzyEstimates::tau_prime() const {
  if (!tau_prime_frd)
    throw EstimationError("weak_first_stage_derivative",
                          "first-stage slope jump is too small relative to its "
                          "standard error");
  return *tau_prime_frd;
}

FuzzyEstimates estimate_fuzzy(const Sample& sample, const FitSpec& spec) {
  if (!sample.treatment)
    throw SchemaError("missing_column", "fuzzy estimation requires a treatment column");

  FuzzyEstimates fz;
  fz.y_part = estimate_sharp(sample, spec, OutcomeVar::y);
  fz.t_part = estimate_sharp(sample, spec, OutcomeVar::t);
  fz.tau_t_hat = fz.t_part.tau_hat;
  fz.tau_t_prime_hat = fz.t_part.tau_prime_hat;

  if (std::abs(fz.tau_t_hat) < kWeakLevelFloor)
    throw EstimationError("weak_first_stage_level",
                          "first-stage jump below the identification floor");

  const BiasConstants bl = bias_constants(fz.y_part.p_left);
  const BiasConstants br = bias_constants(fz.y_part.p_right);
  const double fact = factorial(spec.p + 1);

  // Level ratio with delta-method bias correction evaluated at the raw
  // estimates.
  {
    const double a = 1.0 / fz.tau_t_hat;
    const double b = -fz.y_part.tau_hat / (fz.tau_t_hat * fz.tau_t_hat);
    const double plus = (a * fz.y_part.mu_p1_right + b * fz.t_part.mu_p1_right) / fact;
    const double minus = (a * fz.y_part.mu_p1_left + b * fz.t_part.mu_p1_left) / fact;
    fz.tau_frd = fz.y_part.tau_hat / fz.tau_t_hat -
                 std::pow(spec.h, spec.p + 1) * (plus * br.level - minus * bl.level);
  }

  // Derivative ratio, guarded by a first-stage t-ratio rule.
  const FitSpec nn_spec = spec;
  const VarianceDiagonals t_var = nn_variance(sample, nn_spec);
  fz.t_prime_se =
      std::sqrt(std::max(raw_slope_variance_scaled(fz.t_part, t_var.t), 0.0)) / spec.h;
  // The absolute floor catches exactly-deterministic first stages, where
  // both the slope jump and its estimated SE vanish to rounding error.
  const double floor = 1e-10 * (1.0 + std::abs(fz.tau_t_hat));
  if (std::abs(fz.tau_t_prime_hat) <= kWeakDerivTRatio * fz.t_prime_se + floor) {
    fz.warnings.push_back("weak_first_stage_derivative");
  } else {
    const double a = 1.0 / fz.tau_t_prime_hat;
    const double b =
        -fz.y_part.tau_prime_hat / (fz.tau_t_prime_hat * fz.tau_t_prime_hat);
    const double plus = (a * fz.y_part.mu_p1_right + b * fz.t_part.mu_p1_right) / fact;
    const double minus = (a * fz.y_part.mu_p1_left + b * fz.t_part.mu_p1_left) / fact;
    fz.tau_prime_frd = fz.y_part.tau_prime_hat / fz.tau_t_prime_hat -
                       std::pow(spec.h, spec.p) * (plus * br.slope - minus * bl.slope);
  }
  return fz;
}

namespace {

// The fuzzy sandwich reuses the sharp forms; the Y and T fits share designs,
// so the forms depend on the fit geometry once per sigma diagonal.
struct FuzzyForms {
  SandwichForms y, t, yt;
};

FuzzyForms all_forms(const FuzzyEstimates& fz, const VarianceDiagonals& variances,
                     const FitSpec& spec) {
  if (variances.t.empty() || variances.yt.empty())
    throw SchemaError("missing_column",
                      "fuzzy covariance needs treatment variance diagonals");
  auto total = [&](const std::vector<double>& sigma) {
    SandwichForms right = sandwich_side(fz.y_part.p_right, fz.y_part.q_right, sigma, spec.p);
    SandwichForms left = sandwich_side(fz.y_part.p_left, fz.y_part.q_left, sigma, spec.p);
    return SandwichForms{right.v + left.v, right.vp + left.vp, right.c + left.c};
  };
  return {total(variances.y), total(variances.t), total(variances.yt)};
}

}  // namespace

double fuzzy_level_variance(const FuzzyEstimates& fz, const VarianceDiagonals& variances,
                            const FitSpec& spec) {
  const FuzzyForms f = all_forms(fz, variances, spec);
  const double a = 1.0 / fz.tau_t_hat;
  const double b = -fz.y_part.tau_hat / (fz.tau_t_hat * fz.tau_t_hat);
  return a * a * f.y.v + 2.0 * a * b * f.yt.v + b * b * f.t.v;
}

OmegaMatrix assemble_omega_fuzzy(const FuzzyEstimates& fz,
                                 const VarianceDiagonals& variances,
                                 const FitSpec& spec) {
  if (!fz.tau_prime_frd)
    throw EstimationError("weak_first_stage_derivative",
                          "fuzzy joint covariance requires a non-weak derivative "
                          "first stage");
  const FuzzyForms f = all_forms(fz, variances, spec);
  const double a = 1.0 / fz.tau_t_hat;
  const double b = -fz.y_part.tau_hat / (fz.tau_t_hat * fz.tau_t_hat);
  const double ap = 1.0 / fz.tau_t_prime_hat;
  const double bp =
      -fz.y_part.tau_prime_hat / (fz.tau_t_prime_hat * fz.tau_t_prime_hat);

  OmegaMatrix om;
  om.v = a * a * f.y.v + 2.0 * a * b * f.yt.v + b * b * f.t.v;
  om.vp = ap * ap * f.y.vp + 2.0 * ap * bp * f.yt.vp + bp * bp * f.t.vp;
  om.c = a * ap * f.y.c + (a * bp + b * ap) * f.yt.c + b * bp * f.t.c;
  om.omega << om.v, om.c, om.c, om.vp;
  const Eigen::Matrix2d scale = Eigen::DiagonalMatrix<double, 2>(1.0, 1.0 / spec.h);
  om.omega_h = scale * om.omega * scale;
  return om;
}

}  // namespace rd
