#pragma once

#include <optional>
#include <string>
#include <vector>

#include "rd/sharp.hpp"

namespace rd {

// Ratio estimands for fuzzy designs: outcome jumps over first-stage jumps,
// bias-corrected by the delta-method expansion around the raw first stage.
struct FuzzyEstimates {
  JointEstimates y_part;  // outcome fits
  JointEstimates t_part;  // treatment (first-stage) fits
  double tau_frd = 0.0;
  std::optional<double> tau_prime_frd;  // absent when the derivative first
                                        // stage is weak
  double tau_t_hat = 0.0;        // raw first-stage jump
  double tau_t_prime_hat = 0.0;  // raw first-stage slope jump
  double t_prime_se = 0.0;       // SE of the raw slope jump (threshold scale)
  std::vector<std::string> warnings;

  // Throws EstimationError("weak_first_stage_derivative") when absent.
  double tau_prime() const;
};

FuzzyEstimates estimate_fuzzy(const Sample& sample, const FitSpec& spec);

// Variance of the linearized level ratio; available even when the
// derivative first stage is weak.
double fuzzy_level_variance(const FuzzyEstimates& fz, const VarianceDiagonals& variances,
                            const FitSpec& spec);

// Full 2x2 joint covariance of the bias-corrected fuzzy pair; requires a
// non-weak first stage in both level and derivative.
OmegaMatrix assemble_omega_fuzzy(const FuzzyEstimates& fz,
                                 const VarianceDiagonals& variances,
                                 const FitSpec& spec);

}  // namespace rd
