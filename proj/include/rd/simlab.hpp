#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rd/band.hpp"
#include "rd/fuzzy.hpp"
#include "rd/inference.hpp"
#include "rd/sharp.hpp"

namespace rd {

// coef[j] multiplies x^j.
double eval_poly(const std::vector<double>& coef, double x);

struct XDist {
  enum class Kind { uniform, truncnormal };
  Kind kind = Kind::uniform;
  double lo = -1.0;
  double hi = 1.0;
  double mean = 0.0;  // truncnormal only
  double sd = 1.0;    // truncnormal only

  void check() const;            // support must straddle the cutoff at zero
  double draw(double u) const;   // inverse transform from one uniform
};

// Synthetic design: one conditional-mean polynomial and noise level per
// side, running-variable law, optional fuzzy compliance-probability
// polynomials, and the base seed of the replication streams.
struct DgpSpec {
  std::vector<double> mu_left;
  std::vector<double> mu_right;
  double noise_sd_left = 1.0;
  double noise_sd_right = 1.0;
  XDist x_dist;
  std::optional<std::vector<double>> fuzzy_left;
  std::optional<std::vector<double>> fuzzy_right;
  std::uint64_t seed = 0;

  bool fuzzy() const { return fuzzy_left.has_value(); }
  void check() const;  // throws SpecError("bad_dgp")

  // True effects implied by the polynomials; fuzzy designs divide by the
  // first-stage jump (level) and slope jump (derivative).
  double true_tau(double x) const;
  double true_tau_at_zero() const;
  double true_tau_prime_at_zero() const;
};

// Draws per observation i come from a fixed index layout (3i for X, 3i+1
// for noise, 3i+2 for treatment), streamed by (seed, seed_offset).
Sample generate_dgp(const DgpSpec& dgp, std::size_t n, std::uint64_t seed_offset);

struct Targets {
  bool region = true;
  bool marginal = true;
  std::optional<BandRequest> band;
};

struct CoverageReport {
  std::size_t reps = 0;
  std::size_t valid_reps = 0;
  std::size_t hits_region = 0;
  std::size_t hits_band = 0;
  std::size_t hits_marginal = 0;
  double rate_region = 0.0, se_region = 0.0;
  double rate_band = 0.0, se_band = 0.0;
  double rate_marginal = 0.0, se_marginal = 0.0;
  double mean_region_area = 0.0;
  double mean_band_width = 0.0;  // averaged over grid and replications
  std::size_t nesting_violations = 0;
  std::map<std::string, std::size_t> failures;  // by error code
};

// Runs `reps` independent replications. spec.h <= 0 requests rule-of-thumb
// bandwidths per replication. Replications that raise estimation or
// inference errors are tallied in `failures`, not counted as misses. The
// report is a deterministic function of the arguments for any jobs value.
CoverageReport coverage_experiment(const DgpSpec& dgp, const FitSpec& spec,
                                   std::size_t n, std::size_t reps,
                                   const Targets& targets, int jobs = 1);

struct ExperimentConfig {
  DgpSpec dgp;
  FitSpec spec;  // h == 0 means rule-of-thumb
  std::size_t n = 0;
  std::size_t reps = 0;
  Targets targets;
};

// Plain-text key = value lines; '#' starts a comment. Throws
// SpecError("bad_config") / SpecError("bad_dgp") on invalid input.
ExperimentConfig parse_experiment_config(std::istream& in);

}  // namespace rd
