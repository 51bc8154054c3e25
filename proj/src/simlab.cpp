#include "rd/simlab.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <sstream>
#include <thread>

#include "rd/philox.hpp"

namespace rd {

double eval_poly(const std::vector<double>& coef, double x) {
  double v = 0.0;
  for (auto it = coef.rbegin(); it != coef.rend(); ++it) v = v * x + *it;
  return v;
}

namespace {

double eval_poly_deriv(const std::vector<double>& coef, double x) {
  double v = 0.0;
  for (std::size_t j = coef.size(); j-- > 1;)
    v = v * x + static_cast<double>(j) * coef[j];
  return v;
}

}  // namespace

void XDist::check() const {
  if (!(lo < hi)) throw SpecError("bad_dgp", "x_dist support is empty");
  if (!(lo < 0.0 && hi > 0.0))
    throw SpecError("bad_dgp", "x_dist support must straddle the cutoff");
  if (kind == Kind::truncnormal && !(sd > 0.0))
    throw SpecError("bad_dgp", "x_dist sd must be positive");
}

double XDist::draw(double u) const {
  if (kind == Kind::uniform) return lo + (hi - lo) * u;
  const double flo = normal_cdf((lo - mean) / sd);
  const double fhi = normal_cdf((hi - mean) / sd);
  double x = mean + sd * normal_quantile(flo + (fhi - flo) * u);
  return std::clamp(x, lo, hi);
}

void DgpSpec::check() const {
  if (mu_left.empty() || mu_right.empty())
    throw SpecError("bad_dgp", "mu polynomials must be non-empty");
  if (!(noise_sd_left >= 0.0) || !(noise_sd_right >= 0.0))
    throw SpecError("bad_dgp", "noise sds must be nonnegative");
  x_dist.check();
  if (fuzzy_left.has_value() != fuzzy_right.has_value())
    throw SpecError("bad_dgp", "fuzzy spec needs both side polynomials");
  if (fuzzy_left) {
    // Probability polynomials must stay inside [0,1] over the support.
    constexpr int kScan = 1000;
    for (int k = 0; k <= kScan; ++k) {
      const double x = x_dist.lo + (x_dist.hi - x_dist.lo) * k / kScan;
      const auto& poly = x < 0.0 ? *fuzzy_left : *fuzzy_right;
      const double pr = eval_poly(poly, x);
      if (!(pr >= 0.0 && pr <= 1.0))
        throw SpecError("bad_dgp", "fuzzy probability outside [0,1] at x=" +
                                       std::to_string(x));
    }
  }
}

double DgpSpec::true_tau(double x) const {
  return eval_poly(mu_right, x) - eval_poly(mu_left, x);
}

double DgpSpec::true_tau_at_zero() const {
  double tau = true_tau(0.0);
  if (fuzzy()) tau /= eval_poly(*fuzzy_right, 0.0) - eval_poly(*fuzzy_left, 0.0);
  return tau;
}

double DgpSpec::true_tau_prime_at_zero() const {
  double tp = eval_poly_deriv(mu_right, 0.0) - eval_poly_deriv(mu_left, 0.0);
  if (fuzzy())
    tp /= eval_poly_deriv(*fuzzy_right, 0.0) - eval_poly_deriv(*fuzzy_left, 0.0);
  return tp;
}

Sample generate_dgp(const DgpSpec& dgp, std::size_t n, std::uint64_t seed_offset) {
  dgp.check();
  if (n < 1) throw SpecError("bad_dgp", "n must be >= 1");

  const Philox gen(dgp.seed, seed_offset);
  Sample sample;
  sample.cutoff = 0.0;
  sample.running.resize(n);
  sample.outcome.resize(n);
  if (dgp.fuzzy()) sample.treatment.emplace(n);

  for (std::size_t i = 0; i < n; ++i) {
    const std::uint64_t base = 3 * static_cast<std::uint64_t>(i);
    const double x = dgp.x_dist.draw(gen.uniform(base));
    const double eps = normal_quantile(gen.uniform(base + 1));
    const bool right = x >= 0.0;
    sample.running[i] = x;
    sample.outcome[i] = eval_poly(right ? dgp.mu_right : dgp.mu_left, x) +
                        (right ? dgp.noise_sd_right : dgp.noise_sd_left) * eps;
    if (dgp.fuzzy()) {
      const double pr = eval_poly(right ? *dgp.fuzzy_right : *dgp.fuzzy_left, x);
      (*sample.treatment)[i] = gen.uniform(base + 2) < pr ? 1.0 : 0.0;
    }
  }
  return sample;
}

namespace {

struct RepResult {
  bool ok = false;
  std::string error_code;
  bool hit_region = false;
  bool hit_band = false;
  bool hit_marginal = false;
  double region_area = 0.0;
  double band_width = 0.0;
  bool nesting_violation = false;
};

RepResult run_replication(const DgpSpec& dgp, const FitSpec& base_spec,
                          std::size_t n, std::uint64_t rep, const Targets& targets) {
  RepResult out;
  try {
    const Sample sample = generate_dgp(dgp, n, rep);

    FitSpec spec = base_spec;
    if (!(spec.h > 0.0)) {
      const RotBandwidths rot = rule_of_thumb_bandwidths(sample, spec.p, spec.kernel);
      spec.h = rot.h;
      spec.b = rot.b;
    } else if (!(spec.b > 0.0)) {
      spec.b = spec.h;
    }
    spec.check();

    double c0 = 0.0, c1 = 0.0;
    OmegaMatrix omega;
    if (dgp.fuzzy()) {
      const FuzzyEstimates fz = estimate_fuzzy(sample, spec);
      const VarianceDiagonals variances = nn_variance(sample, spec);
      omega = assemble_omega_fuzzy(fz, variances, spec);
      c0 = fz.tau_frd;
      c1 = fz.tau_prime();
    } else {
      const JointEstimates est = estimate_sharp(sample, spec);
      const VarianceDiagonals variances = nn_variance(sample, spec);
      omega = assemble_omega(est, variances, spec);
      c0 = est.tau_tilde;
      c1 = est.tau_prime_tilde;
    }

    const double t0 = dgp.true_tau_at_zero();
    const double t1 = dgp.true_tau_prime_at_zero();

    if (targets.region) {
      const ConfidenceRegion region = make_region(c0, c1, omega.omega_h, spec.alpha);
      out.hit_region = wald_statistic(region, t0, t1) <= region.chi2_crit;
      out.region_area = 3.14159265358979323846 * region.chi2_crit *
                        std::sqrt(std::max(omega.omega_h.determinant(), 0.0));
    }
    if (targets.marginal) {
      out.hit_marginal = rbc_marginal_interval(c0, omega.v, spec.alpha).contains(t0);
    }
    if (targets.band) {
      const UniformBand band = uniform_band(c0, c1, omega, *targets.band);
      bool hit = true;
      double width = 0.0;
      for (std::size_t i = 0; i < band.xs.size(); ++i) {
        const double truth = t0 + t1 * band.xs[i];
        hit = hit && band.lo[i] <= truth && truth <= band.hi[i];
        width += band.hi[i] - band.lo[i];
      }
      out.hit_band = hit;
      out.band_width = width / static_cast<double>(band.xs.size());

      // Nesting of half-widths at x = 0: marginal <= band <= envelope.
      const double alpha = targets.band->alpha;
      const double z = normal_quantile(1.0 - alpha / 2.0);
      const double env = std::sqrt(chi2_quantile_2df(1.0 - alpha));
      const double tol = 1e-9;
      out.nesting_violation =
          !(z <= band.c_star + tol && band.c_star <= env + tol);
    }
    out.ok = true;
  } catch (const Error& e) {
    out.error_code = e.code();
  }
  return out;
}

}  // namespace

CoverageReport coverage_experiment(const DgpSpec& dgp, const FitSpec& spec,
                                   std::size_t n, std::size_t reps,
                                   const Targets& targets, int jobs) {
  CoverageReport report;
  report.reps = reps;
  if (reps == 0) return report;

  std::vector<RepResult> results(reps);
  const std::size_t workers =
      std::min<std::size_t>(std::max(jobs, 1), reps);
  if (workers <= 1) {
    for (std::size_t r = 0; r < reps; ++r)
      results[r] = run_replication(dgp, spec, n, r, targets);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t r = w; r < reps; r += workers)
          results[r] = run_replication(dgp, spec, n, r, targets);
      });
    }
    for (auto& t : pool) t.join();
  }

  // Deterministic sequential aggregation, independent of the job count.
  double area_sum = 0.0, area_comp = 0.0;
  double width_sum = 0.0, width_comp = 0.0;
  auto kahan_add = [](double& sum, double& comp, double v) {
    const double y = v - comp;
    const double t = sum + y;
    comp = (t - sum) - y;
    sum = t;
  };
  for (const RepResult& r : results) {
    if (!r.ok) {
      ++report.failures[r.error_code];
      continue;
    }
    ++report.valid_reps;
    report.hits_region += r.hit_region;
    report.hits_band += r.hit_band;
    report.hits_marginal += r.hit_marginal;
    report.nesting_violations += r.nesting_violation;
    kahan_add(area_sum, area_comp, r.region_area);
    kahan_add(width_sum, width_comp, r.band_width);
  }

  if (report.valid_reps > 0) {
    const double m = static_cast<double>(report.valid_reps);
    auto rate_se = [m](std::size_t hits, double& rate, double& se) {
      rate = static_cast<double>(hits) / m;
      se = std::sqrt(rate * (1.0 - rate) / m);
    };
    if (targets.region) {
      rate_se(report.hits_region, report.rate_region, report.se_region);
      report.mean_region_area = area_sum / m;
    }
    if (targets.band) {
      rate_se(report.hits_band, report.rate_band, report.se_band);
      report.mean_band_width = width_sum / m;
    }
    if (targets.marginal)
      rate_se(report.hits_marginal, report.rate_marginal, report.se_marginal);
  }
  return report;
}

namespace {

std::vector<double> parse_numbers(const std::string& value, const std::string& key) {
  std::istringstream in(value);
  std::vector<double> out;
  double v;
  while (in >> v) out.push_back(v);
  in.clear();
  std::string rest;
  if (in >> rest)
    throw SpecError("bad_config", "non-numeric value for " + key + ": " + rest);
  if (out.empty()) throw SpecError("bad_config", "empty value for " + key);
  return out;
}

double parse_scalar(const std::string& value, const std::string& key) {
  const std::vector<double> nums = parse_numbers(value, key);
  if (nums.size() != 1)
    throw SpecError("bad_config", key + " expects a single number");
  return nums[0];
}

}  // namespace

ExperimentConfig parse_experiment_config(std::istream& in) {
  ExperimentConfig cfg;
  cfg.spec.h = 0.0;  // default: rule of thumb
  cfg.spec.b = 0.0;

  bool want_region = true, want_band = false, want_marginal = true;
  BandRequest band;
  bool saw_delta = false;

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw SpecError("bad_config",
                      "expected key = value on line " + std::to_string(line_no));
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r");
      if (a == std::string::npos) return std::string();
      const auto b = s.find_last_not_of(" \t\r");
      return s.substr(a, b - a + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw SpecError("bad_config",
                      "empty key or value on line " + std::to_string(line_no));

    if (key == "mu_left") {
      cfg.dgp.mu_left = parse_numbers(value, key);
    } else if (key == "mu_right") {
      cfg.dgp.mu_right = parse_numbers(value, key);
    } else if (key == "noise_sd_left") {
      cfg.dgp.noise_sd_left = parse_scalar(value, key);
    } else if (key == "noise_sd_right") {
      cfg.dgp.noise_sd_right = parse_scalar(value, key);
    } else if (key == "fuzzy_left") {
      cfg.dgp.fuzzy_left = parse_numbers(value, key);
    } else if (key == "fuzzy_right") {
      cfg.dgp.fuzzy_right = parse_numbers(value, key);
    } else if (key == "x_dist") {
      std::istringstream xs(value);
      std::string kind;
      xs >> kind;
      std::vector<double> args;
      double v;
      while (xs >> v) args.push_back(v);
      if (kind == "uniform" && args.size() == 2) {
        cfg.dgp.x_dist = {XDist::Kind::uniform, args[0], args[1]};
      } else if (kind == "truncnormal" && args.size() == 4) {
        cfg.dgp.x_dist = {XDist::Kind::truncnormal, args[2], args[3], args[0],
                          args[1]};
      } else {
        throw SpecError("bad_config",
                        "x_dist expects 'uniform lo hi' or "
                        "'truncnormal mean sd lo hi'");
      }
    } else if (key == "seed") {
      cfg.dgp.seed = static_cast<std::uint64_t>(parse_scalar(value, key));
    } else if (key == "n") {
      cfg.n = static_cast<std::size_t>(parse_scalar(value, key));
    } else if (key == "reps") {
      cfg.reps = static_cast<std::size_t>(parse_scalar(value, key));
    } else if (key == "p") {
      cfg.spec.p = static_cast<int>(parse_scalar(value, key));
    } else if (key == "q") {
      cfg.spec.q = static_cast<int>(parse_scalar(value, key));
    } else if (key == "h") {
      cfg.spec.h = parse_scalar(value, key);
    } else if (key == "b") {
      cfg.spec.b = parse_scalar(value, key);
    } else if (key == "kernel") {
      cfg.spec.kernel = parse_kernel(value);
    } else if (key == "alpha") {
      cfg.spec.alpha = parse_scalar(value, key);
    } else if (key == "nn_neighbors") {
      cfg.spec.nn_neighbors = static_cast<int>(parse_scalar(value, key));
    } else if (key == "delta_lo") {
      band.delta_lo = parse_scalar(value, key);
      saw_delta = true;
    } else if (key == "delta_hi") {
      band.delta_hi = parse_scalar(value, key);
      saw_delta = true;
    } else if (key == "grid") {
      band.grid_size = static_cast<int>(parse_scalar(value, key));
    } else if (key == "band") {
      if (value == "uniform") {
        band.variant = BandVariant::uniform;
      } else if (value == "envelope") {
        band.variant = BandVariant::envelope;
      } else {
        throw SpecError("bad_config", "band must be uniform or envelope");
      }
    } else if (key == "targets") {
      want_region = want_band = want_marginal = false;
      std::istringstream ts(value);
      std::string t;
      while (ts >> t) {
        if (t == "region") {
          want_region = true;
        } else if (t == "band") {
          want_band = true;
        } else if (t == "marginal") {
          want_marginal = true;
        } else {
          throw SpecError("bad_config", "unknown target: " + t);
        }
      }
    } else {
      throw SpecError("bad_config", "unknown key: " + key);
    }
  }

  if (cfg.n == 0) throw SpecError("bad_config", "n must be >= 1");
  if (!(cfg.spec.alpha > 0.0 && cfg.spec.alpha < 1.0))
    throw SpecError("bad_alpha", "alpha must lie in (0,1)");
  cfg.dgp.check();

  cfg.spec.delta_lo = band.delta_lo;
  cfg.spec.delta_hi = band.delta_hi;
  cfg.targets.region = want_region;
  cfg.targets.marginal = want_marginal;
  if (want_band || saw_delta) {
    band.alpha = cfg.spec.alpha;
    band.check();
    cfg.targets.band = band;
  }
  return cfg;
}

}  // namespace rd
