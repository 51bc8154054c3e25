// rdx: analyze an RD dataset from CSV or run a Monte Carlo coverage
// experiment, emitting JSON on standard output.

#include <chrono>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "rd/band.hpp"
#include "rd/fuzzy.hpp"
#include "rd/inference.hpp"
#include "rd/sharp.hpp"
#include "rd/simlab.hpp"

namespace {

using ordered_json = nlohmann::ordered_json;

int exit_code_for(const rd::Error& e) {
  if (dynamic_cast<const rd::EstimationError*>(&e)) return 3;
  if (dynamic_cast<const rd::InferenceError*>(&e)) return 4;
  return 2;  // schema, parse, spec
}

void emit_error(const rd::Error& e) {
  ordered_json payload;
  payload["code"] = e.code();
  payload["message"] = e.what();
  std::cerr << payload.dump() << "\n";
}

ordered_json interval_json(const rd::Interval& iv) {
  return ordered_json{{"lo", iv.lo}, {"hi", iv.hi}};
}

ordered_json omega_json(const rd::OmegaMatrix& omega) {
  ordered_json j;
  j["v"] = omega.v;
  j["vp"] = omega.vp;
  j["c"] = omega.c;
  j["omega_h"] = ordered_json::array(
      {ordered_json::array({omega.omega_h(0, 0), omega.omega_h(0, 1)}),
       ordered_json::array({omega.omega_h(1, 0), omega.omega_h(1, 1)})});
  return j;
}

ordered_json band_json(const rd::UniformBand& band) {
  ordered_json j;
  j["xs"] = band.xs;
  j["center"] = band.center;
  j["lo"] = band.lo;
  j["hi"] = band.hi;
  j["c_star"] = band.c_star;
  j["arc_angle"] = band.arc_angle;
  return j;
}

struct AnalyzeArgs {
  std::string data, x_col, y_col;
  std::optional<std::string> t_col;
  double cutoff = 0.0;
  int p = 1;
  int q = 0;  // 0: default to p+1
  double h = 0.0;
  double b = 0.0;
  std::string kernel = "triangular";
  double alpha = 0.05;
  double delta_lo = 0.0;
  double delta_hi = 0.0;
  int grid = 101;
  std::string band = "uniform";
  int boundary_points = 256;
};

int run_analyze(const AnalyzeArgs& args) {
  std::vector<std::string> warnings;

  rd::ColumnSchema schema;
  schema.running = args.x_col;
  schema.outcome = args.y_col;
  if (args.t_col) schema.treatment = *args.t_col;

  std::ifstream in(args.data);
  if (!in) throw rd::SchemaError("missing_file", "cannot open " + args.data);
  const rd::Sample sample = rd::load_sample(in, schema, args.cutoff);

  rd::FitSpec spec;
  spec.p = args.p;
  spec.q = args.q > 0 ? args.q : args.p + 1;
  spec.kernel = rd::parse_kernel(args.kernel);
  spec.alpha = args.alpha;
  spec.delta_lo = args.delta_lo;
  spec.delta_hi = args.delta_hi;
  if (args.band != "uniform" && args.band != "envelope" && args.band != "none")
    throw rd::SpecError("bad_spec", "--band must be uniform, envelope, or none");
  if (args.boundary_points < 8)
    throw rd::SpecError("bad_spec", "--boundary-points must be >= 8");

  std::vector<std::string> rot_warnings;
  if (args.h > 0.0) {
    spec.h = args.h;
    if (args.b > 0.0) {
      spec.b = args.b;
    } else {
      spec.b = args.h;
      warnings.push_back("b_defaulted_to_h");
    }
  } else {
    if (args.b > 0.0)
      throw rd::SpecError("bad_spec", "--b requires --h");
    const rd::RotBandwidths rot =
        rd::rule_of_thumb_bandwidths(sample, spec.p, spec.kernel);
    spec.h = rot.h;
    spec.b = rot.b;
    rot_warnings = rot.warnings;
  }
  spec.check();
  warnings.insert(warnings.end(), rot_warnings.begin(), rot_warnings.end());

  const rd::ValidationReport validation = rd::validate_sample(sample, spec);
  validation.require_ok();
  for (const rd::Issue& issue : validation.issues) warnings.push_back(issue.code);

  const bool fuzzy = args.t_col.has_value();
  const rd::VarianceDiagonals variances = rd::nn_variance(sample, spec);

  double tau_tilde = 0.0;
  std::optional<double> tau_prime_tilde;
  std::optional<rd::OmegaMatrix> omega;
  std::optional<double> level_variance;
  ordered_json estimates;

  if (fuzzy) {
    const rd::FuzzyEstimates fz = rd::estimate_fuzzy(sample, spec);
    warnings.insert(warnings.end(), fz.warnings.begin(), fz.warnings.end());
    tau_tilde = fz.tau_frd;
    estimates["tau_hat"] = fz.y_part.tau_hat / fz.tau_t_hat;
    estimates["tau_tilde"] = fz.tau_frd;
    if (fz.tau_prime_frd) {
      tau_prime_tilde = *fz.tau_prime_frd;
      estimates["tau_prime_hat"] = fz.y_part.tau_prime_hat / fz.tau_t_prime_hat;
      estimates["tau_prime_tilde"] = *fz.tau_prime_frd;
      omega = rd::assemble_omega_fuzzy(fz, variances, spec);
    } else {
      estimates["tau_prime_hat"] = nullptr;
      estimates["tau_prime_tilde"] = nullptr;
      level_variance = rd::fuzzy_level_variance(fz, variances, spec);
    }
    estimates["first_stage"] = ordered_json{{"tau_t_hat", fz.tau_t_hat},
                                            {"tau_t_prime_hat", fz.tau_t_prime_hat},
                                            {"t_prime_se", fz.t_prime_se}};
  } else {
    const rd::JointEstimates est = rd::estimate_sharp(sample, spec);
    warnings.insert(warnings.end(), est.warnings.begin(), est.warnings.end());
    tau_tilde = est.tau_tilde;
    tau_prime_tilde = est.tau_prime_tilde;
    estimates["tau_hat"] = est.tau_hat;
    estimates["tau_tilde"] = est.tau_tilde;
    estimates["tau_prime_hat"] = est.tau_prime_hat;
    estimates["tau_prime_tilde"] = est.tau_prime_tilde;
    omega = rd::assemble_omega(est, variances, spec);
  }

  ordered_json out;
  out["spec"] = ordered_json{{"p", spec.p},
                             {"q", spec.q},
                             {"h", spec.h},
                             {"b", spec.b},
                             {"kernel", rd::kernel_name(spec.kernel)},
                             {"alpha", spec.alpha},
                             {"delta_lo", spec.delta_lo},
                             {"delta_hi", spec.delta_hi},
                             {"nn_neighbors", spec.nn_neighbors}};
  out["sample"] = ordered_json{{"n", sample.size()},
                               {"cutoff", sample.cutoff},
                               {"n_left", validation.n_left},
                               {"n_right", validation.n_right},
                               {"fuzzy", fuzzy}};
  out["estimates"] = estimates;

  if (omega) {
    out["omega"] = omega_json(*omega);
    out["marginal"] = ordered_json{
        {"tau", interval_json(rd::rbc_marginal_interval(tau_tilde, omega->v, spec.alpha))},
        {"tau_prime", interval_json(rd::rbc_marginal_interval(
                          *tau_prime_tilde, omega->vp / (spec.h * spec.h), spec.alpha))}};

    const rd::ConfidenceRegion region =
        rd::make_region(tau_tilde, *tau_prime_tilde, omega->omega_h, spec.alpha);
    ordered_json region_j;
    region_j["chi2_crit"] = region.chi2_crit;
    ordered_json boundary = ordered_json::array();
    for (const auto& [bx, by] : rd::region_boundary(region, args.boundary_points))
      boundary.push_back(ordered_json::array({bx, by}));
    region_j["boundary"] = boundary;
    out["region"] = region_j;

    if (args.band == "none") {
      out["band"] = nullptr;
    } else {
      rd::BandRequest request;
      request.delta_lo = spec.delta_lo;
      request.delta_hi = spec.delta_hi;
      request.grid_size = args.grid;
      request.alpha = spec.alpha;
      request.variant = args.band == "envelope" ? rd::BandVariant::envelope
                                                : rd::BandVariant::uniform;
      out["band"] = band_json(rd::uniform_band(tau_tilde, *tau_prime_tilde,
                                               *omega, request));
    }
  } else {
    // Weak fuzzy derivative first stage: only the level is identified.
    out["omega"] = nullptr;
    out["marginal"] = ordered_json{
        {"tau", interval_json(
                    rd::rbc_marginal_interval(tau_tilde, *level_variance, spec.alpha))},
        {"tau_prime", nullptr}};
    out["region"] = nullptr;
    out["band"] = nullptr;
  }
  out["warnings"] = warnings;

  std::cout << out.dump(2) << "\n";
  return 0;
}

int run_simulate(const std::string& config_path, int jobs) {
  std::ifstream in(config_path);
  if (!in) throw rd::SchemaError("missing_file", "cannot open " + config_path);
  const rd::ExperimentConfig cfg = rd::parse_experiment_config(in);

  const auto started = std::chrono::steady_clock::now();
  const rd::CoverageReport report =
      rd::coverage_experiment(cfg.dgp, cfg.spec, cfg.n, cfg.reps, cfg.targets, jobs);
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

  ordered_json out;
  out["reps"] = report.reps;
  out["valid_reps"] = report.valid_reps;
  if (cfg.targets.region)
    out["region"] = ordered_json{{"hits", report.hits_region},
                                 {"rate", report.rate_region},
                                 {"se", report.se_region},
                                 {"mean_area", report.mean_region_area}};
  if (cfg.targets.band)
    out["band"] = ordered_json{{"hits", report.hits_band},
                               {"rate", report.rate_band},
                               {"se", report.se_band},
                               {"mean_width", report.mean_band_width},
                               {"nesting_violations", report.nesting_violations}};
  if (cfg.targets.marginal)
    out["marginal"] = ordered_json{{"hits", report.hits_marginal},
                                   {"rate", report.rate_marginal},
                                   {"se", report.se_marginal}};
  ordered_json failures = ordered_json::object();
  for (const auto& [code, count] : report.failures) failures[code] = count;
  out["failures"] = failures;
  out["runtime_seconds"] = seconds;

  std::cout << out.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"RD effect and derivative estimation with robust bias correction"};
  app.set_help_flag("--help", "print usage");  // frees -h/--h for the bandwidth
  app.require_subcommand(1);

  AnalyzeArgs a;
  std::string t_col;
  CLI::App* analyze = app.add_subcommand("analyze", "Estimate from a CSV dataset");
  analyze->set_help_flag("--help", "print usage");
  analyze->add_option("--data", a.data, "CSV file path")->required();
  analyze->add_option("--x", a.x_col, "running variable column")->required();
  analyze->add_option("--y", a.y_col, "outcome column")->required();
  CLI::Option* t_opt = analyze->add_option("--t", t_col, "treatment column (fuzzy)");
  analyze->add_option("--cutoff", a.cutoff, "cutoff value")->required();
  analyze->add_option("--p", a.p, "main polynomial order");
  analyze->add_option("--q", a.q, "bias-estimation order (default p+1)");
  analyze->add_option("--h", a.h, "main bandwidth (default rule of thumb)");
  analyze->add_option("--b", a.b, "bias bandwidth (default h)");
  analyze->add_option("--kernel", a.kernel, "triangular|epanechnikov|uniform");
  analyze->add_option("--alpha", a.alpha, "1 - coverage level");
  analyze->add_option("--delta-lo", a.delta_lo, "extrapolation reach below cutoff");
  analyze->add_option("--delta-hi", a.delta_hi, "extrapolation reach above cutoff");
  analyze->add_option("--grid", a.grid, "band grid size");
  analyze->add_option("--band", a.band, "uniform|envelope|none");
  analyze->add_option("--boundary-points", a.boundary_points,
                      "region polygon vertex count");

  std::string config_path;
  int jobs = 1;
  CLI::App* simulate = app.add_subcommand("simulate", "Run a coverage experiment");
  simulate->add_option("--config", config_path, "experiment config file")->required();
  simulate->add_option("--jobs", jobs, "worker thread count");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    ordered_json payload;
    payload["code"] = "bad_usage";
    payload["message"] = e.what();
    std::cerr << payload.dump() << "\n";
    return 2;
  }

  try {
    if (analyze->parsed()) {
      if (t_opt->count() > 0) a.t_col = t_col;
      return run_analyze(a);
    }
    return run_simulate(config_path, jobs);
  } catch (const rd::Error& e) {
    emit_error(e);
    return exit_code_for(e);
  } catch (const std::exception& e) {
    ordered_json payload;
    payload["code"] = "internal_error";
    payload["message"] = e.what();
    std::cerr << payload.dump() << "\n";
    return 4;
  }
}
