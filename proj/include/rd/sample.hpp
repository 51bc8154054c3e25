#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "rd/errors.hpp"

namespace rd {

enum class KernelId { triangular, epanechnikov, uniform };

KernelId parse_kernel(const std::string& name);
std::string kernel_name(KernelId id);

// Observations of the running variable and outcome, plus an optional binary
// treatment indicator for fuzzy designs. All estimators consume the
// recentered value running[i] - cutoff only; ties at the cutoff belong to
// the treated side.
struct Sample {
  std::vector<double> running;
  std::vector<double> outcome;
  std::optional<std::vector<double>> treatment;
  double cutoff = 0.0;

  std::size_t size() const noexcept { return running.size(); }
  double centered(std::size_t i) const { return running[i] - cutoff; }
  bool treated_side(std::size_t i) const { return running[i] >= cutoff; }

  // Throws on violated invariants (length mismatch, non-finite values,
  // treatment not in {0,1}, empty sample).
  void check() const;
};

struct FitSpec {
  int p = 1;             // main polynomial order
  int q = 2;             // bias-estimation order, q >= p+1
  double h = 0.0;        // main bandwidth
  double b = 0.0;        // bias bandwidth
  KernelId kernel = KernelId::triangular;
  double alpha = 0.05;   // 1 - coverage level
  double delta_lo = 0.0; // extrapolation interval [-delta_lo, delta_hi]
  double delta_hi = 0.0;
  int nn_neighbors = 3;  // J for nearest-neighbor variance estimation

  void check() const;    // throws SpecError
};

struct Issue {
  std::string code;
  std::string message;
  bool fatal = false;
};

struct ValidationReport {
  long n_left = 0, n_right = 0;
  long n_left_in_h = 0, n_right_in_h = 0;
  long n_left_in_b = 0, n_right_in_b = 0;
  std::vector<Issue> issues;

  bool fatal() const;
  // Throws EstimationError on the first fatal issue.
  void require_ok() const;
};

struct ColumnSchema {
  std::string running;
  std::string outcome;
  std::optional<std::string> treatment;
};

// Reads comma-separated text with a header row. Rows with missing or
// non-finite required fields reject the whole file.
Sample load_sample(std::istream& in, const ColumnSchema& schema, double cutoff);

// Inverse of load_sample for finite decimal inputs: values round-trip
// bit-exactly through shortest-representation formatting.
void write_csv(std::ostream& out, const Sample& sample);

// Diagnostics only; never throws. A fatal issue is recorded when a side is
// empty or has fewer than p+1 (resp. q+1) distinct running values inside
// the h (resp. b) window.
ValidationReport validate_sample(const Sample& sample, const FitSpec& spec);

}  // namespace rd
