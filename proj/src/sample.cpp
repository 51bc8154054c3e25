#include "rd/sample.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

namespace rd {

KernelId parse_kernel(const std::string& name) {
  if (name == "triangular") return KernelId::triangular;
  if (name == "epanechnikov") return KernelId::epanechnikov;
  if (name == "uniform") return KernelId::uniform;
  throw SpecError("bad_kernel", "unknown kernel '" + name + "'");
}

std::string kernel_name(KernelId id) {
  switch (id) {
    case KernelId::triangular: return "triangular";
    case KernelId::epanechnikov: return "epanechnikov";
    case KernelId::uniform: return "uniform";
  }
  return "?";
}

void Sample::check() const {
  if (running.empty())
    throw SpecError("bad_sample", "sample is empty");
  if (outcome.size() != running.size())
    throw SpecError("bad_sample", "running/outcome length mismatch");
  if (treatment && treatment->size() != running.size())
    throw SpecError("bad_sample", "treatment length mismatch");
  if (!std::isfinite(cutoff))
    throw SpecError("bad_sample", "cutoff is not finite");
  for (std::size_t i = 0; i < running.size(); ++i) {
    if (!std::isfinite(running[i]) || !std::isfinite(outcome[i]))
      throw SpecError("bad_sample", "non-finite value at row " + std::to_string(i));
    if (treatment) {
      double t = (*treatment)[i];
      if (t != 0.0 && t != 1.0)
        throw SpecError("bad_treatment",
                        "treatment value not in {0,1} at row " + std::to_string(i));
    }
  }
}

void FitSpec::check() const {
  if (p < 1) throw SpecError("bad_spec", "p must be >= 1");
  if (q < p + 1) throw SpecError("bad_spec", "q must be >= p+1");
  if (!(h > 0.0)) throw SpecError("bad_spec", "h must be positive");
  if (!(b > 0.0)) throw SpecError("bad_spec", "b must be positive");
  if (!(alpha > 0.0 && alpha < 1.0)) throw SpecError("bad_alpha", "alpha must lie in (0,1)");
  if (!(delta_lo >= 0.0) || !(delta_hi >= 0.0))
    throw SpecError("bad_spec", "delta_lo and delta_hi must be nonnegative");
  if (nn_neighbors < 1) throw SpecError("bad_spec", "nn_neighbors must be >= 1");
}

bool ValidationReport::fatal() const {
  return std::any_of(issues.begin(), issues.end(),
                     [](const Issue& i) { return i.fatal; });
}

void ValidationReport::require_ok() const {
  for (const auto& issue : issues)
    if (issue.fatal) throw EstimationError(issue.code, issue.message);
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    // trim spaces and stray carriage returns
    auto begin = cell.find_first_not_of(" \t\r");
    auto end = cell.find_last_not_of(" \t\r");
    cells.push_back(begin == std::string::npos
                        ? std::string{}
                        : cell.substr(begin, end - begin + 1));
  }
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double parse_cell(const std::string& cell, std::size_t row, const std::string& col) {
  double value = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr != last)
    throw ParseError("parse_error", "unparsable value '" + cell + "' in column '" +
                                        col + "' at data row " + std::to_string(row));
  if (!std::isfinite(value))
    throw ParseError("parse_error", "non-finite value in column '" + col +
                                        "' at data row " + std::to_string(row));
  return value;
}

}  // namespace

Sample load_sample(std::istream& in, const ColumnSchema& schema, double cutoff) {
  std::string line;
  if (!std::getline(in, line))
    throw SchemaError("empty_file", "input has no header row");
  auto header = split_csv_line(line);

  auto find_col = [&](const std::string& name) -> std::size_t {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end())
      throw SchemaError("missing_column", "column '" + name + "' not found in header");
    return static_cast<std::size_t>(it - header.begin());
  };

  const std::size_t ix = find_col(schema.running);
  const std::size_t iy = find_col(schema.outcome);
  std::optional<std::size_t> it_col;
  if (schema.treatment) it_col = find_col(*schema.treatment);

  Sample sample;
  sample.cutoff = cutoff;
  if (it_col) sample.treatment.emplace();

  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    ++row;
    auto cells = split_csv_line(line);
    std::size_t needed = std::max({ix, iy, it_col.value_or(0)}) + 1;
    if (cells.size() < needed)
      throw ParseError("parse_error", "too few cells at data row " + std::to_string(row));
    sample.running.push_back(parse_cell(cells[ix], row, schema.running));
    sample.outcome.push_back(parse_cell(cells[iy], row, schema.outcome));
    if (it_col) {
      double t = parse_cell(cells[*it_col], row, *schema.treatment);
      if (t != 0.0 && t != 1.0)
        throw SpecError("bad_treatment", "treatment value not in {0,1} at data row " +
                                             std::to_string(row));
      sample.treatment->push_back(t);
    }
  }
  sample.check();
  return sample;
}

void write_csv(std::ostream& out, const Sample& sample) {
  auto fmt = [](double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    (void)ec;
    return std::string(buf, ptr);
  };
  out << "x,y";
  if (sample.treatment) out << ",t";
  out << "\n";
  for (std::size_t i = 0; i < sample.size(); ++i) {
    out << fmt(sample.running[i]) << ',' << fmt(sample.outcome[i]);
    if (sample.treatment) out << ',' << fmt((*sample.treatment)[i]);
    out << "\n";
  }
}

ValidationReport validate_sample(const Sample& sample, const FitSpec& spec) {
  ValidationReport report;
  std::set<double> left_h, right_h, left_b, right_b;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double xc = sample.centered(i);
    const bool right = sample.treated_side(i);
    (right ? report.n_right : report.n_left)++;
    if (std::abs(xc) <= spec.h) {
      (right ? report.n_right_in_h : report.n_left_in_h)++;
      (right ? right_h : left_h).insert(xc);
    }
    if (std::abs(xc) <= spec.b) {
      (right ? report.n_right_in_b : report.n_left_in_b)++;
      (right ? right_b : left_b).insert(xc);
    }
  }

  if (report.n_left == 0)
    report.issues.push_back({"empty_control_side", "no observations below the cutoff", true});
  if (report.n_right == 0)
    report.issues.push_back({"empty_treated_side", "no observations at or above the cutoff", true});
  if (report.fatal()) return report;

  auto need = [&](const std::set<double>& pts, long needed, const char* what) {
    if (static_cast<long>(pts.size()) < needed)
      report.issues.push_back(
          {"singular_design",
           std::string(what) + ": fewer than " + std::to_string(needed) +
               " distinct running values in window",
           true});
  };
  need(left_h, spec.p + 1, "control side, bandwidth h");
  need(right_h, spec.p + 1, "treated side, bandwidth h");
  need(left_b, spec.q + 1, "control side, bandwidth b");
  need(right_b, spec.q + 1, "treated side, bandwidth b");
  return report;
}

}  // namespace rd
