#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace rd {

// Base of the library error taxonomy. Every error carries a stable
// machine-readable code alongside the human-readable message; the CLI
// maps the error class to its exit status.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}
  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

// Input file / column-mapping problems (CLI exit 2).
class SchemaError : public Error {
 public:
  using Error::Error;
};

// Unparsable or non-finite cells (CLI exit 2).
class ParseError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration values: bad alpha, bad kernel, bad DGP (CLI exit 2).
class SpecError : public Error {
 public:
  using Error::Error;
};

// Estimation failures: singular designs, empty sides, weak first stage
// (CLI exit 3).
class EstimationError : public Error {
 public:
  using Error::Error;
};

// Inference failures: degenerate covariance, singular shape (CLI exit 4).
class InferenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace rd
