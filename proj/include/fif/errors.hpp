#pragma once

#include <stdexcept>
#include <string>

namespace fif {

/// Shapes or lengths that do not line up.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Anything that went wrong numerically: non-convergence, rank collapse,
/// non-finite values. Surfaced by the CLI as exit code 3.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConvergenceError : public NumericalError {
 public:
  ConvergenceError(const std::string& what, double residual, int iterations)
      : NumericalError(what + " (residual " + std::to_string(residual) + " after " +
                       std::to_string(iterations) + " iterations)"),
        residual_(residual),
        iterations_(iterations) {}

  double residual() const { return residual_; }
  int iterations() const { return iterations_; }

 private:
  double residual_;
  int iterations_;
};

class RankCollapseError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class NotPsdError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Malformed configuration. Surfaced by the CLI as exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, long row, long col)
      : std::runtime_error(what + " at row " + std::to_string(row) + ", column " +
                           std::to_string(col)),
        row_(row),
        col_(col) {}
  long row() const { return row_; }
  long col() const { return col_; }

 private:
  long row_;
  long col_;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace fif
