#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace mdam {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input file could not be parsed. `line()` is 1-based, 0 when unknown.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(line > 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Data violates a model invariant (weights, codes, margins, ...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A numerical kernel failed (non-convergence, non-PSD covariance, infeasible adjustment).
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Nonlinear solver failed to converge. Carries the best point seen and its residual.
class SolverError : public NumericalError {
 public:
  SolverError(const std::string& what, std::vector<double> best_x, double best_residual,
              bool out_of_domain)
      : NumericalError(what + " (best max|F| = " + std::to_string(best_residual) + ")"),
        best_x_(std::move(best_x)),
        best_residual_(best_residual),
        out_of_domain_(out_of_domain) {}

  const std::vector<double>& best_x() const noexcept { return best_x_; }
  double best_residual() const noexcept { return best_residual_; }
  /// True when the iteration was blocked by the domain boundary of F.
  bool out_of_domain() const noexcept { return out_of_domain_; }

 private:
  std::vector<double> best_x_;
  double best_residual_;
  bool out_of_domain_;
};

}  // namespace mdam
