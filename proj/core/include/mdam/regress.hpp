#pragma once

// Numeric kernels: case-weighted logistic and linear regression, normal-approximation
// parameter draws for proper imputation, and a small dense nonlinear root finder.

#include <Eigen/Dense>

#include <functional>
#include <span>
#include <vector>

#include "mdam/rng.hpp"

namespace mdam {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline constexpr double kRidge = 1e-4;

struct LogisticOptions {
  double gradient_tolerance = 1e-8;
  int max_iterations = 100;
  double separation_norm = 30.0;
};

/// Reference-level multinomial logit: row c of `coefficients` holds the
/// log-odds of level c+1 against the last level m.
struct LogisticFit {
  int levels = 2;
  Matrix coefficients;  // (levels-1) x predictors
  Matrix information;   // observed information of the case-weighted log-likelihood
  Matrix covariance;    // inverse information
  bool converged = false;
  bool separated = false;
  bool rank_deficient = false;
  double ridge = 0.0;
  int iterations = 0;
  /// max |gradient| of the weight-normalised objective at the returned point.
  double gradient_norm = 0.0;

  Eigen::Index predictors() const { return coefficients.cols(); }
};

struct LinearFit {
  Vector coefficients;
  double residual_variance = 0.0;
  Matrix covariance;        // residual_variance * (X'WX)^-1
  Matrix unscaled_inverse;  // (X'WX)^-1
  double df = 0.0;
  bool ridge_applied = false;
};

struct ParameterDraw {
  Matrix coefficients;  // logistic: (levels-1) x p; linear: 1 x p
  double residual_sd = 0.0;
};

/// `response` holds codes 1..levels. Throws NumericalError on an absent level or zero weights.
LogisticFit fit_logistic(const Matrix& design, std::span<const int> response, int levels,
                         std::span<const double> case_weights, const LogisticOptions& options = {});

LinearFit fit_linear(const Matrix& design, std::span<const double> response,
                     std::span<const double> case_weights);

ParameterDraw draw_params(const LogisticFit& fit, Rng& rng);
ParameterDraw draw_params(const LinearFit& fit, Rng& rng);

/// Multivariate normal draw. Covariance must be PSD up to a 1e-10 jitter.
Vector draw_mvn(const Vector& mean, const Matrix& covariance, Rng& rng);

/// Class probabilities (size levels) for one design row.
Vector predict_proba(const Matrix& coefficients, std::span<const double> row);
Vector predict_proba(const LogisticFit& fit, std::span<const double> row);
/// One probability row per design row.
Matrix predict_proba(const Matrix& coefficients, const Matrix& design);

/// Weighted multinomial log-likelihood and its gradient (same layout as
/// `coefficients`), exposed for finite-difference checks.
double logistic_loglik(const Matrix& design, std::span<const int> response,
                       std::span<const double> case_weights, const Matrix& coefficients);
Matrix logistic_score(const Matrix& design, std::span<const int> response,
                      std::span<const double> case_weights, const Matrix& coefficients);

struct EquationSystem {
  Eigen::Index dimension = 0;
  std::function<Vector(const Vector&)> residual;
  Vector initial;
  double tolerance = 1e-10;
  /// Unknowns are probabilities; a root outside (0,1) is reported, not rejected.
  bool probability_system = false;
};

struct SolveOptions {
  int max_iterations = 200;
};

struct SolveResult {
  Vector root;
  double max_residual = 0.0;
  int iterations = 0;
  int dogleg_steps = 0;
  bool outside_unit_interval = false;
};

/// Damped Newton with a finite-difference Jacobian and backtracking line search,
/// falling back to a dogleg trust-region step when the line search stagnates.
/// Throws SolverError (carrying the best point) when max|F| <= tolerance is not reached.
SolveResult solve_system(const EquationSystem& system, const SolveOptions& options = {});

}  // namespace mdam
