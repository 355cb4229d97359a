#include "mdam/regress.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "mdam/error.hpp"

namespace mdam {

namespace {

// Fills `probs` (size m) with softmax of (eta_1..eta_{m-1}, 0).
void softmax_ref(const double* eta, int m, double* probs) {
  double mx = 0.0;
  for (int c = 0; c + 1 < m; ++c) mx = std::max(mx, eta[c]);
  double sum = 0.0;
  for (int c = 0; c + 1 < m; ++c) {
    probs[c] = std::exp(eta[c] - mx);
    sum += probs[c];
  }
  probs[m - 1] = std::exp(-mx);
  sum += probs[m - 1];
  for (int c = 0; c < m; ++c) probs[c] /= sum;
}

double total_weight(std::span<const double> w) {
  double s = 0.0;
  for (double v : w) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw NumericalError("case weights must be finite and >= 0");
    s += v;
  }
  return s;
}

struct NewtonOutcome {
  Matrix coef;
  int iterations = 0;
  double grad_norm = 0.0;
  bool converged = false;
  bool diverged = false;  // coefficient norm exceeded the separation threshold
  bool singular = false;
};

// Newton-Raphson on the weight-normalised multinomial log-likelihood with an
// optional ridge penalty. Step halving keeps the objective non-decreasing.
NewtonOutcome newton_logistic(const Matrix& X, std::span<const int> y, int m,
                              std::span<const double> w, double wsum, double ridge,
                              const LogisticOptions& opt) {
  const Eigen::Index n = X.rows();
  const Eigen::Index p = X.cols();
  const Eigen::Index km = m - 1;
  const Eigen::Index K = km * p;

  NewtonOutcome out;
  out.coef = Matrix::Zero(km, p);
  std::vector<double> eta(m), prob(m);

  auto objective = [&](const Matrix& B) {
    double ll = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (w[i] == 0.0) continue;
      for (Eigen::Index c = 0; c < km; ++c) eta[c] = B.row(c).dot(X.row(i));
      softmax_ref(eta.data(), m, prob.data());
      ll += w[i] * std::log(std::max(prob[y[i] - 1], std::numeric_limits<double>::min()));
    }
    return ll / wsum - 0.5 * ridge * B.squaredNorm();
  };

  double obj = objective(out.coef);
  for (int it = 0; it <= opt.max_iterations; ++it) {
    Vector grad = Vector::Zero(K);
    Matrix hess = Matrix::Zero(K, K);  // negative Hessian of the normalised log-likelihood
    for (Eigen::Index i = 0; i < n; ++i) {
      if (w[i] == 0.0) continue;
      for (Eigen::Index c = 0; c < km; ++c) eta[c] = out.coef.row(c).dot(X.row(i));
      softmax_ref(eta.data(), m, prob.data());
      const double wi = w[i] / wsum;
      for (Eigen::Index c = 0; c < km; ++c) {
        const double resid = (y[i] - 1 == c ? 1.0 : 0.0) - prob[c];
        grad.segment(c * p, p) += (wi * resid) * X.row(i).transpose();
        for (Eigen::Index d = c; d < km; ++d) {
          const double a = prob[c] * ((c == d ? 1.0 : 0.0) - prob[d]);
          hess.block(c * p, d * p, p, p).noalias() +=
              (wi * a) * X.row(i).transpose() * X.row(i);
        }
      }
    }
    for (Eigen::Index c = 0; c < km; ++c) {
      for (Eigen::Index d = c + 1; d < km; ++d) {
        hess.block(d * p, c * p, p, p) = hess.block(c * p, d * p, p, p).transpose();
      }
    }
    Vector theta(K);
    for (Eigen::Index c = 0; c < km; ++c) theta.segment(c * p, p) = out.coef.row(c).transpose();
    grad -= ridge * theta;
    hess.diagonal().array() += ridge;

    out.iterations = it;
    out.grad_norm = grad.lpNorm<Eigen::Infinity>();
    if (out.grad_norm <= opt.gradient_tolerance) {
      out.converged = true;
      return out;
    }
    if (it == opt.max_iterations) break;

    Eigen::LDLT<Matrix> ldlt(hess);
    const double scale = std::max(1.0, hess.diagonal().cwiseAbs().maxCoeff());
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
        ldlt.vectorD().minCoeff() <= 1e-13 * scale) {
      out.singular = true;
      return out;
    }
    const Vector step = ldlt.solve(grad);
    double t = 1.0;
    bool accepted = false;
    for (int h = 0; h < 50; ++h) {
      Matrix trial = out.coef;
      for (Eigen::Index c = 0; c < km; ++c) trial.row(c) += t * step.segment(c * p, p).transpose();
      const double tobj = objective(trial);
      if (std::isfinite(tobj) && tobj >= obj - 1e-15 * std::abs(obj)) {
        out.coef = std::move(trial);
        obj = tobj;
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) {
      // No ascent possible at working precision.
      return out;
    }
    if (ridge == 0.0 && out.coef.norm() > opt.separation_norm) {
      out.diverged = true;
      return out;
    }
  }
  return out;
}

Matrix symmetric_inverse(const Matrix& a) {
  Eigen::LDLT<Matrix> ldlt(a);
  Matrix inv = ldlt.solve(Matrix::Identity(a.rows(), a.cols()));
  return 0.5 * (inv + inv.transpose());
}

}  // namespace

LogisticFit fit_logistic(const Matrix& design, std::span<const int> response, int levels,
                         std::span<const double> case_weights, const LogisticOptions& options) {
  const auto n = design.rows();
  if (levels < 2) throw NumericalError("logistic regression needs >= 2 levels");
  if (static_cast<Eigen::Index>(response.size()) != n ||
      static_cast<Eigen::Index>(case_weights.size()) != n) {
    throw NumericalError("logistic regression: design, response and weights differ in length");
  }
  const double wsum = total_weight(case_weights);
  if (!(wsum > 0.0)) throw NumericalError("logistic regression: weights are all zero");
  std::vector<double> level_weight(levels, 0.0);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int code = response[i];
    if (code < 1 || code > levels) throw NumericalError("logistic regression: response code out of range");
    level_weight[code - 1] += case_weights[i];
  }
  for (int c = 0; c < levels; ++c) {
    if (!(level_weight[c] > 0.0)) {
      throw NumericalError("logistic regression: empty level " + std::to_string(c + 1));
    }
  }

  LogisticFit fit;
  fit.levels = levels;
  NewtonOutcome res = newton_logistic(design, response, levels, case_weights, wsum, 0.0, options);
  if (res.diverged || res.singular || !res.converged) {
    fit.separated = res.diverged;
    fit.rank_deficient = res.singular;
    fit.ridge = kRidge;
    res = newton_logistic(design, response, levels, case_weights, wsum, kRidge, options);
  }
  fit.coefficients = res.coef;
  fit.converged = res.converged;
  fit.iterations = res.iterations;
  fit.gradient_norm = res.grad_norm;

  // Observed information on the unnormalised scale (ridge acts as a Gaussian prior).
  const Eigen::Index p = design.cols();
  const Eigen::Index km = levels - 1;
  Matrix info = Matrix::Zero(km * p, km * p);
  std::vector<double> eta(levels), prob(levels);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (case_weights[i] == 0.0) continue;
    for (Eigen::Index c = 0; c < km; ++c) eta[c] = fit.coefficients.row(c).dot(design.row(i));
    softmax_ref(eta.data(), levels, prob.data());
    for (Eigen::Index c = 0; c < km; ++c) {
      for (Eigen::Index d = 0; d < km; ++d) {
        const double a = prob[c] * ((c == d ? 1.0 : 0.0) - prob[d]);
        info.block(c * p, d * p, p, p).noalias() +=
            (case_weights[i] * a) * design.row(i).transpose() * design.row(i);
      }
    }
  }
  info.diagonal().array() += fit.ridge * wsum;
  fit.information = 0.5 * (info + info.transpose());
  fit.covariance = symmetric_inverse(fit.information);
  return fit;
}

double logistic_loglik(const Matrix& design, std::span<const int> response,
                       std::span<const double> case_weights, const Matrix& coefficients) {
  const int m = static_cast<int>(coefficients.rows()) + 1;
  std::vector<double> eta(m), prob(m);
  double ll = 0.0;
  for (Eigen::Index i = 0; i < design.rows(); ++i) {
    for (int c = 0; c + 1 < m; ++c) eta[c] = coefficients.row(c).dot(design.row(i));
    softmax_ref(eta.data(), m, prob.data());
    ll += case_weights[i] * std::log(prob[response[i] - 1]);
  }
  return ll;
}

Matrix logistic_score(const Matrix& design, std::span<const int> response,
                      std::span<const double> case_weights, const Matrix& coefficients) {
  const int m = static_cast<int>(coefficients.rows()) + 1;
  std::vector<double> eta(m), prob(m);
  Matrix g = Matrix::Zero(coefficients.rows(), coefficients.cols());
  for (Eigen::Index i = 0; i < design.rows(); ++i) {
    for (int c = 0; c + 1 < m; ++c) eta[c] = coefficients.row(c).dot(design.row(i));
    softmax_ref(eta.data(), m, prob.data());
    for (int c = 0; c + 1 < m; ++c) {
      const double r = (response[i] - 1 == c ? 1.0 : 0.0) - prob[c];
      g.row(c) += case_weights[i] * r * design.row(i);
    }
  }
  return g;
}

LinearFit fit_linear(const Matrix& design, std::span<const double> response,
                     std::span<const double> case_weights) {
  const auto n = design.rows();
  const auto p = design.cols();
  if (static_cast<Eigen::Index>(response.size()) != n ||
      static_cast<Eigen::Index>(case_weights.size()) != n) {
    throw NumericalError("linear regression: design, response and weights differ in length");
  }
  const double wsum = total_weight(case_weights);
  LinearFit fit;
  fit.df = wsum - static_cast<double>(p);
  if (!(fit.df > 0.0)) throw NumericalError("linear regression: zero effective degrees of freedom");

  Vector sw(n);
  for (Eigen::Index i = 0; i < n; ++i) sw[i] = std::sqrt(case_weights[i]);
  const Matrix xs = sw.asDiagonal() * design;
  const Vector ys = sw.cwiseProduct(Eigen::Map<const Vector>(response.data(), n));

  Eigen::ColPivHouseholderQR<Matrix> qr(xs);
  qr.setThreshold(1e-10);
  Matrix xtwx = xs.transpose() * xs;
  if (qr.rank() == p) {
    fit.coefficients = qr.solve(ys);
    fit.unscaled_inverse = symmetric_inverse(xtwx);
  } else {
    fit.ridge_applied = true;
    const double lambda = kRidge * std::max(1.0, xtwx.trace() / static_cast<double>(p));
    xtwx.diagonal().array() += lambda;
    Eigen::LLT<Matrix> llt(xtwx);
    fit.coefficients = llt.solve(xs.transpose() * ys);
    fit.unscaled_inverse = symmetric_inverse(xtwx);
  }
  const double rss = (ys - xs * fit.coefficients).squaredNorm();
  fit.residual_variance = rss / fit.df;
  fit.covariance = fit.residual_variance * fit.unscaled_inverse;
  return fit;
}

Vector draw_mvn(const Vector& mean, const Matrix& covariance, Rng& rng) {
  const auto k = mean.size();
  if (covariance.rows() != k || covariance.cols() != k) throw NumericalError("covariance shape mismatch");
  if (!covariance.allFinite()) throw NumericalError("covariance is not finite");
  Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (covariance + covariance.transpose()));
  if (eig.info() != Eigen::Success) throw NumericalError("covariance eigendecomposition failed");
  const Vector& lambda = eig.eigenvalues();
  const double scale = std::max(1.0, lambda.cwiseAbs().maxCoeff());
  if (k > 0 && lambda.minCoeff() < -1e-10 * scale) throw NumericalError("covariance is not PSD");
  Vector z(k);
  for (Eigen::Index i = 0; i < k; ++i) z[i] = rng.normal();
  const Vector root = lambda.cwiseMax(0.0).cwiseSqrt();
  return mean + eig.eigenvectors() * root.cwiseProduct(z);
}

ParameterDraw draw_params(const LogisticFit& fit, Rng& rng) {
  if (!fit.converged && fit.ridge == 0.0) throw NumericalError("parameter draw from an unconverged fit");
  const auto km = fit.coefficients.rows();
  const auto p = fit.coefficients.cols();
  Vector mean(km * p);
  for (Eigen::Index c = 0; c < km; ++c) mean.segment(c * p, p) = fit.coefficients.row(c).transpose();
  const Vector theta = draw_mvn(mean, fit.covariance, rng);
  ParameterDraw d;
  d.coefficients.resize(km, p);
  for (Eigen::Index c = 0; c < km; ++c) d.coefficients.row(c) = theta.segment(c * p, p).transpose();
  return d;
}

ParameterDraw draw_params(const LinearFit& fit, Rng& rng) {
  // sigma*^2 = RSS / chi^2_df, then beta* | sigma* ~ N(beta_hat, sigma*^2 (X'WX)^-1).
  const double rss = fit.residual_variance * fit.df;
  const double chi = rng.chi_squared(fit.df);
  const double sigma2 = chi > 0.0 ? rss / chi : 0.0;
  ParameterDraw d;
  const Vector beta = draw_mvn(fit.coefficients, sigma2 * fit.unscaled_inverse, rng);
  d.coefficients = beta.transpose();
  d.residual_sd = std::sqrt(sigma2);
  return d;
}

Vector predict_proba(const Matrix& coefficients, std::span<const double> row) {
  const auto p = coefficients.cols();
  if (static_cast<Eigen::Index>(row.size()) != p) throw NumericalError("design row arity mismatch");
  const int m = static_cast<int>(coefficients.rows()) + 1;
  std::vector<double> eta(m - 1);
  bool any_inf = false;
  for (int c = 0; c + 1 < m; ++c) {
    double s = 0.0;
    for (Eigen::Index k = 0; k < p; ++k) s += coefficients(c, k) * row[k];
    if (std::isnan(s)) throw NumericalError("linear predictor is NaN");
    any_inf = any_inf || std::isinf(s);
    eta[c] = s;
  }
  Vector probs(m);
  if (any_inf) {
    // Overflowed predictors: mass goes uniformly to the +inf levels, or to the
    // finite remainder when all infinities are negative.
    int top = 0;
    for (double e : eta) top += (e == std::numeric_limits<double>::infinity());
    if (top > 0) {
      for (int c = 0; c + 1 < m; ++c) probs[c] = (std::isinf(eta[c]) && eta[c] > 0) ? 1.0 / top : 0.0;
      probs[m - 1] = 0.0;
      return probs;
    }
    for (auto& e : eta) {
      if (std::isinf(e)) e = -std::numeric_limits<double>::max();
    }
  }
  softmax_ref(eta.data(), m, probs.data());
  return probs;
}

Vector predict_proba(const LogisticFit& fit, std::span<const double> row) {
  return predict_proba(fit.coefficients, row);
}

Matrix predict_proba(const Matrix& coefficients, const Matrix& design) {
  const int m = static_cast<int>(coefficients.rows()) + 1;
  Matrix out(design.rows(), m);
  std::vector<double> row(design.cols());
  for (Eigen::Index i = 0; i < design.rows(); ++i) {
    for (Eigen::Index k = 0; k < design.cols(); ++k) row[k] = design(i, k);
    out.row(i) = predict_proba(coefficients, row).transpose();
  }
  return out;
}

// -- Nonlinear systems ------------------------------------------------------------

SolveResult solve_system(const EquationSystem& sys, const SolveOptions& options) {
  const Eigen::Index n = sys.dimension;
  if (n <= 0 || n > 64) throw std::invalid_argument("solve_system supports dimensions 1..64");
  if (sys.initial.size() != n) throw std::invalid_argument("initial point has the wrong dimension");

  auto eval = [&](const Vector& x, Vector& f) {
    f = sys.residual(x);
    return f.size() == n && f.allFinite();
  };
  auto maxabs = [](const Vector& v) { return v.lpNorm<Eigen::Infinity>(); };

  Vector x = sys.initial;
  Vector f;
  if (!eval(x, f)) throw NumericalError("residual function not evaluable at the initial point");

  Vector best = x;
  double best_res = maxabs(f);
  bool domain_hit = false;
  double radius = 0.5 * std::max(1.0, x.norm());
  int dogleg_steps = 0;
  SolveResult result;

  for (int it = 0; it <= options.max_iterations; ++it) {
    const double res = maxabs(f);
    if (res < best_res) {
      best_res = res;
      best = x;
    }
    if (res <= sys.tolerance) {
      result.root = x;
      result.max_residual = res;
      result.iterations = it;
      result.dogleg_steps = dogleg_steps;
      if (sys.probability_system) {
        result.outside_unit_interval = (x.array() <= 0.0).any() || (x.array() >= 1.0).any();
      }
      return result;
    }
    if (it == options.max_iterations) break;

    // Forward-difference Jacobian; backward difference where the forward point leaves the domain.
    Matrix jac(n, n);
    Vector fh;
    bool jac_ok = true;
    for (Eigen::Index k = 0; k < n; ++k) {
      const double h = 1e-7 * std::max(1.0, std::abs(x[k]));
      Vector xh = x;
      xh[k] += h;
      if (eval(xh, fh)) {
        jac.col(k) = (fh - f) / h;
        continue;
      }
      domain_hit = true;
      xh[k] = x[k] - h;
      if (eval(xh, fh)) {
        jac.col(k) = (f - fh) / h;
      } else {
        jac_ok = false;
        break;
      }
    }
    if (!jac_ok) break;

    const double phi0 = 0.5 * f.squaredNorm();
    Eigen::ColPivHouseholderQR<Matrix> qr(jac);
    const Vector newton = qr.solve(-f);
    bool moved = false;

    if (qr.rank() == n && newton.allFinite()) {
      double t = 1.0;
      Vector ft;
      for (int h = 0; h < 40; ++h) {
        const Vector xt = x + t * newton;
        if (eval(xt, ft)) {
          if (0.5 * ft.squaredNorm() <= (1.0 - 1e-4 * t) * phi0) {
            x = xt;
            f = ft;
            moved = true;
            break;
          }
        } else {
          domain_hit = true;
        }
        t *= 0.5;
      }
    }

    if (!moved) {
      // Dogleg trust-region fallback.
      const Vector grad = jac.transpose() * f;
      const double gnorm = grad.norm();
      const Vector jg = jac * grad;
      const Vector cauchy = jg.squaredNorm() > 0.0 ? Vector(-(grad.squaredNorm() / jg.squaredNorm()) * grad)
                                                   : Vector(Vector::Zero(n));
      const Vector gn = newton.allFinite() ? newton : cauchy;
      for (int attempt = 0; attempt < 30 && gnorm > 0.0; ++attempt) {
        Vector step;
        if (gn.norm() <= radius) {
          step = gn;
        } else if (cauchy.norm() >= radius) {
          step = -(radius / gnorm) * grad;
        } else {
          const Vector d = gn - cauchy;
          const double a = d.squaredNorm();
          const double b = 2.0 * cauchy.dot(d);
          const double c = cauchy.squaredNorm() - radius * radius;
          const double tau = (-b + std::sqrt(std::max(0.0, b * b - 4.0 * a * c))) / (2.0 * a);
          step = cauchy + tau * d;
        }
        const double predicted = phi0 - 0.5 * (f + jac * step).squaredNorm();
        Vector ft;
        const Vector xt = x + step;
        double actual = -std::numeric_limits<double>::infinity();
        if (eval(xt, ft)) {
          actual = phi0 - 0.5 * ft.squaredNorm();
        } else {
          domain_hit = true;
        }
        const double rho = predicted > 0.0 ? actual / predicted : -1.0;
        if (rho > 1e-4) {
          x = xt;
          f = ft;
          moved = true;
          ++dogleg_steps;
          if (rho > 0.75) radius = std::max(radius, 2.0 * step.norm());
          break;
        }
        radius = 0.25 * std::min(radius, step.norm());
        if (radius < 1e-15 * std::max(1.0, x.norm())) break;
      }
    }
    if (!moved) break;
  }
  const bool near_edge = sys.probability_system &&
                         ((best.array() < 1e-6).any() || (best.array() > 1.0 - 1e-6).any());
  throw SolverError("nonlinear system did not converge", std::vector<double>(best.data(), best.data() + n),
                    best_res, domain_hit || near_edge);
}

}  // namespace mdam
