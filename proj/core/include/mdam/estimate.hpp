#pragma once

// Design-based estimation on completed data (Horvitz-Thompson totals and ratio
// probabilities under Poisson sampling), Rubin's combining rules, and replicate metrics.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mdam/frame.hpp"

namespace mdam {

struct VarLevel {
  std::size_t variable = 0;
  int level = 0;  // 0 for a continuous total
};

enum class EstimandKind { total, conditional_prob, joint_prob };

struct Estimand {
  std::string name;
  EstimandKind kind = EstimandKind::total;
  std::vector<VarLevel> target;      // total: exactly one; joint: the conjunction
  std::vector<VarLevel> conditions;  // conditional_prob only
  std::optional<double> truth;

  /// Text forms: "total:X1=1", "total:X5", "cond:X2=1|X1=1", "joint:X1=1,X2=1".
  static Estimand parse(std::string_view text, const Schema& schema);
  /// Throws ValidationError if a variable or level does not exist in `schema`.
  void check(const Schema& schema) const;
};

struct PointVariance {
  double estimate = 0.0;
  double variance = 0.0;
};

/// sum_i w_i I(x_ij = c), variance sum_i w_i (w_i - 1) I(x_ij = c). Continuous
/// variables (level 0) use y_ij and y_ij^2.
PointVariance ht_total(const CompletedDataset& data, std::span<const double> weights, std::size_t variable,
                       int level);

/// Survey-weighted ratio estimate of P(target | conditions) with a Taylor-linearised
/// Poisson-design variance. Empty `conditions` gives the joint probability over all units.
PointVariance ratio_prob(const CompletedDataset& data, std::span<const double> weights,
                         std::span<const VarLevel> target, std::span<const VarLevel> conditions);

PointVariance estimate(const CompletedDataset& data, std::span<const double> weights, const Estimand& e);

/// Population value of `e` over fully observed records (values[j][i], no weights).
double population_value(const std::vector<std::vector<double>>& values, const Estimand& e);

struct CombinedEstimate {
  double qbar = 0.0;
  double ubar = 0.0;
  double b = 0.0;
  double total_variance = 0.0;
  double df = 0.0;  // +inf when b == 0
  double lower = 0.0;
  double upper = 0.0;
  bool contains(double q) const noexcept { return lower <= q && q <= upper; }
};

/// Rubin's rules with the original (L-1)(1 + 1/r)^2 reference degrees of freedom.
CombinedEstimate rubin_combine(std::span<const PointVariance> per_dataset);

/// Two-sided 97.5% Student-t quantile; the normal quantile for infinite df.
double t_quantile_975(double df);

struct ReplicateMetrics {
  std::size_t replicates = 0;
  double truth = 0.0;
  double rmse = 0.0;
  std::optional<double> rrmse;  // empty when truth == 0
  double coverage = 0.0;
  double mean_bias = 0.0;
  double mean_width = 0.0;
  double mean_estimate = 0.0;
  double sd_estimate = 0.0;
};

ReplicateMetrics evaluate_replicates(std::span<const CombinedEstimate> replicates, double truth);

}  // namespace mdam
