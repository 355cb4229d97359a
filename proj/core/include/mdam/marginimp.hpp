#pragma once

// Imputation of margined variables for unit nonrespondents so that completed-data
// Horvitz-Thompson totals match sampled plausible population totals in expectation.
//
//   adj  multiplicative adjustment of working probabilities, level by level
//   sys  solve constant-log-odds + total equations for P(X2 | X1), then impute
//   yr   adj under fabricated nonrespondent weights (see ht_weight_view)

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mdam/frame.hpp"
#include "mdam/regress.hpp"
#include "mdam/rng.hpp"

namespace mdam {

enum class WorkingMode { logistic_on_z, logistic_on_w, intercept_only, weighted_ratio };

const char* to_string(WorkingMode mode);
WorkingMode parse_working_mode(std::string_view text);

struct TargetTotalDraw {
  std::vector<double> totals;  // T-hat_c, c = 1..m; last level is N minus the rest
  std::uint64_t seed = 0;
  int redraws = 0;
};

/// Draws T-hat_c ~ N(T_c, V_c) for c < m and sets the last level by subtraction.
/// Negative totals trigger a redraw (up to 100), then NumericalError.
TargetTotalDraw sample_target_totals(const VariableMargin& margin, double population_size, Rng& rng);

/// Poisson-design unbiased variance of each level's HT total, computed on one
/// completed dataset: sum_i w_i (w_i - 1) I(x_ij = c). Fills only unresolved entries.
void resolve_default_variances(AuxiliaryMargins& margins, const CompletedDataset& completed,
                               std::span<const double> weights);

struct WorkingDistribution {
  std::vector<std::size_t> units;  // unit nonrespondents, frame order
  Matrix probs;                    // units.size() x m
  WorkingMode provenance = WorkingMode::intercept_only;
};

/// Fits the working model on respondents (case weights = `weights`) and evaluates
/// it at every unit nonrespondent. `conditioners` are previously imputed margined
/// variables; they enter every mode.
WorkingDistribution working_distribution(const CompletedDataset& data, std::size_t variable,
                                         std::span<const std::size_t> conditioners, WorkingMode mode,
                                         std::span<const double> weights);

struct AdjustmentFactors {
  std::vector<double> factors;         // f_c for c = 1..m (last used only on the renormalising path)
  std::vector<double> numerators;      // T-hat_c minus respondent HT total
  std::vector<double> denominators;    // sum over nonrespondents of w_i p_ic
  std::vector<bool> defined;           // false where denominator and numerator are both zero
};

AdjustmentFactors adjustment_factors(const WorkingDistribution& working, const CompletedDataset& data,
                                     std::span<const double> weights, const TargetTotalDraw& draw,
                                     std::size_t variable);

struct SafeguardCounts {
  std::size_t renormalized = 0;  // sum_{c<m} f_c p_ic > 1, all-level recomputation
  std::size_t clamped = 0;       // some adjusted probability was negative
  bool any() const noexcept { return renormalized + clamped > 0; }
};

struct AdjustedDistribution {
  WorkingDistribution dist;
  std::vector<std::uint8_t> renormalized;
  std::vector<std::uint8_t> clamped;
  SafeguardCounts counts;
};

/// Applies the factors to every unit's working vector. Throws NumericalError
/// ("infeasible adjustment") if a vector clamps to all zeros.
AdjustedDistribution finalize_probs(const WorkingDistribution& working, const AdjustmentFactors& factors);

/// Adjusts one probability vector with a factor vector of the same length; the
/// shared kernel behind finalize_probs and the unit-varying sys rescaling.
Vector adjust_vector(const Vector& p, std::span<const double> factors, bool& renormalized, bool& clamped);

/// Per-dataset record of what margin imputation did, for the run report.
struct MarginDiagnostics {
  std::string variable;
  std::size_t dataset = 0;
  std::string method;
  std::vector<double> target_totals;
  std::vector<double> factors;
  SafeguardCounts safeguards;
  int total_redraws = 0;
  // sys only
  std::optional<double> solver_residual;
  int solver_iterations = 0;
  int solver_dogleg_steps = 0;
  bool solution_clamped = false;
  bool continuity_corrected = false;
  std::vector<std::string> substreams;
};

struct ImputeResult {
  std::vector<CompletedDataset> datasets;
  std::vector<MarginDiagnostics> diagnostics;
};

/// Draws x*_ij for every unit nonrespondent of one dataset from an adjusted distribution.
CompletedDataset draw_imputations(const CompletedDataset& data, std::size_t variable,
                                  const WorkingDistribution& dist, Rng& rng);

/// MDAM-adj for one dataset with a given target-total draw.
CompletedDataset impute_variable_adj(const CompletedDataset& data, std::size_t variable,
                                     std::span<const std::size_t> conditioners,
                                     std::span<const double> weights, const TargetTotalDraw& draw,
                                     WorkingMode mode, Rng& rng, MarginDiagnostics* diag = nullptr);

/// MDAM-adj across L datasets. Dataset l uses substreams "margin/<l>/<var>/totals"
/// and "margin/<l>/<var>/draw" of `seed`.
ImputeResult impute_margin_adj(const std::vector<CompletedDataset>& datasets, std::size_t variable,
                               std::span<const std::size_t> conditioners, const AuxiliaryMargins& margins,
                               std::span<const double> weights, WorkingMode mode, std::uint64_t seed,
                               unsigned threads = 1);

/// Solved conditional table P(X2 = c | X1 = d) for unit nonrespondents.
struct ConditionalProbTable {
  int levels = 0;        // m2
  int conditions = 0;    // m1
  Matrix probs;          // m2 x m1, columns sum to 1
  double operator()(int c, int d) const { return probs(c - 1, d - 1); }
};

struct SysSystem {
  EquationSystem equations;
  int m2 = 0;
  int m1 = 0;
  Vector cell_weight;            // W_d: nonrespondent weight with x*_1 = d
  Vector respondent_totals;      // R_c: respondent HT total of X2 = c
  std::vector<double> targets;   // T-hat_c
  Matrix respondent_probs;       // m2 x m1, survey-weighted ratio estimates (after correction)
  bool continuity_corrected = false;

  /// Expands an unknown vector (c = 2..m2, d = 1..m1) into the full table.
  ConditionalProbTable table(const Vector& x) const;
  /// Unknown vector for a table.
  Vector unknowns(const ConditionalProbTable& t) const;
  /// Raw (unscaled) residuals: log-odds equations then total equations.
  Vector log_odds_residuals(const ConditionalProbTable& t) const;
  Vector total_residuals(const ConditionalProbTable& t) const;
};

SysSystem build_sys_system(const CompletedDataset& data, std::size_t x2, std::size_t x1,
                           std::span<const double> weights, const TargetTotalDraw& draw);

/// Clamps entries into [0,1] and renormalises each column. Returns true if anything changed.
bool clamp_table(ConditionalProbTable& table);

/// MDAM-sys for one dataset with a given draw.
CompletedDataset impute_variable_sys(const CompletedDataset& data, std::size_t x2, std::size_t x1,
                                     std::span<const double> weights, const TargetTotalDraw& draw,
                                     WorkingMode mode, Rng& rng, MarginDiagnostics* diag = nullptr);

ImputeResult impute_margin_sys(const std::vector<CompletedDataset>& datasets, std::size_t x2, std::size_t x1,
                               const AuxiliaryMargins& margins, std::span<const double> weights,
                               WorkingMode mode, std::uint64_t seed, unsigned threads = 1);

/// Fabricated weights for MDAM-yr; same contract as ht_weight_view(frame, fabricated).
std::vector<double> fabricated_weights(const SampleFrame& frame);

}  // namespace mdam
