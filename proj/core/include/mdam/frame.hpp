#pragma once

// Data model: schemas, sampled frames, (partially) completed datasets and
// auxiliary population margins, plus CSV ingestion and validation.

#include <cmath>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mdam {

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();
inline bool is_missing(double v) noexcept { return std::isnan(v); }

enum class VariableKind { categorical, continuous };

struct VariableSpec {
  std::string name;
  VariableKind kind = VariableKind::categorical;
  int levels = 2;  // categorical codes are 1..levels
  double lo = 0.0;
  double hi = 0.0;
  bool in_margins = false;
  // Optional text labels for codes 1..levels, used by CSV ingestion.
  std::vector<std::string> labels;

  static VariableSpec categorical(std::string name, int levels, bool in_margins = false);
  static VariableSpec continuous(std::string name, double lo, double hi);

  bool is_categorical() const noexcept { return kind == VariableKind::categorical; }
  bool admits(double value) const noexcept;
  /// Parses a CSV token (integer code or label). Throws ValidationError.
  double parse_value(std::string_view token) const;
  std::string format_value(double value) const;
};

struct Schema {
  std::vector<VariableSpec> variables;
  // Always-observed design columns (size measures, strata). Retained for unit nonrespondents.
  std::vector<std::string> design_variables;

  std::size_t size() const noexcept { return variables.size(); }
  std::optional<std::size_t> find(std::string_view name) const;
  std::size_t index_of(std::string_view name) const;  // throws ValidationError
  std::optional<std::size_t> find_design(std::string_view name) const;
  /// Indices of variables with known margins, in schema order.
  std::vector<std::size_t> margined() const;
  std::vector<std::size_t> unmargined() const;
  /// Throws ValidationError on a malformed schema.
  void check() const;
};

/// A probability sample with unit and item nonresponse. Values are stored
/// column-wise, `values[j][i]` for variable j and unit i; missing cells are NaN.
struct SampleFrame {
  Schema schema;
  double population_size = 0.0;
  std::vector<double> weights;           // design weights 1/pi_i
  std::vector<std::uint8_t> unit_nr;     // U_i
  std::vector<std::vector<double>> values;
  std::vector<std::vector<double>> design;  // per schema.design_variables

  std::size_t size() const noexcept { return weights.size(); }
  double inclusion_prob(std::size_t i) const { return 1.0 / weights[i]; }
  bool respondent(std::size_t i) const { return unit_nr[i] == 0; }
  /// R_ij; only meaningful for respondents.
  bool item_missing(std::size_t i, std::size_t j) const {
    return respondent(i) && is_missing(values[j][i]);
  }
  std::size_t respondent_count() const;
  std::size_t nonrespondent_count() const { return size() - respondent_count(); }
};

enum class CellSource : std::uint8_t { observed, item_imputed, unit_imputed };

/// One copy of the sample with imputations. Partially completed copies keep
/// NaN in cells not yet imputed (unit nonrespondents before margin/hot-deck steps).
struct CompletedDataset {
  std::shared_ptr<const SampleFrame> source;
  std::vector<std::vector<double>> values;
  std::vector<std::vector<CellSource>> provenance;

  static CompletedDataset from_frame(std::shared_ptr<const SampleFrame> frame);

  std::size_t size() const noexcept { return source->size(); }
  const Schema& schema() const noexcept { return source->schema; }
  double value(std::size_t j, std::size_t i) const { return values[j][i]; }
  void impute(std::size_t j, std::size_t i, double v, CellSource how) {
    values[j][i] = v;
    provenance[j][i] = how;
  }
  bool is_complete() const;
  bool operator==(const CompletedDataset& other) const;
};

struct VariableMargin {
  std::string variable;
  std::vector<double> totals;     // T_jc, c = 1..m_j
  std::vector<double> variances;  // V_jc; NaN = not supplied, resolve with the Poisson default
};

struct AuxiliaryMargins {
  std::vector<VariableMargin> margins;

  const VariableMargin* find(std::string_view variable) const;
  VariableMargin* find(std::string_view variable);
  const VariableMargin& at(std::string_view variable) const;  // throws ValidationError
  bool has_unresolved_variances() const;
};

struct ValidationReport {
  std::vector<std::string> issues;
  bool ok() const noexcept { return issues.empty(); }
  std::string summary() const;
};

struct LoadOptions {
  double population_size = 0.0;
  char delimiter = ',';
  bool completed = false;  // accept values on unit_nr = 1 rows (imputed output)
};

SampleFrame read_sample(std::istream& in, const Schema& schema, const LoadOptions& options);
SampleFrame load_sample(const std::string& path, const Schema& schema, const LoadOptions& options);
void write_sample(std::ostream& out, const SampleFrame& frame);
void write_completed(std::ostream& out, const CompletedDataset& data);
void save_completed(const std::string& path, const CompletedDataset& data);

/// Margins CSV: columns variable, level, total, variance (variance may be blank).
AuxiliaryMargins read_margins(std::istream& in, const Schema& schema);
AuxiliaryMargins load_margins(const std::string& path, const Schema& schema);
void write_margins(std::ostream& out, const AuxiliaryMargins& margins, const Schema& schema);

ValidationReport validate(const SampleFrame& frame);
ValidationReport validate(const SampleFrame& frame, const AuxiliaryMargins& margins);
/// Checks a completed dataset against its source frame: observed cells
/// unchanged, every cell filled and within its variable's support.
ValidationReport validate(const CompletedDataset& data);

enum class WeightMode { design, fabricated };

/// Weights used for imputation and estimation. Fabricated mode keeps design
/// weights for respondents and gives every unit nonrespondent the constant
/// (N - sum of respondent design weights) / #nonrespondents, so the vector sums to N.
std::vector<double> ht_weight_view(const SampleFrame& frame, WeightMode mode);

}  // namespace mdam
