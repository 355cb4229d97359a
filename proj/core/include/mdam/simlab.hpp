#pragma once

// Monte Carlo study harness: synthetic population, Poisson sampling, unit and
// item nonresponse mechanisms, and replicate orchestration of all methods.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "mdam/estimate.hpp"
#include "mdam/frame.hpp"
#include "mdam/pipeline.hpp"
#include "mdam/rng.hpp"

namespace mdam {

/// One step of the sequential generator. Binary variables use a logistic link
/// (P(code 1) = expit(eta)); continuous variables are Normal(eta, sd), or
/// exp(Normal(eta, sd)) when `log_scale`, clipped to [lo, hi].
struct GeneratorEquation {
  std::string name;
  bool binary = true;
  double lo = 0.0;
  double hi = 0.0;
  bool log_scale = false;
  double intercept = 0.0;
  double size_coef = 0.0;     // on standardised log z
  std::vector<double> prev;   // one per earlier variable (0/1 value for binaries)
  double sd = 1.0;
};

struct PopulationConfig {
  std::size_t population_size = 100000;
  /// z = clamp(exp(size_log_mean + size_log_sd * e), size_lo, size_hi), e ~ N(0,1).
  double size_log_mean = 2.347585;  // log(10) + 0.3^2 / 2: mean(1/z) = 0.1, E[n] ~ N/100
  double size_log_sd = 0.3;
  double size_lo = 0.1;
  double size_hi = 1e6;
  std::vector<GeneratorEquation> equations;
  std::vector<std::string> margined{"X1", "X2"};

  static PopulationConfig defaults();
  void check() const;  // ValidationError
  Schema schema() const;
};

struct Population {
  Schema schema;
  std::vector<double> size;       // z_i
  std::vector<double> inclusion;  // pi_i = min(1, 1 / (10 z_i))
  std::vector<std::vector<double>> values;

  std::size_t size_n() const noexcept { return size.size(); }
  double expected_sample_size() const;
};

/// 0/1 value for binaries (code 1 -> 1), the raw value otherwise.
double model_value(const VariableSpec& v, double stored);

Population synth_population(const PopulationConfig& config, Rng& rng);

/// Independent Bernoulli(pi_i) inclusion; weights 1/pi_i and design column "Z".
SampleFrame poisson_sample(const Population& pop, Rng& rng);

struct NonresponseConfig {
  // Unit: logit P(U = 1) = omega[0] + sum_k omega[k] x_{unit_vars[k-1]}.
  std::vector<double> omega{-1.6, 0.5, 0.5};
  std::vector<std::string> unit_vars{"X1", "X2"};
  // Item: logit P(R_j = 1) = phi0[j] + sum_{k != j} phi[j][k] x_k + phi_z z.
  std::vector<double> phi0;
  std::vector<std::vector<double>> phi;
  double phi_z = 1e-5;

  /// phi0 = -1.6 for the first four variables and -1.5 after; phi_jk = 0.1 for
  /// k among the first four, 1e-4 after.
  static NonresponseConfig defaults(std::size_t variables);
  void check(const Schema& schema) const;
};

/// Marks unit nonrespondents and blanks their survey values (weights and design kept).
/// Returns the realised inverse-logit probabilities.
std::vector<double> apply_unit_nonresponse(SampleFrame& sample, const NonresponseConfig& nr, Rng& rng);

/// Linear predictor for R_j of one record; reads every variable except `j`.
double item_nonresponse_logit(const NonresponseConfig& nr, const Schema& schema, std::size_t j,
                              std::span<const double> record, double z);

/// Draws every R_ij for respondents from the intact values first, then blanks.
void apply_item_nonresponse(SampleFrame& sample, const NonresponseConfig& nr, Rng& rng);

struct StudyConfig {
  std::size_t replicates = 200;
  std::vector<Method> methods{Method::adj, Method::sys, Method::yr, Method::ih};
  std::uint64_t seed = 20240601;
  std::vector<std::string> estimands;  // empty = default_estimands()
  ItemImputationSpec items;
  WorkingMode mode = WorkingMode::logistic_on_z;
  double failure_cap = 0.02;
  unsigned threads = 1;

  static std::vector<std::string> default_estimands();
  void check() const;
};

struct ReplicateRecord {
  std::size_t replicate = 0;
  Method method = Method::adj;
  std::string estimand;
  double truth = 0.0;
  CombinedEstimate estimate;
  double weight_sum = 0.0;
  std::size_t sample_size = 0;
  std::size_t unit_nonrespondents = 0;
};

struct MetricRow {
  Method method = Method::adj;
  std::string estimand;
  ReplicateMetrics metrics;
};

struct ReplicateFailure {
  std::size_t replicate = 0;
  std::string message;
};

struct StudyResult {
  std::vector<ReplicateRecord> records;  // replicate, then method, then estimand order
  std::vector<MetricRow> metrics;        // method, then estimand order
  std::vector<ReplicateFailure> failures;
  std::vector<Estimand> estimands;
  double population_size = 0.0;
  double mean_sample_size = 0.0;
  double unit_nr_rate = 0.0;
  std::vector<double> item_nr_rate;  // per variable, among respondents
};

/// One replicate's sample with nonresponse applied; substream "replicate/<r>".
SampleFrame draw_replicate(const Population& pop, const NonresponseConfig& nr, std::uint64_t seed, std::size_t r);

StudyResult run_study(const StudyConfig& study, const PopulationConfig& pop_config, const NonresponseConfig& nr);
StudyResult run_study(const StudyConfig& study, const Population& pop, const NonresponseConfig& nr);

/// Population totals of each margined variable, with NaN (defaulted) variances.
AuxiliaryMargins population_margins(const Population& pop);

void write_records_csv(std::ostream& out, const StudyResult& result);
void write_metrics_csv(std::ostream& out, const std::vector<MetricRow>& rows);
std::vector<MetricRow> read_metrics_csv(std::istream& in);

}  // namespace mdam
