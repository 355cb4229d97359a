#pragma once

// Three-step completion of a sample: chained-equations item imputation among
// respondents, margin imputation of the margined variables for unit
// nonrespondents, then a hot deck for everything else.

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "mdam/frame.hpp"
#include "mdam/hotdeck.hpp"
#include "mdam/itemimp.hpp"
#include "mdam/marginimp.hpp"

namespace mdam {

enum class Method { adj, sys, yr, ih };

const char* to_string(Method m);
Method parse_method(std::string_view text);  // throws ValidationError

struct PipelineOptions {
  Method method = Method::adj;
  ItemImputationSpec items;
  /// Imputation order of margined variables; empty = schema order of `in_margins`.
  /// With sys, the second variable is solved given the first; later ones use adj.
  std::vector<std::string> margined;
  WorkingMode mode = WorkingMode::logistic_on_z;
  HotdeckOptions hotdeck;
  unsigned threads = 1;
};

/// Item-imputed datasets plus margins with every variance resolved. Computed
/// once and shared by all methods run on the same sample.
struct ItemStage {
  std::shared_ptr<const SampleFrame> frame;
  std::vector<CompletedDataset> datasets;
  AuxiliaryMargins margins;
  bool variances_defaulted = false;
  std::vector<std::string> substreams;
};

ItemStage impute_item_stage(std::shared_ptr<const SampleFrame> frame, AuxiliaryMargins margins,
                            const ItemImputationSpec& spec, std::uint64_t seed, unsigned threads = 1);

struct PipelineReport {
  Method method = Method::adj;
  std::uint64_t seed = 0;
  std::vector<std::string> margined;
  WorkingMode mode = WorkingMode::logistic_on_z;
  std::vector<std::string> substreams;
  std::vector<MarginDiagnostics> margins;
  std::vector<HotdeckDiagnostics> hotdeck;
  AuxiliaryMargins resolved_margins;
  double weight_sum = 0.0;
};

struct PipelineResult {
  std::vector<CompletedDataset> datasets;
  std::vector<double> weights;  // analysis weights (fabricated for yr)
  PipelineReport report;
};

/// Steps two and three for one method.
PipelineResult complete_units(const ItemStage& stage, const PipelineOptions& options, std::uint64_t seed);

/// All three steps. Validates the frame and margins first (ValidationError).
PipelineResult run_pipeline(std::shared_ptr<const SampleFrame> frame, const AuxiliaryMargins& margins,
                            const PipelineOptions& options, std::uint64_t seed);

}  // namespace mdam
