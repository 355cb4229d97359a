#pragma once

// Chained-equations multiple imputation of item nonresponse among unit respondents.

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "mdam/frame.hpp"
#include "mdam/regress.hpp"
#include "mdam/rng.hpp"

namespace mdam {

enum class ItemMethod { bayes_logistic, bayes_linear, pmm };

struct ItemImputationSpec {
  int datasets = 10;  // L
  int cycles = 10;
  /// Variable names; empty means schema order. Variables without item
  /// missingness are skipped either way.
  std::vector<std::string> visit_order;
  /// Per-variable override; default bayes_logistic (categorical) / bayes_linear (continuous).
  std::map<std::string, ItemMethod> methods;
  /// Per-variable predictor names; default is every other survey variable.
  std::map<std::string, std::vector<std::string>> predictors;
  bool include_design = true;   // design columns as predictors
  bool include_weight = false;  // log design weight as predictor
  int pmm_donors = 5;

  ItemMethod method_for(const VariableSpec& v) const;
  /// Throws ValidationError when L < 2, cycles < 1 or the visit order is not a
  /// permutation of the frame's variables with item missingness.
  void check(const SampleFrame& frame) const;
};

/// Rows are respondents in frame order; missing items replaced by a design-weighted
/// draw from the variable's observed respondent values.
CompletedDataset initial_fill(std::shared_ptr<const SampleFrame> frame, Rng& rng);

/// One sweep over the visit order. Only originally missing respondent cells change.
CompletedDataset chained_pass(const CompletedDataset& data, const ItemImputationSpec& spec, Rng& rng,
                              int cycle = 1);

/// L independent chains; chain l uses substream "item/chain/<l>" of `seed`.
/// Unit nonrespondents stay entirely missing.
std::vector<CompletedDataset> impute_items(std::shared_ptr<const SampleFrame> frame,
                                           const ItemImputationSpec& spec, std::uint64_t seed,
                                           unsigned threads = 1);

/// One chained-equations completion of every unit, treating unit nonrespondents
/// as respondents with all items missing. Used for default margin variances.
CompletedDataset auxiliary_completion(const SampleFrame& frame, const ItemImputationSpec& spec,
                                      std::uint64_t seed);

/// Conditioning design for imputing `target`: intercept, dummy-coded categorical
/// predictors (reference = last level), standardised continuous predictors,
/// optional design columns and log weight. Rows cover every unit.
Matrix predictor_design(const CompletedDataset& data, std::size_t target,
                        const ItemImputationSpec& spec);

}  // namespace mdam
