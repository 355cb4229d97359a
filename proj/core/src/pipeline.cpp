#include "mdam/pipeline.hpp"

#include <numeric>

#include "mdam/error.hpp"

namespace mdam {

const char* to_string(Method m) {
  switch (m) {
    case Method::adj: return "adj";
    case Method::sys: return "sys";
    case Method::yr: return "yr";
    case Method::ih: return "ih";
  }
  return "?";
}

Method parse_method(std::string_view text) {
  if (text == "adj") return Method::adj;
  if (text == "sys") return Method::sys;
  if (text == "yr") return Method::yr;
  if (text == "ih") return Method::ih;
  throw ValidationError("unknown method '" + std::string(text) + "' (expected adj, sys, yr or ih)");
}

ItemStage impute_item_stage(std::shared_ptr<const SampleFrame> frame, AuxiliaryMargins margins,
                            const ItemImputationSpec& spec, std::uint64_t seed, unsigned threads) {
  ItemStage st;
  st.frame = frame;
  st.datasets = impute_items(frame, spec, seed, threads);
  for (int l = 0; l < spec.datasets; ++l) st.substreams.push_back("item/chain/" + std::to_string(l));
  if (margins.has_unresolved_variances()) {
    const auto aux = auxiliary_completion(*frame, spec, seed);
    resolve_default_variances(margins, aux, frame->weights);
    st.variances_defaulted = true;
    st.substreams.push_back("auxiliary");
  }
  st.margins = std::move(margins);
  return st;
}

namespace {

std::vector<std::size_t> margin_order(const Schema& schema, const std::vector<std::string>& names) {
  if (names.empty()) return schema.margined();
  std::vector<std::size_t> out;
  for (const auto& n : names) {
    const auto j = schema.index_of(n);
    if (!schema.variables[j].is_categorical()) {
      throw ValidationError("margined variable '" + n + "' must be categorical");
    }
    out.push_back(j);
  }
  return out;
}

}  // namespace

PipelineResult complete_units(const ItemStage& stage, const PipelineOptions& options, std::uint64_t seed) {
  const SampleFrame& frame = *stage.frame;
  PipelineResult res;
  auto& rep = res.report;
  rep.method = options.method;
  rep.seed = seed;
  rep.substreams = stage.substreams;
  rep.resolved_margins = stage.margins;

  const bool use_margins = options.method != Method::ih;
  const auto order = use_margins ? margin_order(frame.schema, options.margined) : std::vector<std::size_t>{};
  for (auto j : order) {
    rep.margined.push_back(frame.schema.variables[j].name);
    stage.margins.at(frame.schema.variables[j].name);
  }
  rep.mode = options.method == Method::yr ? WorkingMode::intercept_only : options.mode;
  res.weights = ht_weight_view(frame, options.method == Method::yr ? WeightMode::fabricated : WeightMode::design);
  rep.weight_sum = std::accumulate(res.weights.begin(), res.weights.end(), 0.0);

  std::vector<CompletedDataset> data = stage.datasets;
  if (frame.nonrespondent_count() > 0) {
    for (std::size_t k = 0; k < order.size(); ++k) {
      const std::span<const std::size_t> prev(order.data(), k);
      ImputeResult step;
      if (options.method == Method::sys && k == 1) {
        step = impute_margin_sys(data, order[1], order[0], stage.margins, res.weights, rep.mode, seed,
                                 options.threads);
      } else {
        step = impute_margin_adj(data, order[k], prev, stage.margins, res.weights, rep.mode, seed,
                                 options.threads);
        if (options.method == Method::yr) {
          for (auto& d : step.diagnostics) d.method = "yr";
        }
      }
      data = std::move(step.datasets);
      for (auto& d : step.diagnostics) {
        rep.substreams.insert(rep.substreams.end(), d.substreams.begin(), d.substreams.end());
        rep.margins.push_back(std::move(d));
      }
    }
    auto hd = hotdeck_impute(data, order, seed, options.threads, options.hotdeck);
    data = std::move(hd.datasets);
    for (auto& d : hd.diagnostics) {
      rep.substreams.push_back(d.substream);
      rep.hotdeck.push_back(std::move(d));
    }
  }
  res.datasets = std::move(data);
  return res;
}

PipelineResult run_pipeline(std::shared_ptr<const SampleFrame> frame, const AuxiliaryMargins& margins,
                            const PipelineOptions& options, std::uint64_t seed) {
  const auto report = options.method == Method::ih ? validate(*frame) : validate(*frame, margins);
  if (!report.ok()) throw ValidationError(report.summary());
  options.items.check(*frame);
  const auto stage = impute_item_stage(frame, options.method == Method::ih ? AuxiliaryMargins{} : margins,
                                       options.items, seed, options.threads);
  return complete_units(stage, options, seed);
}

}  // namespace mdam
