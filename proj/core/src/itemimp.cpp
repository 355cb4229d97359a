#include "mdam/itemimp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <string>

#include "mdam/error.hpp"
#include "mdam/parallel.hpp"

namespace mdam {

namespace {

bool has_item_missingness(const SampleFrame& f, std::size_t j) {
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (f.item_missing(i, j)) return true;
  }
  return false;
}

std::vector<std::size_t> resolve_order(const SampleFrame& f, const ItemImputationSpec& spec) {
  std::vector<std::size_t> order;
  if (spec.visit_order.empty()) {
    for (std::size_t j = 0; j < f.schema.size(); ++j) order.push_back(j);
  } else {
    for (const auto& name : spec.visit_order) order.push_back(f.schema.index_of(name));
  }
  std::erase_if(order, [&](std::size_t j) { return !has_item_missingness(f, j); });
  return order;
}

struct Standardiser {
  double center = 0.0;
  double scale = 1.0;
};

Standardiser fit_standardiser(const std::vector<double>& col, const SampleFrame& f) {
  double s = 0.0, ss = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < col.size(); ++i) {
    if (!f.respondent(i) || is_missing(col[i])) continue;
    s += col[i];
    ss += col[i] * col[i];
    ++n;
  }
  Standardiser st;
  if (n == 0) return st;
  st.center = s / static_cast<double>(n);
  const double var = ss / static_cast<double>(n) - st.center * st.center;
  st.scale = var > 1e-24 ? std::sqrt(var) : 1.0;
  return st;
}

}  // namespace

ItemMethod ItemImputationSpec::method_for(const VariableSpec& v) const {
  if (auto it = methods.find(v.name); it != methods.end()) return it->second;
  return v.is_categorical() ? ItemMethod::bayes_logistic : ItemMethod::bayes_linear;
}

void ItemImputationSpec::check(const SampleFrame& frame) const {
  if (datasets < 2) throw ValidationError("item imputation needs L >= 2 datasets");
  if (cycles < 1) throw ValidationError("item imputation needs >= 1 cycle");
  if (pmm_donors < 1) throw ValidationError("pmm needs >= 1 donor");
  if (!visit_order.empty()) {
    std::set<std::size_t> seen;
    for (const auto& name : visit_order) {
      if (!seen.insert(frame.schema.index_of(name)).second) {
        throw ValidationError("visit order lists '" + name + "' twice");
      }
    }
    for (std::size_t j = 0; j < frame.schema.size(); ++j) {
      if (has_item_missingness(frame, j) && !seen.count(j)) {
        throw ValidationError("visit order omits '" + frame.schema.variables[j].name + "'");
      }
    }
  }
  for (const auto& [name, method] : methods) {
    const auto& v = frame.schema.variables[frame.schema.index_of(name)];
    if (v.is_categorical() != (method == ItemMethod::bayes_logistic)) {
      throw ValidationError("imputation method for '" + name + "' does not match its kind");
    }
  }
}

Matrix predictor_design(const CompletedDataset& data, std::size_t target,
                        const ItemImputationSpec& spec) {
  const auto& f = *data.source;
  const auto& schema = f.schema;
  const std::size_t n = f.size();

  std::vector<std::size_t> preds;
  if (auto it = spec.predictors.find(schema.variables[target].name); it != spec.predictors.end()) {
    for (const auto& name : it->second) preds.push_back(schema.index_of(name));
  } else {
    for (std::size_t j = 0; j < schema.size(); ++j) {
      if (j != target) preds.push_back(j);
    }
  }

  std::size_t cols = 1;
  for (std::size_t j : preds) {
    const auto& v = schema.variables[j];
    cols += v.is_categorical() ? static_cast<std::size_t>(v.levels - 1) : 1;
  }
  if (spec.include_design) cols += f.design.size();
  if (spec.include_weight) cols += 1;

  Matrix X(n, cols);
  X.col(0).setOnes();
  Eigen::Index c = 1;
  for (std::size_t j : preds) {
    const auto& v = schema.variables[j];
    const auto& col = data.values[j];
    if (v.is_categorical()) {
      for (int level = 1; level < v.levels; ++level, ++c) {
        for (std::size_t i = 0; i < n; ++i) {
          X(i, c) = is_missing(col[i]) ? kMissing : (col[i] == level ? 1.0 : 0.0);
        }
      }
    } else {
      const auto st = fit_standardiser(col, f);
      for (std::size_t i = 0; i < n; ++i) X(i, c) = (col[i] - st.center) / st.scale;
      ++c;
    }
  }
  if (spec.include_design) {
    for (const auto& col : f.design) {
      const auto st = fit_standardiser(col, f);
      for (std::size_t i = 0; i < n; ++i) X(i, c) = (col[i] - st.center) / st.scale;
      ++c;
    }
  }
  if (spec.include_weight) {
    std::vector<double> lw(n);
    for (std::size_t i = 0; i < n; ++i) lw[i] = std::log(f.weights[i]);
    const auto st = fit_standardiser(lw, f);
    for (std::size_t i = 0; i < n; ++i) X(i, c) = (lw[i] - st.center) / st.scale;
    ++c;
  }
  return X;
}

CompletedDataset initial_fill(std::shared_ptr<const SampleFrame> frame, Rng& rng) {
  const auto& f = *frame;
  if (f.respondent_count() == 0) throw ValidationError("item imputation needs at least one respondent");
  CompletedDataset data = CompletedDataset::from_frame(frame);
  for (std::size_t j = 0; j < f.schema.size(); ++j) {
    if (!has_item_missingness(f, j)) continue;
    std::vector<double> donors, weights;
    for (std::size_t i = 0; i < f.size(); ++i) {
      if (f.respondent(i) && !is_missing(f.values[j][i])) {
        donors.push_back(f.values[j][i]);
        weights.push_back(f.weights[i]);
      }
    }
    if (donors.empty()) {
      throw ValidationError("variable '" + f.schema.variables[j].name + "': no observed donors");
    }
    for (std::size_t i = 0; i < f.size(); ++i) {
      if (f.item_missing(i, j)) data.impute(j, i, donors[rng.categorical(weights)], CellSource::item_imputed);
    }
  }
  return data;
}

CompletedDataset chained_pass(const CompletedDataset& data, const ItemImputationSpec& spec, Rng& rng,
                              int cycle) {
  const auto& f = *data.source;
  CompletedDataset out = data;
  for (std::size_t j : resolve_order(f, spec)) {
    const auto& var = f.schema.variables[j];
    std::vector<std::size_t> obs, mis;
    for (std::size_t i = 0; i < f.size(); ++i) {
      if (!f.respondent(i)) continue;
      (is_missing(f.values[j][i]) ? mis : obs).push_back(i);
    }
    if (mis.empty()) continue;
    if (obs.empty()) throw ValidationError("variable '" + var.name + "': no observed donors");

    try {
      const Matrix X = predictor_design(out, j, spec);
      Matrix xo(obs.size(), X.cols());
      for (std::size_t r = 0; r < obs.size(); ++r) xo.row(r) = X.row(obs[r]);
      const std::vector<double> unit(obs.size(), 1.0);

      switch (spec.method_for(var)) {
        case ItemMethod::bayes_logistic: {
          // Fit on the levels actually observed; absent levels get zero probability.
          std::vector<int> present;
          std::vector<int> remap(var.levels + 1, 0);
          for (std::size_t i : obs) remap[static_cast<int>(f.values[j][i])] = 1;
          for (int level = 1; level <= var.levels; ++level) {
            if (remap[level]) {
              present.push_back(level);
              remap[level] = static_cast<int>(present.size());
            }
          }
          if (present.size() == 1) {
            for (std::size_t i : mis) out.impute(j, i, present[0], CellSource::item_imputed);
            break;
          }
          std::vector<int> y(obs.size());
          for (std::size_t r = 0; r < obs.size(); ++r) y[r] = remap[static_cast<int>(f.values[j][obs[r]])];
          const auto fit = fit_logistic(xo, y, static_cast<int>(present.size()), unit);
          const auto draw = draw_params(fit, rng);
          std::vector<double> row(X.cols());
          for (std::size_t i : mis) {
            for (Eigen::Index k = 0; k < X.cols(); ++k) row[k] = X(i, k);
            const Vector probs = predict_proba(draw.coefficients, row);
            const auto k = rng.categorical(std::span<const double>(probs.data(), probs.size()));
            out.impute(j, i, present[k], CellSource::item_imputed);
          }
          break;
        }
        case ItemMethod::bayes_linear: {
          std::vector<double> y(obs.size());
          for (std::size_t r = 0; r < obs.size(); ++r) y[r] = f.values[j][obs[r]];
          const auto fit = fit_linear(xo, y, unit);
          const auto draw = draw_params(fit, rng);
          for (std::size_t i : mis) {
            const double mean = X.row(i).dot(draw.coefficients.row(0));
            const double v = std::clamp(mean + draw.residual_sd * rng.normal(), var.lo, var.hi);
            out.impute(j, i, v, CellSource::item_imputed);
          }
          break;
        }
        case ItemMethod::pmm: {
          std::vector<double> y(obs.size());
          for (std::size_t r = 0; r < obs.size(); ++r) y[r] = f.values[j][obs[r]];
          const auto fit = fit_linear(xo, y, unit);
          const auto draw = draw_params(fit, rng);
          const Vector yhat_obs = xo * fit.coefficients;
          std::vector<std::size_t> idx(obs.size());
          const auto k = std::min<std::size_t>(static_cast<std::size_t>(spec.pmm_donors), obs.size());
          for (std::size_t i : mis) {
            const double target = X.row(i).dot(draw.coefficients.row(0));
            std::iota(idx.begin(), idx.end(), std::size_t{0});
            std::partial_sort(idx.begin(), idx.begin() + k, idx.end(), [&](std::size_t a, std::size_t b) {
              const double da = std::abs(yhat_obs[a] - target);
              const double db = std::abs(yhat_obs[b] - target);
              return da < db || (da == db && a < b);
            });
            out.impute(j, i, y[idx[rng.index(k)]], CellSource::item_imputed);
          }
          break;
        }
      }
    } catch (const NumericalError& e) {
      throw NumericalError("item imputation of '" + var.name + "', cycle " + std::to_string(cycle) +
                           ": " + e.what());
    }
  }
  return out;
}

std::vector<CompletedDataset> impute_items(std::shared_ptr<const SampleFrame> frame,
                                           const ItemImputationSpec& spec, std::uint64_t seed,
                                           unsigned threads) {
  spec.check(*frame);
  std::vector<CompletedDataset> out(static_cast<std::size_t>(spec.datasets));
  parallel_for(out.size(), threads, [&](std::size_t l) {
    Rng rng = Rng::substream(seed, "item/chain/" + std::to_string(l));
    CompletedDataset data = initial_fill(frame, rng);
    for (int c = 1; c <= spec.cycles; ++c) data = chained_pass(data, spec, rng, c);
    out[l] = std::move(data);
  });
  return out;
}

CompletedDataset auxiliary_completion(const SampleFrame& frame, const ItemImputationSpec& spec,
                                      std::uint64_t seed) {
  auto all = std::make_shared<SampleFrame>(frame);
  std::fill(all->unit_nr.begin(), all->unit_nr.end(), std::uint8_t{0});
  ItemImputationSpec s = spec;
  s.visit_order.clear();
  Rng rng = Rng::substream(seed, "auxiliary");
  CompletedDataset data = initial_fill(all, rng);
  for (int c = 1; c <= s.cycles; ++c) data = chained_pass(data, s, rng, c);
  return data;
}

}  // namespace mdam
