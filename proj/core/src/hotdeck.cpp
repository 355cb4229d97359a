#include "mdam/hotdeck.hpp"

#include <string>

#include "mdam/error.hpp"
#include "mdam/parallel.hpp"

namespace mdam {

namespace {

std::vector<int> pattern_of(const CompletedDataset& data, std::span<const std::size_t> match, std::size_t i,
                            std::size_t len) {
  std::vector<int> key;
  key.reserve(len);
  for (std::size_t k = 0; k < len; ++k) {
    const double v = data.values[match[k]][i];
    if (is_missing(v)) {
      throw ValidationError("hot deck: '" + data.schema().variables[match[k]].name +
                            "' not imputed for unit " + std::to_string(i));
    }
    key.push_back(static_cast<int>(v));
  }
  return key;
}

DonorIndex build_prefix_index(const CompletedDataset& data, std::span<const std::size_t> match, std::size_t len) {
  DonorIndex idx;
  idx.match.assign(match.begin(), match.begin() + static_cast<std::ptrdiff_t>(len));
  const auto& f = *data.source;
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (f.respondent(i)) idx.buckets[pattern_of(data, match, i, len)].push_back(i);
  }
  return idx;
}

}  // namespace

std::span<const std::size_t> DonorIndex::donors(const std::vector<int>& pattern) const {
  auto it = buckets.find(pattern);
  if (it == buckets.end()) return {};
  return it->second;
}

DonorIndex build_index(const CompletedDataset& data, std::span<const std::size_t> match) {
  return build_prefix_index(data, match, match.size());
}

CompletedDataset hotdeck_one(const CompletedDataset& data, std::span<const std::size_t> match, Rng& rng,
                             const HotdeckOptions& options, HotdeckDiagnostics* diag) {
  const auto& f = *data.source;
  if (f.nonrespondent_count() == 0) return data;
  if (f.respondent_count() == 0) throw ValidationError("hot deck: no respondents to act as donors");

  const std::size_t k = match.size();
  std::vector<DonorIndex> ladder;
  ladder.push_back(build_prefix_index(data, match, k));
  if (k >= 1) ladder.push_back(build_prefix_index(data, match, k - 1));
  if (k >= 2) ladder.push_back(build_prefix_index(data, match, 0));

  std::vector<bool> copy(f.schema.size(), true);
  for (std::size_t j : match) copy[j] = false;

  CompletedDataset out = data;
  std::vector<double> w;
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (f.respondent(i)) continue;
    std::span<const std::size_t> pool;
    std::size_t step = 0;
    for (; step < ladder.size(); ++step) {
      pool = ladder[step].donors(pattern_of(data, match, i, ladder[step].match.size()));
      if (!pool.empty()) break;
    }
    if (pool.empty()) throw ValidationError("hot deck: donor fallback exhausted");
    std::size_t donor;
    if (options.weighted_donors) {
      w.resize(pool.size());
      for (std::size_t r = 0; r < pool.size(); ++r) w[r] = f.weights[pool[r]];
      donor = pool[rng.categorical(w)];
    } else {
      donor = pool[rng.index(pool.size())];
    }
    for (std::size_t j = 0; j < f.schema.size(); ++j) {
      if (copy[j]) out.impute(j, i, data.values[j][donor], CellSource::unit_imputed);
    }
    if (diag) {
      // k = 0 has a single (exact) rung; with k = 1 the second rung already matches nothing.
      const DonorLevel level = step == 0 ? DonorLevel::exact
                               : (step == 1 && k >= 2) ? DonorLevel::dropped_last
                                                       : DonorLevel::any;
      diag->donor.push_back(donor);
      diag->level.push_back(level);
      if (level == DonorLevel::exact) ++diag->exact;
      else if (level == DonorLevel::dropped_last) ++diag->dropped_last;
      else ++diag->any;
    }
  }
  return out;
}

HotdeckResult hotdeck_impute(const std::vector<CompletedDataset>& datasets, std::span<const std::size_t> match,
                             std::uint64_t seed, unsigned threads, const HotdeckOptions& options) {
  HotdeckResult res;
  res.datasets.resize(datasets.size());
  res.diagnostics.resize(datasets.size());
  parallel_for(datasets.size(), threads, [&](std::size_t l) {
    auto& diag = res.diagnostics[l];
    diag.dataset = l;
    diag.substream = "hotdeck/" + std::to_string(l);
    Rng rng = Rng::substream(seed, diag.substream);
    res.datasets[l] = hotdeck_one(datasets[l], match, rng, options, &diag);
  });
  return res;
}

}  // namespace mdam
