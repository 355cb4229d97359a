#pragma once

// Random hot deck for the variables without margins: every unit nonrespondent
// copies all remaining variables jointly from one respondent sharing its
// margined-value pattern.

#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "mdam/frame.hpp"
#include "mdam/rng.hpp"

namespace mdam {

struct DonorIndex {
  std::vector<std::size_t> match;  // matching variables, in order
  std::map<std::vector<int>, std::vector<std::size_t>> buckets;

  std::size_t bucket_count() const noexcept { return buckets.size(); }
  /// Respondent indices with `pattern`; empty span if none.
  std::span<const std::size_t> donors(const std::vector<int>& pattern) const;
};

/// Partitions respondents by their (completed) values of `match`.
DonorIndex build_index(const CompletedDataset& data, std::span<const std::size_t> match);

struct HotdeckOptions {
  bool weighted_donors = false;  // draw donors proportional to design weight
};

enum class DonorLevel : std::uint8_t { exact, dropped_last, any };

struct HotdeckDiagnostics {
  std::size_t dataset = 0;
  std::size_t exact = 0;
  std::size_t dropped_last = 0;
  std::size_t any = 0;
  std::vector<std::size_t> donor;     // per unit nonrespondent (frame order)
  std::vector<DonorLevel> level;
  std::string substream;
};

struct HotdeckResult {
  std::vector<CompletedDataset> datasets;
  std::vector<HotdeckDiagnostics> diagnostics;
};

/// One dataset. Variables outside `match` are copied from the chosen donor.
/// With an empty `match` this is whole-record resampling with replacement.
CompletedDataset hotdeck_one(const CompletedDataset& data, std::span<const std::size_t> match, Rng& rng,
                             const HotdeckOptions& options = {}, HotdeckDiagnostics* diag = nullptr);

/// Dataset l uses substream "hotdeck/<l>" of `seed`.
HotdeckResult hotdeck_impute(const std::vector<CompletedDataset>& datasets, std::span<const std::size_t> match,
                             std::uint64_t seed, unsigned threads = 1, const HotdeckOptions& options = {});

}  // namespace mdam
