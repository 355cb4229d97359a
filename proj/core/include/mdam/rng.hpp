#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>

namespace mdam {

/// Seeded pseudo-random stream. Substreams are derived from a master seed and a
/// textual label, so every random decision in a run can be traced back to
/// `(master seed, label)` and reproduced independently of execution order.
class Rng {
 public:
  using engine_type = std::mt19937_64;

  explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

  /// Independent stream for `label` under `master`.
  static Rng substream(std::uint64_t master, std::string_view label);
  /// Child stream of this stream's seed (not its current state).
  Rng child(std::string_view label) const { return substream(seed_, label); }

  std::uint64_t seed() const noexcept { return seed_; }
  engine_type& engine() noexcept { return engine_; }

  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(engine_); }
  double normal(double mean, double sd) { return mean + sd * normal(); }
  double chi_squared(double df) { return std::chi_squared_distribution<double>(df)(engine_); }
  bool bernoulli(double p) { return uniform() < p; }
  /// Uniform index in [0, n).
  std::size_t index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }
  /// Index drawn proportionally to nonnegative `weights` (at least one positive).
  std::size_t categorical(std::span<const double> weights);

 private:
  std::uint64_t seed_;
  engine_type engine_;
};

/// Stable 64-bit mix of a seed and a label (SplitMix64 over FNV-1a).
std::uint64_t derive_seed(std::uint64_t master, std::string_view label);

}  // namespace mdam
