#pragma once

// Shared fixtures for the unit tests.

#include <algorithm>
#include <cmath>
#include <memory>
#include <vector>

#include "mdam/frame.hpp"
#include "mdam/rng.hpp"
#include "mdam/simlab.hpp"

namespace mdam::test {

/// X1, X2 binary and margined, X3 three-level, Y continuous on [0, 100]; design column Z.
inline Schema toy_schema() {
  Schema s;
  s.variables.push_back(VariableSpec::categorical("X1", 2, true));
  s.variables.push_back(VariableSpec::categorical("X2", 2, true));
  s.variables.push_back(VariableSpec::categorical("X3", 3));
  s.variables.push_back(VariableSpec::continuous("Y", 0.0, 100.0));
  s.design_variables = {"Z"};
  return s;
}

inline double expit(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct ToyOptions {
  std::size_t n = 400;
  double unit_nr = 0.25;  // MCAR unit nonresponse rate
  double item_nr = 0.15;  // MCAR item nonresponse rate among respondents
  bool mnar = false;      // unit nonresponse depends on X1, X2
};

/// Random toy sample: weights in [5, 25], correlated X1 -> X2 -> X3 -> Y.
inline SampleFrame toy_frame(std::uint64_t seed, const ToyOptions& o = {}) {
  Rng rng(seed);
  SampleFrame f;
  f.schema = toy_schema();
  f.values.assign(4, {});
  f.design.assign(1, {});
  double wsum = 0.0;
  for (std::size_t i = 0; i < o.n; ++i) {
    const double z = 0.5 + rng.uniform();
    const double w = 5.0 + 20.0 * rng.uniform();
    wsum += w;
    const double x1 = rng.bernoulli(expit(-0.3 + 0.8 * (z - 1.0))) ? 1 : 2;
    const double x2 = rng.bernoulli(expit(x1 == 1 ? 0.6 : -0.9)) ? 1 : 2;
    const double u = rng.uniform();
    const double x3 = u < (x2 == 1 ? 0.5 : 0.2) ? 1 : (u < 0.8 ? 2 : 3);
    const double y = std::clamp(40.0 + 8.0 * (x1 == 1) - 5.0 * (x3 == 3) + 10.0 * rng.normal(), 0.0, 100.0);
    f.weights.push_back(w);
    f.design[0].push_back(z);
    const double pu = o.mnar ? expit(-1.6 + 0.9 * (x1 == 1) + 0.9 * (x2 == 1)) : o.unit_nr;
    const bool unr = rng.bernoulli(pu);
    f.unit_nr.push_back(unr ? 1 : 0);
    const double vals[4] = {x1, x2, x3, y};
    for (std::size_t j = 0; j < 4; ++j) {
      if (unr || rng.bernoulli(o.item_nr)) {
        f.values[j].push_back(kMissing);
      } else {
        f.values[j].push_back(vals[j]);
      }
    }
  }
  f.population_size = std::ceil(wsum);
  return f;
}

/// Margins consistent with N for X1 and X2, with explicit variances.
inline AuxiliaryMargins toy_margins(const SampleFrame& f, double p1 = 0.45, double p2 = 0.4) {
  const double n = f.population_size;
  AuxiliaryMargins m;
  m.margins.push_back({"X1", {std::round(p1 * n), n - std::round(p1 * n)}, {kMissing, kMissing}});
  m.margins.push_back({"X2", {std::round(p2 * n), n - std::round(p2 * n)}, {kMissing, kMissing}});
  return m;
}

/// Desk-scale population shrunk for fast tests.
inline PopulationConfig small_population(std::size_t n = 20000, double expected_sample = 1000.0) {
  auto c = PopulationConfig::defaults();
  c.population_size = n;
  // mean(1/z) = expected_sample * 10 / N
  c.size_log_mean = std::log(static_cast<double>(n) / (10.0 * expected_sample)) + c.size_log_sd * c.size_log_sd / 2;
  return c;
}

inline std::shared_ptr<const SampleFrame> share(SampleFrame f) { return std::make_shared<const SampleFrame>(std::move(f)); }

}  // namespace mdam::test
