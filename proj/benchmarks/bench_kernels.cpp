#include <benchmark/benchmark.h>

#include "mdam/marginimp.hpp"
#include "mdam/pipeline.hpp"
#include "mdam/regress.hpp"
#include "mdam/simlab.hpp"
#include "support.hpp"

using namespace mdam;

namespace {

void BM_FitLogistic(benchmark::State& state) {
  const auto n = static_cast<int>(state.range(0));
  const int m = static_cast<int>(state.range(1));
  Rng rng(1);
  Matrix x(n, 4);
  std::vector<int> y(n);
  std::vector<double> w(n);
  for (int i = 0; i < n; ++i) {
    x(i, 0) = 1.0;
    for (int k = 1; k < 4; ++k) x(i, k) = rng.normal();
    y[i] = 1 + static_cast<int>(rng.index(static_cast<std::size_t>(m)));
    w[i] = 1.0 + 20.0 * rng.uniform();
  }
  for (auto _ : state) benchmark::DoNotOptimize(fit_logistic(x, y, m, w));
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_FitLogistic)->Args({1000, 2})->Args({1000, 4})->Args({10000, 2});

void BM_SolveSys(benchmark::State& state) {
  test::ToyOptions o;
  o.n = 1000;
  o.item_nr = 0.0;
  o.mnar = true;
  const auto frame = test::share(test::toy_frame(3, o));
  auto data = CompletedDataset::from_frame(frame);
  Rng rng(2);
  const double N = frame->population_size;
  TargetTotalDraw d1, d2;
  d1.totals = {0.45 * N, 0.55 * N};
  d2.totals = {0.4 * N, 0.6 * N};
  data = impute_variable_adj(data, 0, {}, frame->weights, d1, WorkingMode::logistic_on_z, rng);
  const auto sys = build_sys_system(data, 1, 0, frame->weights, d2);
  for (auto _ : state) benchmark::DoNotOptimize(solve_system(sys.equations));
}
BENCHMARK(BM_SolveSys);

void BM_Replicate(benchmark::State& state) {
  const auto method = static_cast<Method>(state.range(0));
  Rng prng = Rng::substream(20240601, "population");
  const auto pop = synth_population(PopulationConfig::defaults(), prng);
  const auto nr = NonresponseConfig::defaults(pop.schema.size());
  const auto margins = population_margins(pop);
  auto frame = std::make_shared<const SampleFrame>(draw_replicate(pop, nr, 1, 0));
  PipelineOptions opt;
  opt.method = method;
  for (auto _ : state) benchmark::DoNotOptimize(run_pipeline(frame, margins, opt, 5));
  state.SetLabel(to_string(method));
}
BENCHMARK(BM_Replicate)->DenseRange(0, 3)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
