#include <benchmark/benchmark.h>

#include <vector>

#include "emf/emf.hpp"
#include "emf/loss.hpp"
#include "emf/random.hpp"
#include "emf/subsolver.hpp"
#include "emf/synth.hpp"

namespace {

emf::SyntheticInstance instance(emf::Index n, double rate) {
  return emf::make_completion_instance(n, n, 5, 0.5, 3, rate, 1);
}

void BM_SolveYCompletion(benchmark::State& state) {
  const auto n = static_cast<emf::Index>(state.range(0));
  const auto inst = instance(n, 0.1);
  const auto x = emf::gen_low_rank(n, n, 5, 2).x();
  for (auto _ : state) {
    benchmark::DoNotOptimize(emf::solve_y(x, inst.observed, 0.25, 0.0));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(inst.observed.size()));
}
BENCHMARK(BM_SolveYCompletion)->Arg(200)->Arg(500)->Unit(benchmark::kMillisecond);

void BM_SolveYGeneral(benchmark::State& state) {
  const auto p = static_cast<emf::Index>(state.range(0));
  const auto truth = emf::gen_low_rank(20, 20, 2, 3);
  const auto obs = emf::apply_measurements(emf::gaussian_measurements(20, 20, p, 4), emf::product(truth));
  const auto x = emf::gen_low_rank(20, 20, 2, 5).x();
  for (auto _ : state) {
    benchmark::DoNotOptimize(emf::solve_y(x, obs, 0.25, 0.0));
  }
}
BENCHMARK(BM_SolveYGeneral)->Arg(100)->Arg(400)->Unit(benchmark::kMillisecond);

void BM_SvdInit(benchmark::State& state) {
  const auto n = static_cast<emf::Index>(state.range(0));
  const auto inst = instance(n, 0.1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(emf::svd_init(inst.observed, 5, 0));
  }
}
BENCHMARK(BM_SvdInit)->Arg(200)->Arg(500)->Unit(benchmark::kMillisecond);

void BM_Fit(benchmark::State& state) {
  const auto n = static_cast<emf::Index>(state.range(0));
  const auto inst = instance(n, 0.2);
  emf::EmfConfig cfg;
  cfg.rank = 5;
  cfg.omega = 0.25;
  cfg.max_outer = 20;
  for (auto _ : state) {
    benchmark::DoNotOptimize(emf::fit(inst.observed, cfg));
  }
}
BENCHMARK(BM_Fit)->Arg(200)->Unit(benchmark::kMillisecond);

void BM_ScalarExpectile(benchmark::State& state) {
  emf::Pcg32 rng(7, 0);
  std::vector<double> v(static_cast<std::size_t>(state.range(0)));
  for (auto& x : v) x = rng.normal();
  for (auto _ : state) {
    benchmark::DoNotOptimize(emf::scalar_expectile(v, 0.1));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ScalarExpectile)->Arg(1000)->Arg(100000);

}  // namespace

BENCHMARK_MAIN();
