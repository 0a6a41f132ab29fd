// Serial reference vs OpenMP block-parallel Monte Carlo kernels. Both paths
// produce identical bits, so only wall time differs.

#include <benchmark/benchmark.h>

#include "cumulab/analytics.hpp"

using namespace cumulab;

namespace {

struct Setup {
  McmParams p = McmParams::make(256, 4.0, 1.0, 0.0, 11);
  DiffusionTime dt{0.5};
  Activation act = Activation::neg_tanh();
  Vector w = Vector::Ones(256).normalized();
};

const Setup& setup() {
  static const Setup s;
  return s;
}

void BM_PopulationGrad(benchmark::State& state, Exec exec) {
  const auto& s = setup();
  const auto n = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) {
    auto g = mc_population_grad(s.w, s.p, s.dt, s.act, DriftForm::spherical, n, 5, exec);
    benchmark::DoNotOptimize(g.along_v);
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n));
}

void BM_PopulationLoss(benchmark::State& state, Exec exec) {
  const auto& s = setup();
  const auto n = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) {
    auto l = mc_population_loss(DenoiserState{s.w, 1.0}, s.p, s.dt, s.act, n, 5, exec);
    benchmark::DoNotOptimize(l.mean);
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n));
}

}  // namespace

BENCHMARK_CAPTURE(BM_PopulationGrad, serial, Exec::serial)->Arg(1 << 14)->Arg(1 << 16)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_PopulationGrad, openmp, Exec::parallel)->Arg(1 << 14)->Arg(1 << 16)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_PopulationLoss, serial, Exec::serial)->Arg(1 << 14)->Arg(1 << 16)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_PopulationLoss, openmp, Exec::parallel)->Arg(1 << 14)->Arg(1 << 16)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
