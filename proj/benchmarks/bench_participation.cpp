#include <benchmark/benchmark.h>

#include "cpwloss/participation.hpp"

using namespace cpwloss;

namespace {

void BM_SolveFieldLevel(benchmark::State& state) {
  const CpwGeometry g;
  const MaterialTable m;
  const int level = static_cast<int>(state.range(0));
  std::size_t nodes = 0;
  for (auto _ : state) {
    const auto sol = solve_field(g, m, level, true);
    nodes = sol.num_nodes();
    benchmark::DoNotOptimize(sol.energy_sum());
  }
  state.counters["nodes"] = static_cast<double>(nodes);
}
BENCHMARK(BM_SolveFieldLevel)->DenseRange(0, 2)->Unit(benchmark::kMillisecond);

void BM_SolveCrossSection(benchmark::State& state) {
  const auto method = state.range(0) == 0 ? ThinLayerMethod::kDirect : ThinLayerMethod::kPerturbative;
  for (auto _ : state) benchmark::DoNotOptimize(solve_cross_section(CpwGeometry{}, MaterialTable{}, method));
}
BENCHMARK(BM_SolveCrossSection)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_SmSweepJobs(benchmark::State& state) {
  const std::vector<double> t{0.4e-9, 0.8e-9, 1.2e-9, 1.6e-9, 2e-9};
  const auto jobs = static_cast<unsigned>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(sweep_sm_thickness(CpwGeometry{}, MaterialTable{}, t,
                                                ThinLayerMethod::kDirect, MeshOptions{}, jobs));
  }
}
BENCHMARK(BM_SmSweepJobs)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond)->UseRealTime();

}  // namespace

BENCHMARK_MAIN();
