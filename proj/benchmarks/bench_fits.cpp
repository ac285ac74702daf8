#include <benchmark/benchmark.h>

#include <cmath>

#include "cpwloss/qubit_loss.hpp"
#include "cpwloss/resonance_fit.hpp"
#include "cpwloss/tls_model.hpp"
#include "cpwloss/units.hpp"

using namespace cpwloss;

namespace {

NotchModelParams notch() {
  NotchModelParams p;
  p.fr = 5.2e9;
  p.qc_mag = 2e5;
  p.phi = 0.05;
  p.ql = 1.0 / (1.0 / 1e6 + std::cos(p.phi) / p.qc_mag);
  p.tau = 40e-9;
  return p;
}

void BM_FitResonator(benchmark::State& state) {
  const auto p = notch();
  const auto trace =
      synthesize_notch(p, linewidth_grid(p.fr, p.ql, 8.0, static_cast<std::size_t>(state.range(0))), 1e-3, 7);
  for (auto _ : state) benchmark::DoNotOptimize(fit_resonator(trace));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_FitResonator)->RangeMultiplier(2)->Range(128, 2048)->Unit(benchmark::kMillisecond)->Complexity();

void BM_FitCircle(benchmark::State& state) {
  const auto p = notch();
  const auto trace = synthesize_notch(p, linewidth_grid(p.fr, p.ql, 8.0, 801), 1e-3, 7);
  for (auto _ : state) benchmark::DoNotOptimize(fit_circle(trace.s21));
}
BENCHMARK(BM_FitCircle);

void BM_FitTls(benchmark::State& state) {
  TlsFitResult truth;
  truth.f_delta_tls = 1e-6;
  truth.n_c = 10.0;
  truth.beta = 0.3;
  truth.delta0 = 2e-7;
  const auto sweep = synthesize_tls_sweep(truth, 5e9, log_spaced(1.0, 1e7, 25), 0.02, 3);
  for (auto _ : state) benchmark::DoNotOptimize(fit_tls(sweep, 5e9, 0.01));
}
BENCHMARK(BM_FitTls)->Unit(benchmark::kMicrosecond);

void BM_FitT1(benchmark::State& state) {
  std::vector<double> delays;
  for (int k = 0; k < 40; ++k) delays.push_back(units::us(1500.0) * k / 39.0);
  const auto trace = synthesize_decay(units::us(501.0), 0.9, 0.05, delays, 0.01, 5);
  for (auto _ : state) benchmark::DoNotOptimize(fit_t1(trace));
}
BENCHMARK(BM_FitT1)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
