#include <benchmark/benchmark.h>

#include <cmath>
#include <sstream>

#include "cpwloss/io/trace_io.hpp"
#include "cpwloss/resonance_fit.hpp"

using namespace cpwloss;

namespace {

ComplexTrace trace(std::size_t points) {
  NotchModelParams p;
  p.fr = 5e9;
  p.qc_mag = 2e5;
  p.ql = 1.5e5;
  return synthesize_notch(p, linewidth_grid(p.fr, p.ql, 8.0, points), 1e-3, 1);
}

void BM_ParseTouchstone(benchmark::State& state) {
  const auto text = io::format_touchstone(trace(static_cast<std::size_t>(state.range(0))));
  for (auto _ : state) {
    std::istringstream in(text);
    benchmark::DoNotOptimize(io::parse_touchstone(in));
  }
  state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations() * text.size()));
}
BENCHMARK(BM_ParseTouchstone)->Arg(801)->Arg(10001);

void BM_ParseTraceCsv(benchmark::State& state) {
  const auto text = io::format_trace_csv(trace(static_cast<std::size_t>(state.range(0))));
  for (auto _ : state) {
    std::istringstream in(text);
    benchmark::DoNotOptimize(io::parse_trace_csv(in));
  }
  state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations() * text.size()));
}
BENCHMARK(BM_ParseTraceCsv)->Arg(801)->Arg(10001);

}  // namespace

BENCHMARK_MAIN();
