#include <benchmark/benchmark.h>

#include <random>

#include "ehsrb/cones.hpp"
#include "ehsrb/eht.hpp"
#include "ehsrb/system.hpp"

using namespace ehsrb;

namespace {

const System& slowed() {
  static const System s = build_system(SystemSpec{});
  return s;
}

void BM_Pliss(benchmark::State& st) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g(0.3, 1.0);
  std::vector<double> a(static_cast<std::size_t>(st.range(0)));
  for (double& x : a) x = g(rng);
  for (auto _ : st) benchmark::DoNotOptimize(pliss_times(a, 0.3));
  st.SetComplexityN(st.range(0));
}
BENCHMARK(BM_Pliss)->RangeMultiplier(4)->Range(64, 1 << 14)->Complexity();

void BM_StepOutsideTube(benchmark::State& st) {
  const Vec z = make_vec({2.0, 0.1, -0.05});
  for (auto _ : st) benchmark::DoNotOptimize(slowed().step(z));
}
BENCHMARK(BM_StepOutsideTube);

void BM_StepInZ(benchmark::State& st) {
  const Vec z = slowed().from_local(make_vec({0.01, 0.005, 0.002}));
  for (auto _ : st) benchmark::DoNotOptimize(slowed().step(z));
}
BENCHMARK(BM_StepInZ);

void BM_ConeRates(benchmark::State& st) {
  const ConePair p = reference_cones(3, 0.4);
  const Vec z = slowed().from_local(make_vec({0.02, 0.01, 0.0}));
  for (auto _ : st) benchmark::DoNotOptimize(cone_rates(slowed(), z, p, static_cast<int>(st.range(0))));
}
BENCHMARK(BM_ConeRates)->Arg(64)->Arg(256);

void BM_FlowThroughZ(benchmark::State& st) {
  const Vec x = make_vec({0.002, 0.03, 0.0});
  for (auto _ : st) benchmark::DoNotOptimize(slowed().flow_through_Z(x, make_vec({1, 0, 0})));
}
BENCHMARK(BM_FlowThroughZ);

void BM_FirstExit(benchmark::State& st) {
  const Vec z = slowed().from_local(make_vec({1e-4, 0.0, 0.0}));
  for (auto _ : st) benchmark::DoNotOptimize(slowed().first_exit(z, 1000000));
}
BENCHMARK(BM_FirstExit);

}  // namespace

BENCHMARK_MAIN();
