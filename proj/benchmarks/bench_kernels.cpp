#include <benchmark/benchmark.h>

#include "loopsoup/bose.hpp"
#include "loopsoup/graph.hpp"
#include "loopsoup/linalg.hpp"
#include "loopsoup/loopmeas.hpp"
#include "loopsoup/spacetime.hpp"

using namespace loopsoup;

namespace {

void BM_HeatKernel(benchmark::State& state) {
  const int side = static_cast<int>(state.range(0));
  const Generator q = build_generator(dirichlet_box(2, side));
  for (auto _ : state) benchmark::DoNotOptimize(heat_kernel(q, 1.0).matrix.data());
  state.SetLabel(std::to_string(q.size()) + " states");
}
BENCHMARK(BM_HeatKernel)->Arg(4)->Arg(8)->Arg(12)->Unit(benchmark::kMicrosecond);

void BM_BosonicTotalMass(benchmark::State& state) {
  const Generator q = build_generator(dirichlet_box(2, static_cast<int>(state.range(0))));
  for (auto _ : state) benchmark::DoNotOptimize(bosonic_total_mass(q, {-0.1, 1.0}));
}
BENCHMARK(BM_BosonicTotalMass)->Arg(4)->Arg(8)->Arg(12)->Unit(benchmark::kMicrosecond);

void BM_MarkovFdd(benchmark::State& state) {
  const Generator q = build_generator(dirichlet_box(1, 8));
  const FddQuery query{{0.2, 0.7}, {1, 3}, LengthSet({{0.9, 2.5}, {3.0, INFINITY}})};
  for (auto _ : state) benchmark::DoNotOptimize(markov_fdd(q, -0.1, query));
}
BENCHMARK(BM_MarkovFdd)->Unit(benchmark::kMicrosecond);

void BM_ProjectedFdd(benchmark::State& state) {
  const WeightedGraph base = dirichlet_box(1, 2);
  const SpaceTimeGraph st = build_spacetime(base, static_cast<int>(state.range(0)), 1.0, Variant::parse("independent"));
  const FddQuery query{{0.5}, {0}, LengthSet::single(0.9, 1.1)};
  for (auto _ : state) benchmark::DoNotOptimize(projected_fdd_exact(st, -0.5, query));
}
BENCHMARK(BM_ProjectedFdd)->Arg(8)->Arg(64)->Arg(512)->Unit(benchmark::kMicrosecond);

void BM_FockOracle(benchmark::State& state) {
  const BoseSystem sys{dirichlet_box(1, 3), {-0.5, 1.0}, PairPotential({{0, 1.0}, {1, 0.2}})};
  for (auto _ : state) benchmark::DoNotOptimize(fock_oracle(sys, static_cast<int>(state.range(0))).log_z);
}
BENCHMARK(BM_FockOracle)->Arg(4)->Arg(8)->Arg(12)->Unit(benchmark::kMillisecond);

}  // namespace
