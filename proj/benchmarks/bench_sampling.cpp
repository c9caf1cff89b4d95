#include <benchmark/benchmark.h>

#include "loopsoup/gaussian.hpp"
#include "loopsoup/graph.hpp"
#include "loopsoup/soup.hpp"

using namespace loopsoup;

namespace {

void BM_BridgeSample(benchmark::State& state) {
  const Generator q = build_generator(dirichlet_box(2, 6));
  const BridgeSampler bridges(q);
  const double t = static_cast<double>(state.range(0));
  std::uint64_t i = 0;
  for (auto _ : state) {
    Rng rng(1, i++);
    benchmark::DoNotOptimize(bridges.sample(3, 3, t, rng).jumps());
  }
}
BENCHMARK(BM_BridgeSample)->Arg(1)->Arg(4)->Arg(16)->Unit(benchmark::kMicrosecond);

void BM_BosonicSoup(benchmark::State& state) {
  const Generator q = build_generator(dirichlet_box(2, static_cast<int>(state.range(0))));
  const BosonicSoupSampler soups(q, {-0.05, 1.0});
  std::uint64_t i = 0;
  for (auto _ : state) {
    Rng rng(2, i++);
    benchmark::DoNotOptimize(soups.sample(rng).loops.size());
  }
}
BENCHMARK(BM_BosonicSoup)->Arg(3)->Arg(6)->Arg(10)->Unit(benchmark::kMicrosecond);

void BM_MarkovGenuineSoup(benchmark::State& state) {
  const Generator q = build_generator(dirichlet_box(2, static_cast<int>(state.range(0))));
  const MarkovSoupSampler soups(q, -0.05, 0.0, true);
  std::uint64_t i = 0;
  for (auto _ : state) {
    Rng rng(3, i++);
    benchmark::DoNotOptimize(soups.sample(rng).loops.size());
  }
}
BENCHMARK(BM_MarkovGenuineSoup)->Arg(3)->Arg(6)->Unit(benchmark::kMicrosecond);

void BM_GaussianField(benchmark::State& state) {
  const Generator q = build_generator(dirichlet_box(2, static_cast<int>(state.range(0))));
  const FieldSampler sampler(QuadraticForm::from_generator(q, -0.1));
  std::uint64_t i = 0;
  for (auto _ : state) {
    Rng rng(4, i++);
    benchmark::DoNotOptimize(sampler.sample(rng).weight);
  }
}
BENCHMARK(BM_GaussianField)->Arg(4)->Arg(8)->Arg(16)->Unit(benchmark::kMicrosecond);

}  // namespace
