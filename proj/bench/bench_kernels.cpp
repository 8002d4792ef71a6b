// OpenMP kernels against their serial references.

#include <benchmark/benchmark.h>

#include "tarq/gptq.hpp"
#include "tarq/harness.hpp"
#include "tarq/reference.hpp"
#include "tarq/rng.hpp"

namespace {

using namespace tarq;

Matrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols) {
  Matrix m(rows, cols);
  for (double& v : m.data()) v = rng.normal();
  return m;
}

struct SweepCase {
  Matrix w;
  SymMatrix h;
  SweepConfig cfg;

  explicit SweepCase(std::size_t n) {
    Rng rng(n);
    w = random_matrix(rng, n, n);
    const Matrix x = random_matrix(rng, 2 * n, n);
    h = SymMatrix(matmul(x.transposed(), x));
    cfg.quant.group_size = 32;
  }
};

TaggedActivations make_batch(std::size_t positions, std::size_t n) {
  Rng rng(positions + n);
  TaggedActivations b;
  b.fp = random_matrix(rng, positions, n);
  b.quant = b.fp;
  for (double& v : b.quant.data()) v += 0.01 * rng.normal();
  b.tags.resize(positions);
  for (auto& t : b.tags) t = rng.uniform() < 0.07 ? Tag::kTail : Tag::kCommon;
  return b;
}

void BM_SweepParallel(benchmark::State& state) {
  const SweepCase c(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(gptq_sweep(c.w, c.h, c.cfg));
}

void BM_SweepReference(benchmark::State& state) {
  const SweepCase c(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(reference::gptq_sweep(c.w, c.h, c.cfg));
}

void BM_MomentsParallel(benchmark::State& state) {
  const auto b = make_batch(static_cast<std::size_t>(state.range(0)), 128);
  for (auto _ : state) benchmark::DoNotOptimize(accumulate_moments(b));
}

void BM_MomentsReference(benchmark::State& state) {
  const auto b = make_batch(static_cast<std::size_t>(state.range(0)), 128);
  for (auto _ : state) benchmark::DoNotOptimize(reference::accumulate_moments(b));
}

void BM_BenchmarkTrials(benchmark::State& state) {
  const auto spec = benchmark_spec();
  const auto params = benchmark_params(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(run_method(spec, Variant::kTarq, params));
}

BENCHMARK(BM_SweepParallel)->Arg(128)->Arg(512)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SweepReference)->Arg(128)->Arg(512)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_MomentsParallel)->Arg(1024)->Arg(8192)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_MomentsReference)->Arg(1024)->Arg(8192)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_BenchmarkTrials)->Arg(20)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
