#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "gxc/crosscoder.hpp"
#include "gxc/kernels.hpp"

using namespace gxc;

namespace {

struct Problem {
  CrosscoderParams params;
  std::vector<double> rows;
  std::size_t batch;
};

// D_32, block_len 64, m features, one batch of 256 orbits.
Problem make_problem(std::size_t m) {
  const DihedralGroup g(16);
  Problem p{initialize(g, 64, m, 1), {}, 256};
  std::mt19937_64 rng(2);
  std::normal_distribution<double> normal(0.0, 1.0);
  p.rows.resize(p.batch * p.params.output_dim());
  for (auto& v : p.rows) v = normal(rng);
  for (auto& b : p.params.encoder_bias) b = 0.1;
  return p;
}

std::vector<BlockVector> make_dictionary(std::size_t m) {
  const DihedralGroup g(16);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<BlockVector> dict;
  for (std::size_t i = 0; i < m; ++i) {
    std::vector<double> v(32 * 16);
    for (auto& x : v) x = normal(rng);
    dict.emplace_back(g, 16, std::move(v));
  }
  return dict;
}

void BM_GradientsSerial(benchmark::State& state) {
  const auto p = make_problem(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(kernels::serial::loss_and_gradients(p.params, p.rows, p.batch, 3e-7));
  }
}

void BM_GradientsOmp(benchmark::State& state) {
  const auto p = make_problem(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(kernels::omp::loss_and_gradients(p.params, p.rows, p.batch, 3e-7, 0));
  }
}

void BM_SimilaritySerial(benchmark::State& state) {
  const auto dict = make_dictionary(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(kernels::serial::max_group_similarity(dict));
}

void BM_SimilarityOmp(benchmark::State& state) {
  const auto dict = make_dictionary(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(kernels::omp::max_group_similarity(dict, 0));
}

}  // namespace

BENCHMARK(BM_GradientsSerial)->Arg(64)->Arg(512)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_GradientsOmp)->Arg(64)->Arg(512)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SimilaritySerial)->Arg(32)->Arg(128)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SimilarityOmp)->Arg(32)->Arg(128)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
