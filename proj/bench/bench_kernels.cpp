// Copyright 2026 The adaeval Authors
// SPDX-License-Identifier: Apache-2.0

// Serial reference vs OpenMP kernels, plus batched inference and training
// gradients. Run with OMP_NUM_THREADS set to the number of cores.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "adaeval/data.hpp"
#include "adaeval/kernels.hpp"
#include "adaeval/liteeval.hpp"

namespace {

namespace k = adaeval::kernels;
namespace le = adaeval::liteeval;

std::vector<double> filled(std::size_t n, unsigned seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<double> v(n);
  for (auto& x : v) x = u(gen);
  return v;
}

template <bool Parallel>
void BM_Matmul(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0));
  const auto kk = static_cast<std::size_t>(state.range(1));
  const auto n = static_cast<std::size_t>(state.range(2));
  const auto a = filled(m * kk, 1), b = filled(kk * n, 2);
  std::vector<double> c(m * n);
  for (auto _ : state) {
    if constexpr (Parallel) {
      k::matmul(a, b, c, m, kk, n);
    } else {
      k::matmul_serial(a, b, c, m, kk, n);
    }
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(m * kk * n));
}

template <bool Parallel>
void BM_MatmulGradB(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0));
  const auto kk = static_cast<std::size_t>(state.range(1));
  const auto n = static_cast<std::size_t>(state.range(2));
  const auto a = filled(m * kk, 3), dc = filled(m * n, 4);
  std::vector<double> db(kk * n);
  for (auto _ : state) {
    if constexpr (Parallel) {
      k::matmul_grad_b(a, dc, db, m, kk, n);
    } else {
      k::matmul_grad_b_serial(a, dc, db, m, kk, n);
    }
    benchmark::DoNotOptimize(db.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(m * kk * n));
}

void shapes(benchmark::internal::Benchmark* b) {
  b->Args({1, 112, 128})->Args({1, 4096, 2048})->Args({256, 256, 256})->Args({512, 512, 512});
}

BENCHMARK(BM_Matmul<false>)->Apply(shapes);
BENCHMARK(BM_Matmul<true>)->Apply(shapes);
BENCHMARK(BM_MatmulGradB<false>)->Apply(shapes);
BENCHMARK(BM_MatmulGradB<true>)->Apply(shapes);

struct Workload {
  le::ModelConfig config;
  le::ModelParams params;
  std::vector<adaeval::data::VideoSample> videos;

  Workload() {
    config.seed = 3;
    params = le::ModelParams::initialized(config);
    adaeval::data::SyntheticSpec spec;
    spec.seed = 5;
    videos = adaeval::data::generate_synthetic(spec, {256, 0, 0}).samples.at("train");
  }
};

const Workload& workload() {
  static const Workload w;
  return w;
}

template <bool Parallel>
void BM_InferTraces(benchmark::State& state) {
  const auto& w = workload();
  for (auto _ : state) {
    auto t = Parallel ? le::infer_traces(w.params, w.config, w.videos)
                      : le::infer_traces_serial(w.params, w.config, w.videos);
    benchmark::DoNotOptimize(t.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(w.videos.size()));
}

template <bool Parallel>
void BM_BatchGradient(benchmark::State& state) {
  const auto& w = workload();
  std::vector<const adaeval::data::VideoSample*> batch;
  std::vector<std::uint64_t> seeds;
  for (std::size_t i = 0; i < 64; ++i) {
    batch.push_back(&w.videos[i]);
    seeds.push_back(i);
  }
  for (auto _ : state) {
    auto g = Parallel ? le::batch_gradient(w.params, w.config, batch, seeds, 1.0)
                      : le::batch_gradient_serial(w.params, w.config, batch, seeds, 1.0);
    benchmark::DoNotOptimize(g.loss);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(batch.size()));
}

BENCHMARK(BM_InferTraces<false>)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_InferTraces<true>)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_BatchGradient<false>)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_BatchGradient<true>)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
