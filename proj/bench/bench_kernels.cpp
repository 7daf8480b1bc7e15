#include <benchmark/benchmark.h>
#include <omp.h>

#include "tracer/encoder.hpp"
#include "tracer/kernels.hpp"
#include "tracer/kernels_reference.hpp"
#include "tracer/rng.hpp"

using namespace tracer;
namespace opt = tracer::kernels;
namespace ref = tracer::kernels::reference;

namespace {

Matrix<float> random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  Rng rng(seed);
  Matrix<float> m(r, c);
  for (auto& x : m.flat()) x = static_cast<float>(rng.normal());
  return m;
}

// Shapes of one encoder layer: seq positions × width, feed-forward 4×width.
void layer_shapes(benchmark::internal::Benchmark* b) {
  for (int threads : {1, 2, 4}) {
    for (int seq : {64, 256}) b->Args({seq, 128, threads});
  }
}

template <bool Parallel>
void BM_Matmul(benchmark::State& state) {
  const auto n = state.range(0), d = state.range(1);
  omp_set_num_threads(static_cast<int>(state.range(2)));
  const auto a = random_matrix(n, d, 1), b = random_matrix(d, 4 * d, 2);
  Matrix<float> c;
  for (auto _ : state) {
    if constexpr (Parallel) {
      opt::matmul(a, b, c);
    } else {
      ref::matmul(a, b, c);
    }
    benchmark::DoNotOptimize(c.flat().data());
  }
  state.SetItemsProcessed(state.iterations() * n * d * 4 * d);
}

template <bool Parallel>
void BM_Attention(benchmark::State& state) {
  const auto n = state.range(0), d = state.range(1);
  omp_set_num_threads(static_cast<int>(state.range(2)));
  const auto q = random_matrix(n, d, 3), k = random_matrix(n, d, 4), v = random_matrix(n, d, 5);
  std::vector<int> mask(n, 1);
  Matrix<float> out;
  std::vector<Matrix<float>> probs;
  for (auto _ : state) {
    if constexpr (Parallel) {
      opt::attention(q, k, v, mask, 4, out, probs);
    } else {
      ref::attention(q, k, v, mask, 4, out, probs);
    }
    benchmark::DoNotOptimize(out.flat().data());
  }
}

template <bool Parallel>
void BM_LayerNormGelu(benchmark::State& state) {
  const auto n = state.range(0), d = state.range(1);
  omp_set_num_threads(static_cast<int>(state.range(2)));
  const auto x = random_matrix(n, 4 * d, 6), gamma = random_matrix(1, 4 * d, 7), beta = random_matrix(1, 4 * d, 8);
  Matrix<float> y, act;
  opt::LayerNormCache<float> cache;
  for (auto _ : state) {
    if constexpr (Parallel) {
      opt::layer_norm(x, gamma, beta, y, cache);
      opt::gelu(y, act);
    } else {
      ref::layer_norm(x, gamma, beta, y, cache);
      ref::gelu(y, act);
    }
    benchmark::DoNotOptimize(act.flat().data());
  }
}

void BM_EncoderForward(benchmark::State& state) {
  omp_set_num_threads(static_cast<int>(state.range(1)));
  EncoderConfig config;
  config.vocab_size = 1000;
  const auto params = EncoderParams<float>::init(config, 1);
  std::vector<int> body(static_cast<std::size_t>(state.range(0)) - 2);
  for (std::size_t i = 0; i < body.size(); ++i) body[i] = 5 + static_cast<int>(i % 900);
  const auto seq = encode_ids(body, static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    auto h = forward(params, seq);
    benchmark::DoNotOptimize(h.flat().data());
  }
}

}  // namespace

BENCHMARK(BM_Matmul<false>)->Name("matmul/serial")->Apply(layer_shapes);
BENCHMARK(BM_Matmul<true>)->Name("matmul/openmp")->Apply(layer_shapes);
BENCHMARK(BM_Attention<false>)->Name("attention/serial")->Apply(layer_shapes);
BENCHMARK(BM_Attention<true>)->Name("attention/openmp")->Apply(layer_shapes);
BENCHMARK(BM_LayerNormGelu<false>)->Name("layernorm_gelu/serial")->Apply(layer_shapes);
BENCHMARK(BM_LayerNormGelu<true>)->Name("layernorm_gelu/openmp")->Apply(layer_shapes);
BENCHMARK(BM_EncoderForward)->Name("encoder_forward/openmp")->Args({64, 1})->Args({64, 4})->Args({256, 1})->Args({256, 4});

BENCHMARK_MAIN();
