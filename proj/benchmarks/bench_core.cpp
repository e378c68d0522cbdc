#include <benchmark/benchmark.h>

#include "sealkit/attacks.hpp"
#include "sealkit/detect.hpp"
#include "sealkit/jnd.hpp"
#include "sealkit/jpeg_like.hpp"
#include "sealkit/models.hpp"

using namespace sealkit;
namespace ops = sealkit::nd;

namespace {

Tensorf random_image(nd::Shape shape, uint64_t seed) {
  Rng rng(seed);
  Tensorf t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<float>(rng.uniform(0.05, 0.95));
  return t;
}

ModelBundle default_bundle() {
  ArchConfig arch;
  Rng rng(1);
  return init_models(arch, rng);
}

void BM_conv2d_forward(benchmark::State& state) {
  Rng rng(2);
  auto x = ops::constant(random_image({8, 16, 64, 64}, 3));
  Tensorf w({16, 16, 3, 3});
  for (int64_t i = 0; i < w.numel(); ++i) w[i] = static_cast<float>(rng.normal(0, 0.05));
  auto wv = ops::constant(w);
  for (auto _ : state) benchmark::DoNotOptimize(ops::conv2d(x, wv, Varf(), 1, 1).value()[0]);
}
BENCHMARK(BM_conv2d_forward);

void BM_embed_batch8(benchmark::State& state) {
  ModelBundle b = default_bundle();
  Tensorf imgs = random_image({8, 3, 64, 64}, 5);
  Rng rng(7);
  BitMessage m = BitMessage::random(b.arch.n_bits, rng);
  for (auto _ : state) benchmark::DoNotOptimize(embed(b, imgs, m)[0]);
}
BENCHMARK(BM_embed_batch8);

void BM_temporal_pooled_embed(benchmark::State& state) {
  ModelBundle b = default_bundle();
  Tensorf frames = random_image({16, 3, 64, 64}, 9);
  Rng rng(11);
  BitMessage m = BitMessage::random(b.arch.n_bits, rng);
  int k = static_cast<int>(state.range(0));
  for (auto _ : state)
    benchmark::DoNotOptimize(temporal_pooled_embed(b, frames, m, k, 1)[0]);
}
BENCHMARK(BM_temporal_pooled_embed)->Arg(1)->Arg(4);

void BM_jpeg_like(benchmark::State& state) {
  Tensorf img = random_image({1, 3, 192, 192}, 13);
  for (auto _ : state) benchmark::DoNotOptimize(jpeg_like(img, 60)[0]);
}
BENCHMARK(BM_jpeg_like);

void BM_jnd_map(benchmark::State& state) {
  Tensorf img = random_image({1, 3, 192, 192}, 15);
  for (auto _ : state) benchmark::DoNotOptimize(jnd_map(img)[0]);
}
BENCHMARK(BM_jnd_map);

void BM_p_value_n256(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(neg_log10_p(256, 96));
}
BENCHMARK(BM_p_value_n256);

}  // namespace

BENCHMARK_MAIN();
