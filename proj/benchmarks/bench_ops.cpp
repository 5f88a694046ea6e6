// Microbenchmarks for the kernels that dominate training and inference.
#include <benchmark/benchmark.h>

#include "sspnet/ops.hpp"
#include "sspnet/parallel.hpp"
#include "sspnet/pipeline.hpp"
#include "sspnet/rng.hpp"
#include "sspnet/topology.hpp"

using namespace ssp;

namespace {

Tensor randn(Shape shape, uint64_t seed) {
  Rng rng(seed);
  Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<float>(rng.normal());
  return t;
}

void conv3d_fwd(benchmark::State& state) {
  const int64_t c = state.range(0);
  Tensor x = randn({1, c, 16, 64, 64}, 1);
  Tensor w = randn({c, c, 3, 3, 3}, 2);
  Tensor b = randn({c}, 3);
  for (auto _ : state) {
    Tensor y = conv3d_forward(x, w, b, 1, 1);
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() * c * c * 27 * 16 * 64 * 64);
}
BENCHMARK(conv3d_fwd)->Arg(8)->Arg(16)->Unit(benchmark::kMillisecond);

void conv3d_bwd(benchmark::State& state) {
  const int64_t c = state.range(0);
  Tensor x = randn({1, c, 16, 64, 64}, 1);
  Tensor w = randn({c, c, 3, 3, 3}, 2);
  Tensor gy = randn({1, c, 16, 64, 64}, 4);
  for (auto _ : state) {
    auto g = conv3d_backward(x, w, gy, {1, 1, 1}, {1, 1, 1});
    benchmark::DoNotOptimize(g.w.data());
  }
  state.SetItemsProcessed(state.iterations() * 2 * c * c * 27 * 16 * 64 * 64);
}
BENCHMARK(conv3d_bwd)->Arg(8)->Arg(16)->Unit(benchmark::kMillisecond);

void conv2d_fwd(benchmark::State& state) {
  const int64_t c = state.range(0);
  Tensor x = randn({1, c, 64, 64}, 1);
  Tensor w = randn({c, c, 3, 3}, 2);
  Tensor b = randn({c}, 3);
  for (auto _ : state) {
    Tensor y = conv2d_forward(x, w, b, 1, 1);
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() * c * c * 9 * 64 * 64);
}
BENCHMARK(conv2d_fwd)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

void network_forward(benchmark::State& state) {
  TopologyConfig cfg;
  cfg.kind = static_cast<TopologyKind>(state.range(0));
  cfg.encoder_channels = {8, 16, 32, 64, 64};
  cfg.u_dim = 64;
  cfg.patch_z = 16;
  cfg.patch_h = cfg.patch_w = 64;
  cfg.task_count = 3;
  cfg.ratio = 2;
  if (cfg.kind == TopologyKind::hybrid_2to3d) cfg.projection_space = ProjectionSpace::embed2d;
  Network net = build_network(cfg, 1);
  Tensor x = randn({1, 1, 16, 64, 64}, 2);
  Tensor code = one_hot(0, 3).reshaped({1, 3});
  for (auto _ : state) {
    Tensor y = net.forward(x, code);
    benchmark::DoNotOptimize(y.data());
  }
}
BENCHMARK(network_forward)
    ->Arg(static_cast<int>(TopologyKind::pure2d))
    ->Arg(static_cast<int>(TopologyKind::pure3d))
    ->Arg(static_cast<int>(TopologyKind::hybrid_3to2d))
    ->Arg(static_cast<int>(TopologyKind::hybrid_2to3d))
    ->Unit(benchmark::kMillisecond);

void sliding_window(benchmark::State& state) {
  TilePredictor echo = [](const Tensor& tile) { return tile; };
  Volume in(24, 96, 96);
  Rng rng(5);
  for (auto& f : in.data) f = static_cast<float>(rng.normal());
  for (auto _ : state) {
    Volume out = sliding_infer_tiles(echo, in, {16, 64, 64}, 1, 0.5);
    benchmark::DoNotOptimize(out.data.data());
  }
}
BENCHMARK(sliding_window)->Unit(benchmark::kMillisecond);

void prefix_upsample_bench(benchmark::State& state) {
  Volume v(8, 128, 128);
  Rng rng(6);
  for (auto& f : v.data) f = static_cast<float>(rng.normal());
  SparseStack st{v, 4, 32};
  for (auto _ : state) {
    Volume up = prefix_upsample(st, InterpMode::linear);
    benchmark::DoNotOptimize(up.data.data());
  }
}
BENCHMARK(prefix_upsample_bench)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
