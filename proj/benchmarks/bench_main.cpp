#include <benchmark/benchmark.h>

#include "ugmcs/autodiff.hpp"
#include "ugmcs/dataio.hpp"
#include "ugmcs/filters.hpp"
#include "ugmcs/losses.hpp"
#include "ugmcs/metrics.hpp"
#include "ugmcs/model.hpp"
#include "ugmcs/rng.hpp"
#include "ugmcs/trainer.hpp"

using namespace ugmcs;

namespace {

Tensor random_tensor(Rng& rng, std::vector<int> shape) {
  Tensor t(std::move(shape));
  for (double& v : t.data) v = rng.normal(0.0, 1.0);
  return t;
}

NetConfig desk_config() {
  NetConfig c;
  c.depth = 2;
  c.base_channels = 8;
  c.input_size = 16;
  c.attention_channels = 4;
  return c;
}

void bm_conv2d(benchmark::State& state) {
  Rng rng(1);
  const Tensor x = random_tensor(rng, {32, 32, 32});
  const Tensor w = random_tensor(rng, {32, 32, 3, 3});
  const Tensor b = random_tensor(rng, {32});
  for (auto _ : state) {
    ad::Tape tape;
    benchmark::DoNotOptimize(
        tape.conv2d(tape.constant(x), tape.constant(w), tape.constant(b), 1));
  }
}
BENCHMARK(bm_conv2d);

void bm_spatial_attention(benchmark::State& state) {
  Rng rng(2);
  const int s = static_cast<int>(state.range(0));
  const Tensor q = random_tensor(rng, {8, s, s});
  const Tensor k = random_tensor(rng, {8, s, s});
  const Tensor v = random_tensor(rng, {32, s, s});
  for (auto _ : state) {
    ad::Tape tape;
    benchmark::DoNotOptimize(
        tape.spatial_attention(tape.constant(q), tape.constant(k), tape.constant(v)));
  }
}
BENCHMARK(bm_spatial_attention)->Arg(16)->Arg(32);

void bm_net_forward(benchmark::State& state) {
  const NetConfig cfg = desk_config();
  const NetState net = init_net_state(cfg, 3);
  Rng rng(4);
  Tensor img({3, cfg.input_size, cfg.input_size});
  for (double& v : img.data) v = rng.uniform01();
  for (auto _ : state) benchmark::DoNotOptimize(net_forward(cfg, net, img));
}
BENCHMARK(bm_net_forward);

void bm_train_step(benchmark::State& state) {
  const NetConfig cfg = desk_config();
  NetState net = init_net_state(cfg, 5);
  SgdState opt = SgdState::zeros_like(net);
  const auto samples = synth_generate(4, 3, 6);
  std::vector<NetInput> batch;
  for (const auto& s : samples) batch.push_back(to_net_input(s, cfg.input_size));
  TrainConfig tc;
  tc.batch_size = 4;
  tc.threads = 1;
  for (auto _ : state)
    benchmark::DoNotOptimize(
        train_step(net, opt, cfg, batch, tc, LossSpec{}, 1e-4));
}
BENCHMARK(bm_train_step);

void bm_nsd(benchmark::State& state) {
  Rng rng(7);
  Mask a(64, 64), b(64, 64);
  for (auto& v : a.v) v = rng.uniform01() < 0.3;
  for (auto& v : b.v) v = rng.uniform01() < 0.3;
  for (auto _ : state) benchmark::DoNotOptimize(nsd(a, b, 1.0));
}
BENCHMARK(bm_nsd);

void bm_otsu(benchmark::State& state) {
  Rng rng(8);
  std::vector<double> v(4096);
  for (double& x : v) x = rng.normal(0.0, 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(otsu_threshold(v, 256));
}
BENCHMARK(bm_otsu);

void bm_gabor_filter(benchmark::State& state) {
  Rng rng(9);
  const Tensor x = random_tensor(rng, {32, 64, 64});
  const GaborConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(gabor_filter(x, cfg));
}
BENCHMARK(bm_gabor_filter);

} // namespace

BENCHMARK_MAIN();
