#include <benchmark/benchmark.h>

#include "weakmcn/harness/config.hpp"
#include "weakmcn/harness/model.hpp"
#include "weakmcn/harness/train.hpp"
#include "weakmcn/numcore/graph.hpp"
#include "weakmcn/rng.hpp"
#include "weakmcn/wrec/detector.hpp"

using namespace weakmcn;
using nc::Graph;
using nc::Shape;
using nc::Tensor;

namespace {

Tensor random_tensor(Shape s, Rng& rng) {
  Tensor t(std::move(s));
  for (auto& v : t.data()) v = rng.uniform(-1, 1);
  return t;
}

// Forward and backward of a 3x3 convolution; arg is the spatial extent.
void BM_Conv2d(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const Tensor x = random_tensor({16, n, n}, rng), w = random_tensor({32, 16, 3, 3}, rng);
  for (auto _ : state) {
    Graph g;
    auto xv = g.param(x), wv = g.param(w);
    auto y = g.conv2d(xv, wv, std::nullopt, {.stride = 1, .dilation = 1});
    auto grads = g.backward(g.sum_all(y));
    benchmark::DoNotOptimize(grads);
  }
}
BENCHMARK(BM_Conv2d)->Arg(8)->Arg(16)->Arg(32);

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(2);
  const Tensor a = random_tensor({n, n}, rng), b = random_tensor({n, n}, rng);
  for (auto _ : state) {
    Graph g;
    auto grads = g.backward(g.sum_all(g.matmul(g.param(a), g.param(b))));
    benchmark::DoNotOptimize(grads);
  }
}
BENCHMARK(BM_Matmul)->Arg(32)->Arg(64)->Arg(128);

void BM_Resize(benchmark::State& state) {
  Rng rng(3);
  const Tensor x = random_tensor({64, 16, 16}, rng);
  for (auto _ : state) {
    Graph g;
    auto grads = g.backward(g.sum_all(g.resize(g.param(x), 8, 8)));
    benchmark::DoNotOptimize(grads);
  }
}
BENCHMARK(BM_Resize);

// One weak-phase optimisation step (forward, loss, backward) on a batch of 16.
void BM_TotalLossStep(benchmark::State& state) {
  harness::Config cfg;
  cfg.data.count = 40;
  cfg.detector.epochs = 1;
  const auto data = harness::make_dataset(cfg);
  const auto detector = wrec::pretrain_detector(data.train, cfg.detector_config());
  const auto feats = harness::extract_features(detector, data.train);
  const auto weak = harness::init_weak_params(cfg);
  std::vector<harness::BatchItem> batch;
  for (std::size_t i = 0; i < 16; ++i) batch.push_back({&feats[i], &data.train[i], i, nullptr});
  for (auto _ : state) {
    Graph g;
    nc::Binder bind(g, weak, nc::Binder::prefixes(harness::weak_param_groups(cfg)));
    const auto b = harness::total_loss(bind, cfg, batch);
    auto grads = g.backward(b.l_total);
    benchmark::DoNotOptimize(grads);
  }
}
BENCHMARK(BM_TotalLossStep)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
