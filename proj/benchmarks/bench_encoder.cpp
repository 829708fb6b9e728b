#include <torch/torch.h>

#include <benchmark/benchmark.h>

#include "egsnet/model.hpp"

namespace {

// Forward pass at evaluation settings, the dominant cost of meta-testing.
void BM_Conv4Forward(benchmark::State& state) {
  torch::manual_seed(0);
  const int64_t batch = state.range(0);
  egsnet::Conv4Encoder encoder(64, 4, 2);
  auto images = torch::rand({batch, 3, 84, 84});
  torch::NoGradGuard no_grad;
  for (auto _ : state) {
    auto out = encoder.forward(images, egsnet::ForwardMode::Eval);
    benchmark::DoNotOptimize(out);
  }
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_Conv4Forward)->Arg(25)->Arg(100)->Unit(benchmark::kMillisecond);

// Forward plus backward at training settings, the dominant cost of an epoch.
void BM_Conv4TrainStep(benchmark::State& state) {
  torch::manual_seed(0);
  const int64_t batch = state.range(0);
  egsnet::Conv4Encoder encoder(64, 4, 2);
  auto images = torch::rand({batch, 3, 84, 84});
  for (auto _ : state) {
    auto features = encoder.forward(images, egsnet::ForwardMode::Train);
    auto loss = features.square().mean();
    loss.backward();
    for (auto& p : encoder.parameters()) p.mutable_grad() = torch::Tensor();
    benchmark::DoNotOptimize(loss);
  }
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_Conv4TrainStep)->Arg(32)->Arg(100)->Unit(benchmark::kMillisecond);

void BM_ResNet18Forward(benchmark::State& state) {
  torch::manual_seed(0);
  const int64_t batch = state.range(0);
  egsnet::ResNet18Encoder encoder;
  auto images = torch::rand({batch, 3, 84, 84});
  torch::NoGradGuard no_grad;
  for (auto _ : state) {
    auto out = encoder.forward(images, egsnet::ForwardMode::Eval);
    benchmark::DoNotOptimize(out);
  }
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_ResNet18Forward)->Arg(25)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
