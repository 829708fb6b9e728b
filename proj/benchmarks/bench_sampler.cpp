#include <torch/torch.h>

#include <benchmark/benchmark.h>

#include "egsnet/datasets.hpp"
#include "egsnet/rng.hpp"
#include "egsnet/sampler.hpp"

namespace {

const egsnet::DomainRegistry& registry() {
  static egsnet::DomainRegistry reg = [] {
    egsnet::SyntheticConfig sc;
    sc.image_side = 28;  // sampling cost is index work; keep the fixture light
    sc.samples_per_class = 30;
    return egsnet::generate_synthetic_suite(sc);
  }();
  return reg;
}

void BM_PlanEpisode(benchmark::State& state) {
  const auto& domain = registry().source_domains.front();
  auto rng = egsnet::make_stream(3, "bench-plan");
  for (auto _ : state) {
    auto plan = egsnet::plan_episode(domain, 5, 5, 16, rng);
    benchmark::DoNotOptimize(plan);
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_PlanEpisode);

void BM_MaterializeEpisode(benchmark::State& state) {
  const auto& domain = registry().source_domains.front();
  auto rng = egsnet::make_stream(4, "bench-materialize");
  auto plan = egsnet::plan_episode(domain, 5, 5, 16, rng);
  for (auto _ : state) {
    auto episode = egsnet::materialize_episode(domain, plan, 5);
    benchmark::DoNotOptimize(episode);
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_MaterializeEpisode);

void BM_BatchSamplerNext(benchmark::State& state) {
  const auto& domain = registry().source_domains.front();
  egsnet::BatchSampler sampler(&domain, 32, egsnet::make_stream(5, "bench-batch"));
  for (auto _ : state) {
    auto batch = sampler.next();
    benchmark::DoNotOptimize(batch);
  }
  state.SetItemsProcessed(state.iterations() * 32);
}
BENCHMARK(BM_BatchSamplerNext);

}  // namespace
