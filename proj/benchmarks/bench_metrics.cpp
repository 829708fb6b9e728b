#include <torch/torch.h>

#include <benchmark/benchmark.h>

#include "egsnet/metrics.hpp"
#include "egsnet/model.hpp"

namespace {

// One 5-way episode at training shape: K support shots and 16 queries per way.
struct EpisodeFeatures {
  torch::Tensor support;
  torch::Tensor support_labels;
  torch::Tensor query;
};

EpisodeFeatures make_features(int64_t k_shot, int64_t dim) {
  torch::manual_seed(1);
  EpisodeFeatures f;
  f.support = torch::randn({5 * k_shot, dim});
  f.support_labels = torch::arange(5, torch::kInt64).repeat_interleave(k_shot);
  f.query = torch::randn({5 * 16, dim});
  return f;
}

void BM_PrototypeScores(benchmark::State& state) {
  auto f = make_features(state.range(0), state.range(1));
  torch::NoGradGuard no_grad;
  for (auto _ : state) {
    auto scores = egsnet::prototype_scores(f.support, f.support_labels, f.query);
    benchmark::DoNotOptimize(scores);
  }
}
BENCHMARK(BM_PrototypeScores)->Args({1, 256})->Args({5, 256})->Args({5, 1600});

void BM_CosineMatchScores(benchmark::State& state) {
  auto f = make_features(state.range(0), state.range(1));
  torch::NoGradGuard no_grad;
  for (auto _ : state) {
    auto scores = egsnet::cosine_match_scores(f.support, f.support_labels, f.query);
    benchmark::DoNotOptimize(scores);
  }
}
BENCHMARK(BM_CosineMatchScores)->Args({1, 256})->Args({5, 256})->Args({5, 1600});

void BM_RelationScores(benchmark::State& state) {
  auto f = make_features(state.range(0), state.range(1));
  torch::manual_seed(2);
  egsnet::RelationMetric relation(state.range(1));
  torch::NoGradGuard no_grad;
  for (auto _ : state) {
    auto scores = egsnet::relation_scores(relation, f.support, f.support_labels, f.query);
    benchmark::DoNotOptimize(scores);
  }
}
BENCHMARK(BM_RelationScores)->Args({1, 256})->Args({5, 256})->Args({5, 1600});

void BM_AssignNearest(benchmark::State& state) {
  auto f = make_features(5, 256);
  torch::NoGradGuard no_grad;
  auto scores = egsnet::prototype_scores(f.support, f.support_labels, f.query);
  for (auto _ : state) {
    auto assigned = egsnet::assign_nearest(scores);
    benchmark::DoNotOptimize(assigned);
  }
}
BENCHMARK(BM_AssignNearest);

}  // namespace
