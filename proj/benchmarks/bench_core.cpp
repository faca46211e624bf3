// SPDX-License-Identifier: Apache-2.0
//
// Copyright 2026 The visionrf Authors

#include <benchmark/benchmark.h>

#include "pipeline.hpp"
#include "visionrf/config.hpp"
#include "visionrf/dataset.hpp"
#include "visionrf/depthcam.hpp"
#include "visionrf/nn/adam.hpp"
#include "visionrf/predictor.hpp"

#include <random>

namespace visionrf {
namespace {

void BM_RenderDepth(benchmark::State& state) {
  const ScenarioConfig c = reference_config();
  Rng rng(1);
  const Scene s = initial_scene(c, rng);
  for (auto _ : state) benchmark::DoNotOptimize(render_depth(s, c.camera));
  state.SetItemsProcessed(state.iterations() * c.camera.width * c.camera.height);
}
BENCHMARK(BM_RenderDepth);

void BM_GenerateEpisode(benchmark::State& state) {
  const ScenarioConfig c = reference_config();
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(generate_episode(c, ++seed));
}
BENCHMARK(BM_GenerateEpisode)->Unit(benchmark::kMillisecond);

nn::NetworkSpec conv_spec() {
  nn::NetworkSpec s;
  s.inputs = {nn::InputSpec{"x", {1, 48, 64}, 1}};
  s.branches = {nn::Branch{0, {nn::Conv2D{1, 8, 4, 2}, nn::ReLU{}, nn::Conv2D{8, 16, 4, 2}}}};
  return s;
}

nn::Tensor random_input(std::vector<int> shape, std::uint64_t seed) {
  nn::Tensor t(std::move(shape));
  Rng rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (double& v : t.values()) v = u(rng);
  return t;
}

void BM_ConvForward(benchmark::State& state) {
  const auto spec = conv_spec();
  Rng rng(1);
  const auto p = nn::init_params(spec, rng);
  const auto batch = static_cast<int>(state.range(0));
  const std::vector<nn::Tensor> x{random_input({batch, 1, 48, 64}, 2)};
  for (auto _ : state) benchmark::DoNotOptimize(nn::predict(spec, p, x));
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_ConvForward)->Arg(1)->Arg(32)->Unit(benchmark::kMicrosecond);

void BM_ConvBackward(benchmark::State& state) {
  const auto spec = conv_spec();
  Rng rng(1);
  const auto p = nn::init_params(spec, rng);
  const auto batch = static_cast<int>(state.range(0));
  const auto f = nn::forward(spec, p, {random_input({batch, 1, 48, 64}, 2)});
  const nn::Tensor g(f.output.shape(), 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(nn::backward(spec, p, f.cache, g));
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_ConvBackward)->Arg(1)->Arg(32)->Unit(benchmark::kMicrosecond);

// One Adam step of the image+rss predictor at the default size (batch 32, 8 frames of 64x48).
void BM_PredictorStep(benchmark::State& state) {
  const auto variant = static_cast<PredictorVariant>(state.range(0));
  const auto spec = build_predictor(variant, PredictorDims{});
  Rng rng(1);
  auto p = nn::init_params(spec, rng);
  auto adam = nn::make_adam_state(p);
  std::vector<nn::Tensor> x;
  std::uint64_t seed = 2;
  for (const auto& in : spec.inputs) {
    std::vector<int> shape{32, in.steps};
    shape.insert(shape.end(), in.shape.begin(), in.shape.end());
    x.push_back(random_input(shape, seed++));
  }
  const nn::Tensor y({32, 1}, 0.0);
  for (auto _ : state) {
    const auto f = nn::forward(spec, p, x);
    const auto l = nn::mse_loss(f.output, y);
    nn::adam_step(p, nn::backward(spec, p, f.cache, l.grad, {false}).params, adam);
  }
  state.SetLabel(std::string(variant_name(variant)));
}
BENCHMARK(BM_PredictorStep)
    ->Arg(static_cast<int>(PredictorVariant::kRf))
    ->Arg(static_cast<int>(PredictorVariant::kImgRf))
    ->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace visionrf

int main(int argc, char** argv) {
  visionrf::pipeline::tune_allocator();
  benchmark::Initialize(&argc, argv);
  if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
  return 0;
}
