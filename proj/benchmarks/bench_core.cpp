#include <benchmark/benchmark.h>

#include "irbm/inference.hpp"
#include "irbm/model.hpp"
#include "irbm/training.hpp"

namespace {

irbm::ModelParams random_model(std::size_t d, std::size_t l, std::size_t c) {
  irbm::ModelParams p = irbm::ModelParams::zeros(d, c, {}, l);
  irbm::RngStream rng(7, irbm::StreamPurpose::kCheck);
  for (double& w : p.weights.flat()) w = 0.1 * rng.normal();
  for (double& u : p.label_weights.flat()) u = 0.1 * rng.normal();
  for (double& b : p.hidden_bias) b = 0.1 * rng.normal();
  return p;
}

irbm::VisibleVector random_visible(std::size_t d, std::uint64_t index) {
  irbm::RngStream rng(11, irbm::StreamPurpose::kCheck, 0, index);
  irbm::VisibleVector v(d);
  for (auto& b : v) b = rng.bernoulli(0.5) ? 1 : 0;
  return v;
}

void BM_ZPosterior(benchmark::State& state) {
  const auto l = static_cast<std::size_t>(state.range(0));
  const auto p = random_model(784, l, 0);
  const auto v = random_visible(784, 0);
  for (auto _ : state) benchmark::DoNotOptimize(irbm::z_posterior(p, v).log_norm);
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_ZPosterior)->Arg(50)->Arg(200)->Arg(800);

void BM_LabelConditional(benchmark::State& state) {
  const auto l = static_cast<std::size_t>(state.range(0));
  const auto p = random_model(784, l, 10);
  const auto v = random_visible(784, 0);
  for (auto _ : state) benchmark::DoNotOptimize(irbm::cond_y_given_v(p, v));
}
BENCHMARK(BM_LabelConditional)->Arg(50)->Arg(200)->Arg(800);

void BM_GibbsStep(benchmark::State& state) {
  const auto p = random_model(784, static_cast<std::size_t>(state.range(0)), 0);
  irbm::GibbsChainState chain{random_visible(784, 1), 1, 0};
  irbm::RngStream rng(3, irbm::StreamPurpose::kSampling);
  for (auto _ : state) chain = irbm::gibbs_step_generative(p, chain, rng);
}
BENCHMARK(BM_GibbsStep)->Arg(50)->Arg(200);

void BM_UpdateStep(benchmark::State& state) {
  irbm::TrainConfig config;
  config.minibatch_size = 20;
  config.regroup_mode = irbm::RegroupMode::kFixedFraction;
  config = irbm::resolve_defaults(config, 1000);
  std::vector<irbm::VisibleVector> data;
  for (std::size_t i = 0; i < config.minibatch_size; ++i) data.push_back(random_visible(784, i));
  irbm::Minibatch batch;
  for (const auto& v : data) batch.visible.emplace_back(v);
  irbm::TrainingState s = irbm::init_training(784, 0, config);
  s.params = random_model(784, static_cast<std::size_t>(state.range(0)), 0);
  s.optimizer = irbm::OptimizerState::for_model(s.params);
  for (auto _ : state) {
    state.PauseTiming();
    irbm::TrainingState work = s;
    state.ResumeTiming();
    benchmark::DoNotOptimize(irbm::update_step(work, batch, config).num_hidden);
  }
}
BENCHMARK(BM_UpdateStep)->Arg(50)->Arg(200)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
