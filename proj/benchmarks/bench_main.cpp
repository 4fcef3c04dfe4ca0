#include <benchmark/benchmark.h>

#include <random>

#include "dasa/diagnostics.hpp"
#include "dasa/train.hpp"

namespace {

using namespace dasa;

Tensor random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  std::vector<double> v(r * c);
  for (double& x : v) x = nd(rng);
  return Tensor::matrix(r, c, std::move(v));
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor a = random_matrix(n, n, 1), b = random_matrix(n, n, 2);
  NoGradGuard g;
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
}
BENCHMARK(BM_Matmul)->Arg(16)->Arg(64)->Arg(128);

void BM_GenerateScene(benchmark::State& state) {
  const auto cfg = scene::GenConfig::defaults();
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(scene::generate_scene(cfg, ++seed));
}
BENCHMARK(BM_GenerateScene);

struct DeskSample {
  ModelConfig cfg;
  ParamStore ps;
  train::Example ex;
};

DeskSample desk_sample(objenc::EncoderRole role) {
  auto gen = scene::GenConfig::defaults();
  gen.num_scenes = 1;
  const auto corpus = scene::generate_corpus(gen, 5);
  const auto space = net::InputSpace::from_config(gen);
  DeskSample s;
  space.apply_to(s.cfg);
  s.ps = ParamStore(1);
  net::register_model(s.ps, s.cfg, role);
  s.ex = train::build_examples(corpus, corpus.records, space, gen,
                               role == objenc::EncoderRole::student)
             .front();
  return s;
}

void BM_Predict(benchmark::State& state) {
  const auto role = state.range(0) ? objenc::EncoderRole::student : objenc::EncoderRole::teacher;
  const DeskSample s = desk_sample(role);
  for (auto _ : state) benchmark::DoNotOptimize(net::predict(s.ex.input, s.ps, s.cfg, role));
}
BENCHMARK(BM_Predict)->Arg(0)->Arg(1);

void BM_TrainStep(benchmark::State& state) {
  const auto role = state.range(0) ? objenc::EncoderRole::student : objenc::EncoderRole::teacher;
  DeskSample s = desk_sample(role);
  train::StageConfig stage;
  stage.role = role;
  stage.kind = train::StageKind::gtas_spatial;
  for (auto _ : state) {
    s.ps.zero_grad();
    auto l = train::example_loss(s.ex, s.ps, s.cfg, stage, nullptr);
    l.total.backward();
  }
}
BENCHMARK(BM_TrainStep)->Arg(0)->Arg(1);

}  // namespace
BENCHMARK_MAIN();
