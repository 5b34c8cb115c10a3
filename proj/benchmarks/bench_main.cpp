#include <benchmark/benchmark.h>

#include <cstdio>
#include <vector>

#include "flowrl/common/rng.hpp"
#include "flowrl/datapipe/datapipe.hpp"
#include "flowrl/flowcore/flow.hpp"
#include "flowrl/toyenv/toyenv.hpp"

using namespace flowrl;

namespace {

void BM_VelocityEvaluate(benchmark::State& state) {
  const VelocityField m(toy::default_architecture(), 1);
  const auto t = toy::make_task(0);
  auto eng = make_engine(2);
  const Vector x = standard_normal(toy::kStateDim, eng);
  const Vector c = t.condition();
  for (auto _ : state) benchmark::DoNotOptimize(m.evaluate(x, 0.5, c));
}
BENCHMARK(BM_VelocityEvaluate);

void BM_VelocityForwardBatch(benchmark::State& state) {
  const VelocityField m(toy::default_architecture(), 1);
  const auto b = static_cast<Eigen::Index>(state.range(0));
  auto eng = make_engine(3);
  Matrix x(toy::kStateDim, b), c(toy::kCondDim, b);
  for (Eigen::Index j = 0; j < b; ++j) {
    x.col(j) = standard_normal(toy::kStateDim, eng);
    c.col(j) = toy::make_task(static_cast<std::uint64_t>(j)).condition();
  }
  const std::vector<double> ts(static_cast<std::size_t>(b), 0.5);
  for (auto _ : state) benchmark::DoNotOptimize(m.forward(x, ts, c));
  state.SetItemsProcessed(state.iterations() * b);
}
BENCHMARK(BM_VelocityForwardBatch)->Arg(12)->Arg(64)->Arg(256);

void BM_SdeSample(benchmark::State& state) {
  const VelocityField m(toy::default_architecture(), 1);
  const auto t = toy::make_task(0);
  SamplerConfig cfg;
  cfg.steps = static_cast<int>(state.range(0));
  auto eng = make_engine(4);
  const Vector c = t.condition();
  for (auto _ : state) {
    const Vector x0 = standard_normal(toy::kStateDim, eng);
    benchmark::DoNotOptimize(sde_sample(m, x0, c, cfg, eng));
  }
}
BENCHMARK(BM_SdeSample)->Arg(10)->Arg(20)->Arg(40);

void BM_KCenter(benchmark::State& state) {
  const auto n = static_cast<int>(state.range(0));
  auto eng = make_engine(5);
  std::normal_distribution<double> g;
  std::vector<data::EmbeddedSample> pts;
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd e(64);
    for (auto& v : e) v = g(eng);
    char id[16];
    std::snprintf(id, sizeof id, "s%06d", i);
    pts.push_back({id, e, ""});
  }
  for (auto _ : state) benchmark::DoNotOptimize(data::k_center_greedy(pts, 100));
}
BENCHMARK(BM_KCenter)->Arg(1000)->Arg(10000)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
