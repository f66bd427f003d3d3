// Serial reference path vs OpenMP path on the particle loops.

#include <benchmark/benchmark.h>

#include <numeric>
#include <vector>

#include "poe/ar.hpp"
#include "poe/experts.hpp"
#include "poe/runner.hpp"
#include "poe/smc.hpp"

using namespace poe;

namespace {

Execution execution_of(const benchmark::State& state) {
  return state.range(0) == 0 ? Execution::kSerial : Execution::kParallel;
}

void label(benchmark::State& state) { state.SetLabel(std::string(to_string(execution_of(state)))); }

FlowModel bimodal_model() {
  std::vector<Eigen::VectorXd> means{Eigen::VectorXd::Constant(1, -2.0), Eigen::VectorXd::Constant(1, 2.0)};
  std::vector<Eigen::MatrixXd> covs(2, Eigen::MatrixXd::Constant(1, 1, 0.25));
  const auto e = gmm_flow_expert({0.5, 0.5}, means, covs);
  FlowProduct product(1, {{"a", e, {}, {}, {}}, {"b", e, {}, {}, {}}});
  return FlowModel(std::move(product), make_schedule(50, TimeGrid::kUniform, KappaRule{}, 2),
                   {region_indicator_reward(halfspace(Eigen::VectorXd::Ones(1), 0.0), 5.0)});
}

ArModel ar_model() {
  const SliceGeometry g{6, 4, 1};
  return ArModel(ArProduct({random_markov_ar_expert(g, 0.3, 11), random_markov_ar_expert(g, 0.3, 23)}),
                 make_schedule(6, TimeGrid::kUniform, KappaRule{}, 4), {});
}

void BM_SmcFlow(benchmark::State& state) {
  const FlowModel model = bimodal_model();
  SmcOptions o;
  o.particles = static_cast<std::size_t>(state.range(1));
  o.execution = execution_of(state);
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(run_smc(model, o, seed++).selected);
  state.SetItemsProcessed(state.iterations() * state.range(1));
  label(state);
}

void BM_SmcAr(benchmark::State& state) {
  const ArModel model = ar_model();
  SmcOptions o;
  o.particles = static_cast<std::size_t>(state.range(1));
  o.execution = execution_of(state);
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(run_smc(model, o, seed++).selected);
  state.SetItemsProcessed(state.iterations() * state.range(1));
  label(state);
}

void BM_Seeds(benchmark::State& state) {
  const auto c = config::load_config(runner::default_benchmark_dir() / "gaussian_product.json");
  std::vector<std::uint64_t> seeds(static_cast<std::size_t>(state.range(1)));
  std::iota(seeds.begin(), seeds.end(), 0);
  for (auto _ : state) benchmark::DoNotOptimize(runner::run_seeds(c, seeds, execution_of(state)).size());
  state.SetItemsProcessed(state.iterations() * state.range(1));
  label(state);
}

}  // namespace

BENCHMARK(BM_SmcFlow)->ArgsProduct({{0, 1}, {64, 256}})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SmcAr)->ArgsProduct({{0, 1}, {64, 256}})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Seeds)->ArgsProduct({{0, 1}, {128}})->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
