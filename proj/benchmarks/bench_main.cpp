#include "rgp/mdpde.hpp"
#include "rgp/methods.hpp"
#include "rgp/mme.hpp"
#include "rgp/simulate.hpp"

#include <benchmark/benchmark.h>

using namespace rgp;

namespace {

Simulation desk_simulation(Index markers) {
  SimulationConfig cfg;
  cfg.n_genotypes = 100;
  cfg.n_markers = markers;
  cfg.block_layout = std::vector<Index>(20, 5);
  cfg.sigma2_g = 0.1;
  cfg.seed = 7;
  return simulate(cfg);
}

void BM_SolveMme(benchmark::State& state) {
  const auto sim = desk_simulation(state.range(0));
  const VectorXd lambda = VectorXd::Constant(sim.dataset.n_markers() + sim.dataset.n_blocks(), 10.0);
  for (auto _ : state) benchmark::DoNotOptimize(solve_mme(sim.dataset, lambda));
}
BENCHMARK(BM_SolveMme)->Arg(50)->Arg(200)->Arg(1000)->Unit(benchmark::kMillisecond);

void BM_DpdObjective(benchmark::State& state) {
  const auto sim = desk_simulation(state.range(0));
  VectorXd gamma(1);
  gamma << 0.05;
  VarianceComponents vc;
  vc.sigma2_g = 0.1;
  vc.sigma2_b = 6.27;
  vc.sigma2_e = 53.8715;
  for (auto _ : state) benchmark::DoNotOptimize(dpd_objective(sim.dataset, gamma, vc, 0.5));
}
BENCHMARK(BM_DpdObjective)->Arg(50)->Arg(200)->Unit(benchmark::kMillisecond);

void BM_FitMethod(benchmark::State& state, const char* method) {
  const auto sim = desk_simulation(100);
  const auto spec = MethodSpec::parse(method);
  for (auto _ : state) benchmark::DoNotOptimize(fit_method(sim.dataset, spec));
}
BENCHMARK_CAPTURE(BM_FitMethod, mle, "mle")->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_FitMethod, rmla, "rmla")->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_FitMethod, rob1, "rob1")->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
