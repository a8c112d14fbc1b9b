#include <benchmark/benchmark.h>

#include "spintrack/bounds.hpp"
#include "spintrack/config.hpp"
#include "spintrack/experiment.hpp"

using namespace spintrack;

namespace {

ScenarioConfig short_fig2() {
    ScenarioConfig c = preset("fig2");
    c.horizon = 1e-3;
    c.n_trajectories = 16;
    c.base_seed = 1;
    return c;
}

void BM_EnsembleSerial(benchmark::State& state) {
    const ScenarioConfig c = short_fig2();
    for (auto _ : state) benchmark::DoNotOptimize(run_ensemble_serial(c).amse.back());
    state.SetItemsProcessed(state.iterations() * c.n_trajectories * c.n_steps());
}
BENCHMARK(BM_EnsembleSerial)->Unit(benchmark::kMillisecond);

void BM_EnsembleParallel(benchmark::State& state) {
    const ScenarioConfig c = short_fig2();
    for (auto _ : state) benchmark::DoNotOptimize(run_ensemble(c, static_cast<int>(state.range(0))).amse.back());
    state.SetItemsProcessed(state.iterations() * c.n_trajectories * c.n_steps());
}
BENCHMARK(BM_EnsembleParallel)->Arg(1)->Arg(2)->Arg(4)->Arg(8)->UseRealTime()->Unit(benchmark::kMillisecond);

void BM_BoundTableSerial(benchmark::State& state) {
    BoundQuery q;
    q.sigma0 = 10.0;
    const auto ts = logspace(1e-4, 1.0, 200), ns = logspace(1e6, 1e14, 200);
    for (auto _ : state) benchmark::DoNotOptimize(bound_table_serial(q, ts, ns).back().v_inf);
}
BENCHMARK(BM_BoundTableSerial)->Unit(benchmark::kMillisecond);

void BM_BoundTableParallel(benchmark::State& state) {
    BoundQuery q;
    q.sigma0 = 10.0;
    const auto ts = logspace(1e-4, 1.0, 200), ns = logspace(1e6, 1e14, 200);
    for (auto _ : state) {
        benchmark::DoNotOptimize(bound_table(q, ts, ns, static_cast<int>(state.range(0))).back().v_inf);
    }
}
BENCHMARK(BM_BoundTableParallel)->Arg(1)->Arg(2)->Arg(4)->Arg(8)->UseRealTime()->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
