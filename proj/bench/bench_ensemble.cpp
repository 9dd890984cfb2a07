// Serial reference vs OpenMP ensemble on the bundled-style 2x2 problem.
#include <benchmark/benchmark.h>

#include "ldpg/commands.hpp"

namespace {

ldpg::EnsembleConfig bench_config(long M, int workers) {
    ldpg::Mdp mdp;
    mdp.n_states = 2;
    mdp.n_actions = 2;
    mdp.discount = 0.9;
    mdp.transition.resize(4, 2);
    mdp.transition << 0.8, 0.2, 0.3, 0.7, 0.6, 0.4, 0.1, 0.9;
    mdp.cost.resize(2, 2);
    mdp.cost << 1.0, 0.4, 0.2, 0.9;
    mdp.init_dist = ldpg::Vector::Constant(2, 0.5);

    ldpg::EnsembleConfig c;
    c.mdp = mdp;
    c.tau = 0.5;
    c.soft = ldpg::soft_optimal(mdp, c.tau);
    c.theta_init = c.soft.theta_star;
    c.theta_init.theta(0, 0) += 0.5;
    c.schedule = {20.0, 5};
    c.noise = ldpg::NoiseModel::gaussian_isotropic(0.05);
    c.T = 500;
    c.M = M;
    c.base_seed = 1;
    c.checkpoints = ldpg::geometric_checkpoints(c.T);
    c.monitors.push_back(ldpg::Monitor::gap("gap", 1e-3));
    c.workers = workers;
    return c;
}

void BM_EnsembleSerial(benchmark::State& state) {
    const ldpg::EnsembleConfig c = bench_config(state.range(0), 1);
    for (auto _ : state) benchmark::DoNotOptimize(ldpg::run_ensemble_serial(c));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_EnsembleOmp(benchmark::State& state) {
    const ldpg::EnsembleConfig c = bench_config(state.range(0), int(state.range(1)));
    for (auto _ : state) benchmark::DoNotOptimize(ldpg::run_ensemble(c));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

}  // namespace

BENCHMARK(BM_EnsembleSerial)->Arg(256)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_EnsembleOmp)->Args({256, 2})->Args({256, 4})->Args({256, 8})->Unit(benchmark::kMillisecond)->UseRealTime();

BENCHMARK_MAIN();
