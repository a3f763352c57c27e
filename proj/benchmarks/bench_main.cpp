#include <algorithm>

#include <benchmark/benchmark.h>

#include <Eigen/Core>

#include "restart/experiments.hpp"
#include "restart/metrics.hpp"
#include "restart/rng.hpp"
#include "restart/samplers.hpp"
#include "restart/schedule.hpp"
#include "restart/score_field.hpp"

namespace {

using namespace restart;

EmpiricalDataset bench_dataset(int n_points, int dim) {
    SyntheticSpec spec;
    spec.n_points = n_points;
    spec.ambient_dim = dim;
    spec.base_dim = std::min(4, dim);
    spec.seed = 7;
    return build_synthetic_dataset(spec);
}

void bm_empirical_eval_batch(benchmark::State& state) {
    const int n_points = static_cast<int>(state.range(0));
    const int batch = static_cast<int>(state.range(1));
    EmpiricalDataset ds = bench_dataset(n_points, 20);
    EmpiricalScoreField field(ds);
    Eigen::MatrixXd xs = sample_true_at(ds, 1.0, batch, 3);
    Eigen::MatrixXd out(batch, 20);
    for (auto _ : state) {
        field.eval_batch(xs, 1.0, out);
        benchmark::DoNotOptimize(out.data());
    }
    state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(bm_empirical_eval_batch)->Args({100, 64})->Args({2000, 64})->Args({2000, 256});

void bm_mixture_eval_batch(benchmark::State& state) {
    const int batch = static_cast<int>(state.range(0));
    Eigen::MatrixXd means(2, 20);
    means.row(0).setConstant(3.0);
    means.row(1).setConstant(-3.0);
    GaussianMixture mix(means, Eigen::Vector2d(0.3, 0.7), Eigen::Vector2d(1.0, 1.0));
    EmpiricalDataset ds = bench_dataset(100, 20);
    Eigen::MatrixXd xs = sample_true_at(ds, 1.0, batch, 3);
    Eigen::MatrixXd out(batch, 20);
    for (auto _ : state) {
        mix.eval_batch(xs, 1.0, out);
        benchmark::DoNotOptimize(out.data());
    }
    state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(bm_mixture_eval_batch)->Arg(64)->Arg(1024);

void bm_w1_assignment(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    EmpiricalDataset ds = bench_dataset(500, 20);
    Eigen::MatrixXd a = sample_true_at(ds, 0.5, n, 1);
    Eigen::MatrixXd b = sample_true_at(ds, 0.5, n, 2);
    for (auto _ : state) {
        double w = w1_assignment(a, b);
        benchmark::DoNotOptimize(w);
    }
}
BENCHMARK(bm_w1_assignment)->Arg(64)->Arg(128)->Arg(256)->Arg(512);

void bm_ode_solve(benchmark::State& state) {
    const int n_traj = static_cast<int>(state.range(0));
    EmpiricalDataset ds = bench_dataset(500, 20);
    EmpiricalScoreField field(ds);
    SamplerSpec spec;  // heun over 18 points spanning the full range
    Eigen::MatrixXd x0(n_traj, ds.dim());
    for (int i = 0; i < n_traj; ++i) {
        RngStream rng(5, static_cast<std::uint64_t>(i), kStagePrior);
        x0.row(i) = (spec.t_max * rng.normal_vec(ds.dim())).transpose();
    }
    TimeGrid grid = sampler_grid(spec);
    for (auto _ : state) {
        SampleBatch batch = ode_solve(field, x0, grid, Solver::heun);
        benchmark::DoNotOptimize(batch.points.data());
    }
    state.SetItemsProcessed(state.iterations() * n_traj);
}
BENCHMARK(bm_ode_solve)->Arg(16)->Arg(64);

void bm_restart_sample(benchmark::State& state) {
    const int k = static_cast<int>(state.range(0));
    EmpiricalDataset ds = bench_dataset(500, 20);
    EmpiricalScoreField field(ds);
    RestartConfig config;
    RestartLevel level;
    level.n_restart_steps = 3;
    level.k_iterations = k;
    level.t_min = 0.06;
    level.t_max = 0.30;
    config.levels.push_back(level);
    config = embed_restart_intervals(main_time_grid(config), config);
    Eigen::MatrixXd x0(16, ds.dim());
    for (int i = 0; i < 16; ++i) {
        RngStream rng(5, static_cast<std::uint64_t>(i), kStagePrior);
        x0.row(i) = (config.main_t_max * rng.normal_vec(ds.dim())).transpose();
    }
    for (auto _ : state) {
        SampleBatch batch =
            restart_sample(field, x0, config, Solver::heun, Solver::heun, 11);
        benchmark::DoNotOptimize(batch.points.data());
    }
    state.SetItemsProcessed(state.iterations() * 16);
}
BENCHMARK(bm_restart_sample)->Arg(2)->Arg(10);

} // namespace

BENCHMARK_MAIN();
