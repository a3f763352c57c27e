#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "restart/metrics.hpp"
#include "restart/samplers.hpp"
#include "restart/schedule.hpp"
#include "restart/score_field.hpp"

namespace restart {

// Two-component Gaussian mixture in a low-dimensional space, pushed through a
// random linear map into the ambient space, then rescaled so every ambient
// coordinate has unit empirical variance.
struct SyntheticSpec {
    int base_dim = 4;
    int ambient_dim = 20;
    int n_points = 2000;
    double weight_pos = 0.3;     // mass of the +offset component
    double offset = 3.0;         // component means at +-offset * ones
    double component_std = 1.0;
    std::uint64_t seed = 0;
};

EmpiricalDataset build_synthetic_dataset(const SyntheticSpec& spec);

// n draws from p_t: a uniformly chosen dataset point plus t * N(0, I).
// t = 0 returns dataset members.
Eigen::MatrixXd sample_true_at(const EmpiricalDataset& ds, double t, int n,
                               std::uint64_t seed, std::uint64_t stage = kStageTrueInit);

// Comparison window: the sampler under test runs only on [t_min, t_max].
struct Window {
    double t_min = 1.0;
    double t_max = 1.5;
};

// Shared pipeline around the window: first-order ODE from t_start down to
// t_max and from t_min down to t_end, with one extra Euler step onto t = 0.
struct PipelineSettings {
    double t_start = 5.0;
    double t_end = 1e-3;
    int steps_before = 64;
    int steps_after = 128;
    Solver outer_solver = Solver::euler;
    double rho = 7.0;
    int n_samples = 1000;
};

struct ErrorDecomposition {
    double total_w1 = 0.0;       // W1(p-run, dataset)
    double contracted_w1 = 0.0;  // W1(p-run, q-run)
    double additional_w1 = 0.0;  // W1(q-run, dataset)
    long long window_nfe = 0;    // score evaluations inside the window
    int n_samples = 0;
    std::uint64_t seed = 0;
};

// Intermediate populations, exposed for tests.
struct DecomposeTrace {
    Eigen::MatrixXd p_at_window;  // p-run entering the window
    Eigen::MatrixXd q_at_window;  // q-run initial draws at window t_max
    Eigen::MatrixXd p_final;
    Eigen::MatrixXd q_final;
    Eigen::MatrixXd reference;    // dataset draws
};

// Runs the p-run (prior at t_start) and the q-run (true samples at window
// t_max) through the same window sampler and tail, with paired noise streams,
// and splits the endpoint error into contracted and additional parts.
ErrorDecomposition decompose_errors(const EmpiricalDataset& ds, const ScoreField& f,
                                    const SamplerSpec& spec, const Window& window,
                                    const PipelineSettings& pipe, std::uint64_t seed,
                                    DecomposeTrace* trace = nullptr);

// Helpers that build window-restricted sampler specs (final_zero off, grid
// pinned to the window bounds).
SamplerSpec window_ode_spec(int n_steps, const Window& w, Solver solver = Solver::euler);
SamplerSpec window_sde_spec(int n_steps, double noise_mult, const Window& w);
SamplerSpec window_improved_sde_spec(int n_steps, const ChurnParams& churn, const Window& w);
SamplerSpec window_restart_spec(int down_steps, int n_restart_steps, int k_iterations,
                                const Window& w, Solver solver = Solver::euler,
                                double s_noise = 1.0);

struct SweepCell {
    SamplerSpec spec;
    std::string label;
};

struct SweepSettings {
    Window window;
    PipelineSettings pipe;
    int n_seed_reps = 5;
    std::uint64_t base_seed = 0;
    int threads = 1;
};

struct SweepRecord {
    SweepCell cell;
    long long nfe = 0;
    double total_w1 = 0.0;
    double contracted_w1 = 0.0;
    double additional_w1 = 0.0;
    double wall_ms = 0.0;
    int n_seed_reps = 0;
    std::uint64_t seed_group = 0;
    int n_samples = 0;
    std::string error;  // nonempty when every repetition failed

    bool ok() const { return error.empty(); }
};

// Evaluates every cell (concurrently when settings.threads > 1), averaging
// the three W1 errors over n_seed_reps seeds.  Per-cell failures are recorded
// in the record instead of aborting the sweep, so the output always has one
// record per cell, in cell order.
std::vector<SweepRecord> run_sweep(const EmpiricalDataset& ds, const ScoreField& f,
                                   const std::vector<SweepCell>& cells,
                                   const SweepSettings& settings);

// Grids used by the synthetic comparison.
std::vector<SweepCell> ode_sweep_cells(const Window& w);
std::vector<SweepCell> sde_sweep_cells(const Window& w);
std::vector<SweepCell> restart_sweep_cells(const Window& w);
std::vector<SweepCell> improved_sde_sweep_cells(const Window& w);
// Three NFE-aligned cells per sampler kind for quick trend checks.
std::vector<SweepCell> smoke_sweep_cells(const Window& w);

// Indices of records on the lower-left frontier, in ascending-x order: one
// record per x value (lowest y wins, earliest record on exact ties), strictly
// decreasing y.  Records with non-finite keys are skipped.
std::vector<int> pareto_frontier(const std::vector<double>& xs, const std::vector<double>& ys);
std::vector<int> pareto_frontier(const std::vector<SweepRecord>& records,
                                 const std::string& x_key, const std::string& y_key);

double record_key(const SweepRecord& record, const std::string& key);

struct DecayStudyOptions {
    int n_pairs = 1024;
    int k_max = 10;
    int leg_steps = 8;         // Euler steps per backward leg
    double b_override = 0.0;   // > 0 replaces the measured diameter
    bool identical_init = false;  // start both chains from the same points
    std::uint64_t seed = 0;
};

struct DecayCurve {
    std::vector<double> non_collided;  // fraction not yet collided after k iterations
    std::vector<double> w1;            // endpoint population distance after k iterations
    double lambda_hat = 0.0;
    double b_measured = 0.0;
};

// Couples pairs of restart chains through maximal_coupling_step at every
// forward jump and tracks how fast the populations merge; the decay should
// stay below (1 - lambda_hat)^k up to sampling noise.
DecayCurve contraction_decay_study(const EmpiricalDataset& ds, const ScoreField& f,
                                   const Window& w, const DecayStudyOptions& opt);

} // namespace restart
