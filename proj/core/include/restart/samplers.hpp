#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "restart/rng.hpp"
#include "restart/schedule.hpp"
#include "restart/score_field.hpp"

namespace restart {

// Stochastic churn (EDM algorithm 2): inside [s_min, s_max] each step first
// inflates t by gamma = min(s_churn / n_steps, sqrt(2) - 1) and adds
// s_noise * sqrt(t_hat^2 - t^2) of fresh noise before the solver step.
struct ChurnParams {
    double s_churn = 0.0;
    double s_min = 0.0;
    double s_max = std::numeric_limits<double>::infinity();
    double s_noise = 1.0;
};

enum class SamplerKind { ode, sde, improved_sde, restart };

std::string to_string(SamplerKind kind);
SamplerKind sampler_kind_from_string(const std::string& name);

// Everything needed to run one sampler.  For ode/sde/improved_sde the grid
// spans [t_min, t_max] with n_steps steps (a terminal 0 is appended when
// final_zero is set, and counts as one of the steps).  The restart kind is
// configured entirely by `restart`.
struct SamplerSpec {
    SamplerKind kind = SamplerKind::ode;
    Solver solver_main = Solver::heun;
    Solver solver_restart = Solver::heun;
    int n_steps = 18;
    double t_min = 0.002;
    double t_max = 80.0;
    double rho = 7.0;
    bool final_zero = true;
    double noise_mult = 1.0;  // sde: m in the generalized backward SDE
    ChurnParams churn;        // improved_sde; restart main process when enabled
    bool churn_in_restart = false;
    RestartConfig restart;
};

void validate_sampler_spec(const SamplerSpec& spec);

// Grid realizing spec.n_steps for the non-restart kinds.
TimeGrid sampler_grid(const SamplerSpec& spec);

// Final states of a batch of trajectories.  nfe counts score evaluations per
// trajectory; rows listed in `failed` hit the blowup guard (norm > 1e6 or a
// non-finite state) and were frozen at their last finite value.
struct SampleBatch {
    Eigen::MatrixXd points;
    long long nfe = 0;
    std::uint64_t seed = 0;
    std::vector<int> failed;
    std::string spec_summary;
};

// One explicit Euler step of the backward ODE dx = -t * f(x, t) dt from
// t_cur to t_next (t_next < t_cur): x - (t_next - t_cur) * t_cur * f(x, t_cur).
Eigen::VectorXd euler_step(const ScoreField& f, const Eigen::VectorXd& x,
                           double t_cur, double t_next);

// Heun step: trapezoidal correction of the Euler step, except that a step
// landing exactly at t = 0 stays first order (the score is undefined there).
Eigen::VectorXd heun_step(const ScoreField& f, const Eigen::VectorXd& x,
                          double t_cur, double t_next);

SampleBatch ode_solve(const ScoreField& f, const Eigen::MatrixXd& x0,
                      const TimeGrid& grid, Solver solver);

// Euler-Maruyama for the generalized backward SDE
//   x <- x - dt * (1 + m) * t * f(x, t) + sqrt(2 m t |dt|) * xi;
// m = 1 is the standard reverse SDE, m = 0 degenerates to the Euler ODE.
SampleBatch sde_solve(const ScoreField& f, const Eigen::MatrixXd& x0,
                      const TimeGrid& grid, double noise_mult,
                      std::uint64_t seed, std::uint64_t stage = kStageSampler);

SampleBatch improved_sde_solve(const ScoreField& f, const Eigen::MatrixXd& x0,
                               const TimeGrid& grid, const ChurnParams& churn,
                               std::uint64_t seed, std::uint64_t stage = kStageSampler);

// Restart sampling: run the main backward process; whenever it reaches a
// level's t_min, repeat k_iterations times {jump to t_max with fresh noise of
// std s_noise * sqrt(t_max^2 - t_min^2), run the backward leg down to t_min}.
// The forward jumps consume no score evaluations.  Levels must be embedded in
// the main grid (see embed_restart_intervals).
SampleBatch restart_sample(const ScoreField& f, const Eigen::MatrixXd& x0,
                           const RestartConfig& config, Solver solver_main,
                           Solver solver_restart, std::uint64_t seed,
                           std::uint64_t stage = kStageSampler,
                           const ChurnParams* churn = nullptr);

// Dispatch on spec.kind; x0 rows are trajectories at the grid start time.
SampleBatch run_sampler(const ScoreField& f, const Eigen::MatrixXd& x0,
                        const SamplerSpec& spec, std::uint64_t seed,
                        std::uint64_t stage = kStageSampler);

std::string describe(const SamplerSpec& spec);

} // namespace restart
