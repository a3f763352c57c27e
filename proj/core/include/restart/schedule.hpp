#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace restart {

enum class Solver { euler, heun };

std::string to_string(Solver s);
Solver solver_from_string(const std::string& name);

// Backward-time discretization.  Entries are strictly decreasing and
// nonnegative; only the final entry may be 0.
struct TimeGrid {
    std::vector<double> times;

    int n_points() const { return static_cast<int>(times.size()); }
    int n_steps() const { return n_points() - 1; }
    double front() const { return times.front(); }
    double back() const { return times.back(); }
};

// Throws ConfigError unless the grid satisfies the invariants above.
void validate_time_grid(const TimeGrid& grid);

// Karras et al 2022, eq. (5): t_i = (t_max^(1/rho) + i/(n-1) *
// (t_min^(1/rho) - t_max^(1/rho)))^rho for i = 0..n-1.  Endpoints are
// assigned exactly rather than recomputed through the warp.
TimeGrid edm_time_grid(double t_min, double t_max, int n, double rho);

// One restart interval: after the main process reaches t_min, jump back to
// t_max and re-run the backward leg, k_iterations times.
struct RestartLevel {
    int n_restart_steps = 2;  // grid points in one backward leg
    int k_iterations = 0;
    double t_min = 0.0;
    double t_max = 0.0;
    double s_noise = 1.0;  // multiplier on the forward-noise std
};

// Main backward process plus its embedded restart intervals.  The main grid
// spans [main_t_min, main_t_max] with n_main EDM-spaced points; when
// final_zero is set a terminal 0 is appended, giving n_main steps total.
struct RestartConfig {
    int n_main = 18;
    std::vector<RestartLevel> levels;
    double main_t_min = 0.002;
    double main_t_max = 80.0;
    double rho = 7.0;
    bool final_zero = true;
};

void validate_restart_config(const RestartConfig& config);

// EDM grid for the main process, with the terminal 0 appended when
// config.final_zero is set.
TimeGrid main_time_grid(const RestartConfig& config);

// EDM grid for one restart backward leg.
TimeGrid restart_leg_grid(const RestartLevel& level, double rho);

// Rounds every level's t_min to its nearest main-grid time (exact midpoint
// ties resolve to the larger time), then re-validates ordering and overlap.
// Idempotent: embedding an embedded config is a no-op.
RestartConfig embed_restart_intervals(const TimeGrid& main, const RestartConfig& config);

// True when every level's t_min coincides with a main-grid entry.
bool is_embedded(const TimeGrid& main, const RestartConfig& config);

// Function evaluations consumed by restart sampling under this config.
// Heun main with terminal zero: 2*n_main - 1 (the final step to 0 costs one
// evaluation); Euler main: n_main.  Each restart iteration adds
// 2*(n_restart_steps - 1) for Heun legs or (n_restart_steps - 1) for Euler.
long long nfe_count(const RestartConfig& config, Solver main_solver, Solver restart_solver);

} // namespace restart
