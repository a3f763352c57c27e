#include "restart/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "restart/errors.hpp"

namespace restart {

std::string to_string(Solver s) {
    return s == Solver::euler ? "euler" : "heun";
}

Solver solver_from_string(const std::string& name) {
    if (name == "euler") return Solver::euler;
    if (name == "heun") return Solver::heun;
    throw ConfigError("unknown solver '" + name + "' (expected euler or heun)");
}

void validate_time_grid(const TimeGrid& grid) {
    if (grid.n_points() < 2) throw ConfigError("time grid needs at least 2 points");
    for (int i = 0; i < grid.n_points(); ++i) {
        double t = grid.times[i];
        if (!std::isfinite(t) || t < 0.0)
            throw ConfigError("time grid entries must be finite and nonnegative");
        if (t == 0.0 && i != grid.n_points() - 1)
            throw ConfigError("only the final time grid entry may be 0");
        if (i > 0 && !(t < grid.times[i - 1]))
            throw ConfigError("time grid must be strictly decreasing");
    }
}

TimeGrid edm_time_grid(double t_min, double t_max, int n, double rho) {
    if (!(t_min >= 0.0) || !(t_max > t_min))
        throw ConfigError("edm_time_grid requires 0 <= t_min < t_max");
    if (n < 2) throw ConfigError("edm_time_grid requires n >= 2");
    if (!(rho > 0.0)) throw ConfigError("edm_time_grid requires rho > 0");

    TimeGrid grid;
    grid.times.resize(n);
    double inv_rho = 1.0 / rho;
    double hi = std::pow(t_max, inv_rho);
    double lo = std::pow(t_min, inv_rho);
    for (int i = 1; i < n - 1; ++i) {
        double u = static_cast<double>(i) / static_cast<double>(n - 1);
        grid.times[i] = std::pow(hi + u * (lo - hi), rho);
    }
    grid.times[0] = t_max;
    grid.times[n - 1] = t_min;
    validate_time_grid(grid);
    return grid;
}

namespace {

void validate_level(const RestartLevel& level) {
    if (level.n_restart_steps < 2)
        throw ConfigError("restart level needs n_restart_steps >= 2");
    if (level.k_iterations < 0)
        throw ConfigError("restart level needs k_iterations >= 0");
    if (!(level.t_min > 0.0))
        throw ConfigError("restart level needs t_min > 0");
    if (!(level.t_max > level.t_min))
        throw ConfigError("restart level needs t_max > t_min");
    if (!(level.s_noise >= 1.0))
        throw ConfigError("restart level needs s_noise >= 1");
}

} // namespace

void validate_restart_config(const RestartConfig& config) {
    if (config.n_main < 2) throw ConfigError("restart config needs n_main >= 2");
    if (!(config.main_t_min > 0.0) || !(config.main_t_max > config.main_t_min))
        throw ConfigError("restart config needs 0 < main_t_min < main_t_max");
    if (!(config.rho > 0.0)) throw ConfigError("restart config needs rho > 0");
    for (size_t j = 0; j < config.levels.size(); ++j) {
        validate_level(config.levels[j]);
        if (j > 0) {
            // Levels run from high noise to low; intervals may touch but not overlap.
            if (!(config.levels[j].t_max <= config.levels[j - 1].t_min))
                throw ConfigError("restart levels must be sorted by descending t_max "
                                  "with non-overlapping intervals");
        }
    }
}

TimeGrid main_time_grid(const RestartConfig& config) {
    validate_restart_config(config);
    TimeGrid grid = edm_time_grid(config.main_t_min, config.main_t_max, config.n_main, config.rho);
    if (config.final_zero) grid.times.push_back(0.0);
    return grid;
}

TimeGrid restart_leg_grid(const RestartLevel& level, double rho) {
    return edm_time_grid(level.t_min, level.t_max, level.n_restart_steps, rho);
}

namespace {

double nearest_grid_time(const TimeGrid& main, double t) {
    double best = main.times[0];
    double best_dist = std::abs(t - best);
    for (double g : main.times) {
        double dist = std::abs(t - g);
        // Exact midpoint tie resolves to the larger grid time; the grid is
        // descending, so the first of two equidistant entries already wins.
        if (dist < best_dist) {
            best = g;
            best_dist = dist;
        }
    }
    return best;
}

} // namespace

RestartConfig embed_restart_intervals(const TimeGrid& main, const RestartConfig& config) {
    validate_time_grid(main);
    validate_restart_config(config);
    double grid_max = main.times.front();
    double grid_min = main.times.back();
    RestartConfig out = config;
    for (auto& level : out.levels) {
        if (level.t_min < grid_min || level.t_min > grid_max) {
            std::ostringstream msg;
            msg << "restart level t_min=" << level.t_min << " outside main grid ["
                << grid_min << ", " << grid_max << "]";
            throw ConfigError(msg.str());
        }
        double rounded = nearest_grid_time(main, level.t_min);
        if (rounded == 0.0)
            throw ConfigError("restart level t_min rounds to 0; shrink the interval");
        level.t_min = rounded;
    }
    validate_restart_config(out);  // rounding may create overlaps or empty intervals
    return out;
}

bool is_embedded(const TimeGrid& main, const RestartConfig& config) {
    for (const auto& level : config.levels) {
        bool found = false;
        for (double g : main.times)
            if (g == level.t_min) { found = true; break; }
        if (!found) return false;
    }
    return true;
}

long long nfe_count(const RestartConfig& config, Solver main_solver, Solver restart_solver) {
    validate_restart_config(config);
    long long main_steps = config.final_zero ? config.n_main : config.n_main - 1;
    long long total;
    if (main_solver == Solver::heun) {
        // Every step costs 2 except a final step to 0, which costs 1.
        total = 2 * main_steps - (config.final_zero ? 1 : 0);
    } else {
        total = main_steps;
    }
    for (const auto& level : config.levels) {
        long long leg = level.n_restart_steps - 1;
        if (restart_solver == Solver::heun) leg *= 2;  // legs never end at 0
        total += static_cast<long long>(level.k_iterations) * leg;
    }
    return total;
}

} // namespace restart
