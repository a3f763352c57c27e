#include "restart/samplers.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "restart/errors.hpp"

namespace restart {

namespace {

constexpr double kBlowupNorm = 1e6;

struct BatchState {
    Eigen::MatrixXd x;
    std::vector<char> active;
    std::vector<int> failed;
    std::vector<RngStream> streams;
    long long nfe = 0;
    int step_index = 0;

    int n() const { return static_cast<int>(x.rows()); }
    int d() const { return static_cast<int>(x.cols()); }

    // Adopt candidate rows, freezing any that left the trust region.
    void commit(const Eigen::MatrixXd& cand, double t) {
        for (int i = 0; i < n(); ++i) {
            if (!active[i]) continue;
            double norm = cand.row(i).norm();
            if (!std::isfinite(norm) || norm > kBlowupNorm) {
                active[i] = 0;
                failed.push_back(i);
                continue;
            }
            x.row(i) = cand.row(i);
        }
        (void)t;
    }

    void add_noise(double scale) {
        if (scale == 0.0) return;
        for (int i = 0; i < n(); ++i) {
            if (!active[i]) continue;
            x.row(i) += scale * streams[i].normal_vec(d()).transpose();
        }
    }
};

BatchState make_state(const Eigen::MatrixXd& x0, std::uint64_t seed, std::uint64_t stage) {
    BatchState s;
    s.x = x0;
    s.active.assign(x0.rows(), 1);
    s.streams.reserve(x0.rows());
    for (Eigen::Index i = 0; i < x0.rows(); ++i)
        s.streams.emplace_back(seed, static_cast<std::uint64_t>(i), stage);
    return s;
}

// x <- x - (dt * drift_scale) * t_cur * f(x, t_cur) + noise_scale * xi.
// drift_scale = 1, noise_scale = 0 is the plain Euler ODE step.
void batch_euler_step(const ScoreField& f, BatchState& s, double t_cur, double t_next,
                      double drift_scale, double noise_scale) {
    Eigen::MatrixXd g;
    f.eval_batch(s.x, t_cur, g);
    ++s.nfe;
    double a = (t_next - t_cur) * drift_scale;
    Eigen::MatrixXd cand = s.x - a * (t_cur * g);
    if (noise_scale != 0.0) {
        for (int i = 0; i < s.n(); ++i) {
            if (!s.active[i]) continue;
            cand.row(i) += noise_scale * s.streams[i].normal_vec(s.d()).transpose();
        }
    }
    s.commit(cand, t_next);
}

void batch_heun_step(const ScoreField& f, BatchState& s, double t_cur, double t_next) {
    Eigen::MatrixXd g;
    f.eval_batch(s.x, t_cur, g);
    ++s.nfe;
    double dt = t_next - t_cur;
    Eigen::MatrixXd d1 = t_cur * g;
    Eigen::MatrixXd cand = s.x - dt * d1;
    if (t_next != 0.0) {
        Eigen::MatrixXd g2;
        f.eval_batch(cand, t_next, g2);
        ++s.nfe;
        cand = s.x - 0.5 * dt * (d1 + t_next * g2);
    }
    s.commit(cand, t_next);
}

void solver_step(const ScoreField& f, BatchState& s, Solver solver, double t_cur, double t_next) {
    if (solver == Solver::heun) batch_heun_step(f, s, t_cur, t_next);
    else batch_euler_step(f, s, t_cur, t_next, 1.0, 0.0);
}

// One pass over a grid with optional churn noise injections.
void run_grid(const ScoreField& f, BatchState& s, const TimeGrid& grid, Solver solver,
              const ChurnParams* churn) {
    int n_steps = grid.n_steps();
    for (int i = 0; i < n_steps; ++i) {
        double t_cur = grid.times[i];
        double t_next = grid.times[i + 1];
        if (churn != nullptr && t_cur >= churn->s_min && t_cur <= churn->s_max) {
            double gamma = std::min(churn->s_churn / static_cast<double>(n_steps),
                                    std::numbers::sqrt2 - 1.0);
            if (gamma > 0.0) {
                double t_hat = t_cur * (1.0 + gamma);
                s.add_noise(churn->s_noise * std::sqrt(t_hat * t_hat - t_cur * t_cur));
                t_cur = t_hat;
            }
        }
        solver_step(f, s, solver, t_cur, t_next);
        ++s.step_index;
    }
}

SampleBatch finish(BatchState&& s, std::uint64_t seed, std::string summary) {
    SampleBatch out;
    out.points = std::move(s.x);
    out.nfe = s.nfe;
    out.seed = seed;
    std::sort(s.failed.begin(), s.failed.end());
    out.failed = std::move(s.failed);
    out.spec_summary = std::move(summary);
    return out;
}

void check_start(const ScoreField& f, const Eigen::MatrixXd& x0) {
    if (x0.cols() != f.dim()) throw ConfigError("initial points do not match the score dimension");
    if (x0.rows() < 1) throw ConfigError("need at least one trajectory");
}

} // namespace

std::string to_string(SamplerKind kind) {
    switch (kind) {
        case SamplerKind::ode: return "ode";
        case SamplerKind::sde: return "sde";
        case SamplerKind::improved_sde: return "improved_sde";
        case SamplerKind::restart: return "restart";
    }
    return "ode";
}

SamplerKind sampler_kind_from_string(const std::string& name) {
    if (name == "ode") return SamplerKind::ode;
    if (name == "sde") return SamplerKind::sde;
    if (name == "improved_sde") return SamplerKind::improved_sde;
    if (name == "restart") return SamplerKind::restart;
    throw ConfigError("unknown sampler kind '" + name + "'");
}

void validate_sampler_spec(const SamplerSpec& spec) {
    if (spec.kind == SamplerKind::restart) {
        validate_restart_config(spec.restart);
        return;
    }
    if (spec.n_steps < 1) throw ConfigError("sampler needs n_steps >= 1");
    if (!(spec.t_min >= 0.0) || !(spec.t_max > spec.t_min))
        throw ConfigError("sampler needs 0 <= t_min < t_max");
    if (spec.final_zero && !(spec.t_min > 0.0))
        throw ConfigError("final_zero needs t_min > 0");
    if (spec.kind == SamplerKind::sde && !(spec.noise_mult >= 0.0))
        throw ConfigError("sde noise multiplier must be >= 0");
    if (spec.kind == SamplerKind::improved_sde && !(spec.churn.s_churn >= 0.0))
        throw ConfigError("churn strength must be >= 0");
}

TimeGrid sampler_grid(const SamplerSpec& spec) {
    validate_sampler_spec(spec);
    if (spec.final_zero) {
        // n_steps points plus the appended 0 give exactly n_steps steps.
        if (spec.n_steps < 2) throw ConfigError("final_zero grids need n_steps >= 2");
        TimeGrid grid = edm_time_grid(spec.t_min, spec.t_max, spec.n_steps, spec.rho);
        grid.times.push_back(0.0);
        return grid;
    }
    return edm_time_grid(spec.t_min, spec.t_max, spec.n_steps + 1, spec.rho);
}

Eigen::VectorXd euler_step(const ScoreField& f, const Eigen::VectorXd& x,
                           double t_cur, double t_next) {
    if (!(t_cur > 0.0) || !(t_next < t_cur))
        throw DomainError("euler_step requires 0 < t_next < t_cur ordering with t_cur > 0");
    return x - (t_next - t_cur) * (t_cur * f.eval(x, t_cur));
}

Eigen::VectorXd heun_step(const ScoreField& f, const Eigen::VectorXd& x,
                          double t_cur, double t_next) {
    if (!(t_cur > 0.0) || !(t_next < t_cur))
        throw DomainError("heun_step requires t_next < t_cur with t_cur > 0");
    Eigen::VectorXd d1 = t_cur * f.eval(x, t_cur);
    double dt = t_next - t_cur;
    Eigen::VectorXd x1 = x - dt * d1;
    if (t_next == 0.0) return x1;
    Eigen::VectorXd d2 = t_next * f.eval(x1, t_next);
    return x - 0.5 * dt * (d1 + d2);
}

SampleBatch ode_solve(const ScoreField& f, const Eigen::MatrixXd& x0,
                      const TimeGrid& grid, Solver solver) {
    validate_time_grid(grid);
    check_start(f, x0);
    BatchState s = make_state(x0, 0, 0);
    run_grid(f, s, grid, solver, nullptr);
    return finish(std::move(s), 0, "ode " + to_string(solver));
}

SampleBatch sde_solve(const ScoreField& f, const Eigen::MatrixXd& x0,
                      const TimeGrid& grid, double noise_mult,
                      std::uint64_t seed, std::uint64_t stage) {
    validate_time_grid(grid);
    check_start(f, x0);
    if (!(noise_mult >= 0.0)) throw ConfigError("sde noise multiplier must be >= 0");
    BatchState s = make_state(x0, seed, stage);
    for (int i = 0; i < grid.n_steps(); ++i) {
        double t_cur = grid.times[i];
        double t_next = grid.times[i + 1];
        double noise = noise_mult > 0.0
            ? std::sqrt(2.0 * noise_mult * t_cur * std::abs(t_next - t_cur))
            : 0.0;
        batch_euler_step(f, s, t_cur, t_next, 1.0 + noise_mult, noise);
        ++s.step_index;
    }
    std::ostringstream summary;
    summary << "sde m=" << noise_mult;
    return finish(std::move(s), seed, summary.str());
}

SampleBatch improved_sde_solve(const ScoreField& f, const Eigen::MatrixXd& x0,
                               const TimeGrid& grid, const ChurnParams& churn,
                               std::uint64_t seed, std::uint64_t stage) {
    validate_time_grid(grid);
    check_start(f, x0);
    BatchState s = make_state(x0, seed, stage);
    run_grid(f, s, grid, Solver::heun, &churn);
    std::ostringstream summary;
    summary << "improved_sde s_churn=" << churn.s_churn;
    return finish(std::move(s), seed, summary.str());
}

SampleBatch restart_sample(const ScoreField& f, const Eigen::MatrixXd& x0,
                           const RestartConfig& config, Solver solver_main,
                           Solver solver_restart, std::uint64_t seed,
                           std::uint64_t stage, const ChurnParams* churn) {
    validate_restart_config(config);
    check_start(f, x0);
    TimeGrid grid = main_time_grid(config);

    // Each level must trigger at an interior grid point reached by a step.
    std::vector<int> level_at(grid.n_points(), -1);
    for (size_t j = 0; j < config.levels.size(); ++j) {
        int hit = -1;
        for (int i = 1; i < grid.n_points(); ++i) {
            if (grid.times[i] == config.levels[j].t_min) { hit = i; break; }
        }
        if (hit == -1)
            throw ConfigError("restart level t_min does not lie on the main grid; "
                              "run embed_restart_intervals first");
        level_at[hit] = static_cast<int>(j);
    }

    BatchState s = make_state(x0, seed, stage);
    int n_main_steps = grid.n_steps();
    for (int i = 0; i < n_main_steps; ++i) {
        double t_cur = grid.times[i];
        double t_next = grid.times[i + 1];
        if (churn != nullptr && t_cur >= churn->s_min && t_cur <= churn->s_max) {
            double gamma = std::min(churn->s_churn / static_cast<double>(n_main_steps),
                                    std::numbers::sqrt2 - 1.0);
            if (gamma > 0.0) {
                double t_hat = t_cur * (1.0 + gamma);
                s.add_noise(churn->s_noise * std::sqrt(t_hat * t_hat - t_cur * t_cur));
                t_cur = t_hat;
            }
        }
        solver_step(f, s, solver_main, t_cur, t_next);

        int lvl = level_at[i + 1];
        if (lvl >= 0) {
            const RestartLevel& level = config.levels[lvl];
            TimeGrid leg = restart_leg_grid(level, config.rho);
            double jump_std = level.s_noise
                * std::sqrt(level.t_max * level.t_max - level.t_min * level.t_min);
            for (int k = 0; k < level.k_iterations; ++k) {
                s.add_noise(jump_std);  // forward jump, no score evaluations
                run_grid(f, s, leg, solver_restart, nullptr);
            }
        }
    }

    std::ostringstream summary;
    summary << "restart n_main=" << config.n_main;
    for (const auto& level : config.levels)
        summary << " level(n=" << level.n_restart_steps << ",k=" << level.k_iterations
                << ",t_min=" << level.t_min << ",t_max=" << level.t_max << ")";
    return finish(std::move(s), seed, summary.str());
}

SampleBatch run_sampler(const ScoreField& f, const Eigen::MatrixXd& x0,
                        const SamplerSpec& spec, std::uint64_t seed, std::uint64_t stage) {
    validate_sampler_spec(spec);
    switch (spec.kind) {
        case SamplerKind::ode:
            return ode_solve(f, x0, sampler_grid(spec), spec.solver_main);
        case SamplerKind::sde:
            return sde_solve(f, x0, sampler_grid(spec), spec.noise_mult, seed, stage);
        case SamplerKind::improved_sde:
            return improved_sde_solve(f, x0, sampler_grid(spec), spec.churn, seed, stage);
        case SamplerKind::restart:
            return restart_sample(f, x0, spec.restart, spec.solver_main, spec.solver_restart,
                                  seed, stage, spec.churn_in_restart ? &spec.churn : nullptr);
    }
    throw ConfigError("unknown sampler kind");
}

std::string describe(const SamplerSpec& spec) {
    std::ostringstream out;
    out << to_string(spec.kind) << " solver=" << to_string(spec.solver_main);
    if (spec.kind == SamplerKind::restart) {
        out << "/" << to_string(spec.solver_restart) << " n_main=" << spec.restart.n_main;
        for (const auto& level : spec.restart.levels)
            out << " level(n=" << level.n_restart_steps << ",k=" << level.k_iterations
                << ",t_min=" << level.t_min << ",t_max=" << level.t_max << ")";
    } else {
        out << " steps=" << spec.n_steps << " t=[" << spec.t_min << "," << spec.t_max << "]";
        if (spec.kind == SamplerKind::sde) out << " m=" << spec.noise_mult;
        if (spec.kind == SamplerKind::improved_sde) out << " s_churn=" << spec.churn.s_churn;
    }
    return out.str();
}

} // namespace restart
