#include "restart/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include "restart/errors.hpp"

namespace restart {

EmpiricalDataset build_synthetic_dataset(const SyntheticSpec& spec) {
    if (spec.base_dim < 1 || spec.ambient_dim < spec.base_dim)
        throw ConfigError("synthetic dataset needs 1 <= base_dim <= ambient_dim");
    if (spec.n_points < 2) throw ConfigError("synthetic dataset needs n_points >= 2");
    if (!(spec.weight_pos > 0.0) || !(spec.weight_pos < 1.0))
        throw ConfigError("synthetic dataset needs weight_pos in (0, 1)");
    if (!(spec.component_std > 0.0))
        throw ConfigError("synthetic dataset needs component_std > 0");

    RngStream rng(spec.seed, 0, kStageDataset);

    Eigen::MatrixXd projection(spec.ambient_dim, spec.base_dim);
    for (int i = 0; i < spec.ambient_dim; ++i)
        projection.row(i) = rng.normal_vec(spec.base_dim).transpose();

    Eigen::VectorXd offset = Eigen::VectorXd::Constant(spec.base_dim, spec.offset);
    Eigen::MatrixXd base(spec.n_points, spec.base_dim);
    for (int i = 0; i < spec.n_points; ++i) {
        double sign = rng.uniform() < spec.weight_pos ? 1.0 : -1.0;
        base.row(i) = (sign * offset + spec.component_std * rng.normal_vec(spec.base_dim))
                          .transpose();
    }

    Eigen::MatrixXd ambient = base * projection.transpose();
    // Exact unit empirical variance per ambient coordinate.
    for (int j = 0; j < spec.ambient_dim; ++j) {
        double mean = ambient.col(j).mean();
        double var = (ambient.col(j).array() - mean).square().sum() / spec.n_points;
        ambient.col(j) /= std::sqrt(var);
    }
    return EmpiricalDataset{std::move(ambient)};
}

Eigen::MatrixXd sample_true_at(const EmpiricalDataset& ds, double t, int n,
                               std::uint64_t seed, std::uint64_t stage) {
    if (!(t >= 0.0)) throw DomainError("sample_true_at requires t >= 0");
    if (n < 1) throw ConfigError("sample_true_at requires n >= 1");
    int size = ds.size();
    int d = ds.dim();
    Eigen::MatrixXd out(n, d);
    for (int i = 0; i < n; ++i) {
        RngStream rng(seed, static_cast<std::uint64_t>(i), stage);
        int idx = std::min(size - 1, static_cast<int>(rng.uniform() * size));
        out.row(i) = ds.points.row(idx);
        if (t > 0.0) out.row(i) += t * rng.normal_vec(d).transpose();
    }
    return out;
}

namespace {

void check_window_spec(const SamplerSpec& spec, const Window& w) {
    if (spec.kind == SamplerKind::restart) {
        const RestartConfig& c = spec.restart;
        if (c.final_zero || c.main_t_min != w.t_min || c.main_t_max != w.t_max)
            throw ConfigError("restart window spec must span exactly [t_min, t_max] "
                              "with final_zero off");
        return;
    }
    if (spec.final_zero || spec.t_min != w.t_min || spec.t_max != w.t_max)
        throw ConfigError("window spec must span exactly [t_min, t_max] with final_zero off");
}

Eigen::MatrixXd prior_draws(double t_start, int n, int d, std::uint64_t seed) {
    Eigen::MatrixXd out(n, d);
    for (int i = 0; i < n; ++i) {
        RngStream rng(seed, static_cast<std::uint64_t>(i), kStagePrior);
        out.row(i) = (t_start * rng.normal_vec(d)).transpose();
    }
    return out;
}

} // namespace

ErrorDecomposition decompose_errors(const EmpiricalDataset& ds, const ScoreField& f,
                                    const SamplerSpec& spec, const Window& window,
                                    const PipelineSettings& pipe, std::uint64_t seed,
                                    DecomposeTrace* trace) {
    if (ds.dim() != f.dim()) throw ConfigError("dataset and score field dimensions differ");
    if (!(window.t_min > 0.0) || !(window.t_max > window.t_min))
        throw ConfigError("window needs 0 < t_min < t_max");
    if (!(pipe.t_start > window.t_max)) throw ConfigError("t_start must exceed window t_max");
    if (!(pipe.t_end > 0.0) || !(pipe.t_end < window.t_min))
        throw ConfigError("t_end must lie in (0, window t_min)");
    if (pipe.steps_before < 1 || pipe.steps_after < 1)
        throw ConfigError("pipeline needs at least one step on each side of the window");
    if (pipe.n_samples < 1) throw ConfigError("pipeline needs n_samples >= 1");
    check_window_spec(spec, window);

    const int n = pipe.n_samples;
    const int d = ds.dim();

    TimeGrid before = edm_time_grid(window.t_max, pipe.t_start, pipe.steps_before + 1, pipe.rho);
    TimeGrid after = edm_time_grid(pipe.t_end, window.t_min, pipe.steps_after + 1, pipe.rho);
    after.times.push_back(0.0);  // final Euler step with the score at t_end

    SampleBatch p_upper = ode_solve(f, prior_draws(pipe.t_start, n, d, seed), before,
                                    pipe.outer_solver);
    Eigen::MatrixXd q_init = sample_true_at(ds, window.t_max, n, seed, kStageTrueInit);

    // Identical seed and stage pair the window noise across the two runs.
    SampleBatch p_window = run_sampler(f, p_upper.points, spec, seed, kStageWindow);
    SampleBatch q_window = run_sampler(f, q_init, spec, seed, kStageWindow);

    SampleBatch p_lower = ode_solve(f, p_window.points, after, pipe.outer_solver);
    SampleBatch q_lower = ode_solve(f, q_window.points, after, pipe.outer_solver);

    Eigen::MatrixXd reference = sample_true_at(ds, 0.0, n, seed, kStageDataRef);

    std::set<int> failed;
    for (const SampleBatch* b : {&p_upper, &p_window, &q_window, &p_lower, &q_lower})
        failed.insert(b->failed.begin(), b->failed.end());
    if (!failed.empty()) {
        throw BlowupError("decomposition aborted: " + std::to_string(failed.size()) +
                              " trajectories blew up",
                          static_cast<int>(failed.size()), 0.0, 0);
    }

    if (trace != nullptr) {
        trace->p_at_window = p_upper.points;
        trace->q_at_window = q_init;
        trace->p_final = p_lower.points;
        trace->q_final = q_lower.points;
        trace->reference = reference;
    }

    ErrorDecomposition out;
    out.total_w1 = w1_assignment(p_lower.points, reference);
    out.contracted_w1 = w1_assignment(p_lower.points, q_lower.points);
    out.additional_w1 = w1_assignment(q_lower.points, reference);
    out.window_nfe = p_window.nfe;
    out.n_samples = n;
    out.seed = seed;
    return out;
}

SamplerSpec window_ode_spec(int n_steps, const Window& w, Solver solver) {
    SamplerSpec spec;
    spec.kind = SamplerKind::ode;
    spec.solver_main = solver;
    spec.n_steps = n_steps;
    spec.t_min = w.t_min;
    spec.t_max = w.t_max;
    spec.final_zero = false;
    return spec;
}

SamplerSpec window_sde_spec(int n_steps, double noise_mult, const Window& w) {
    SamplerSpec spec;
    spec.kind = SamplerKind::sde;
    spec.solver_main = Solver::euler;
    spec.n_steps = n_steps;
    spec.t_min = w.t_min;
    spec.t_max = w.t_max;
    spec.final_zero = false;
    spec.noise_mult = noise_mult;
    return spec;
}

SamplerSpec window_improved_sde_spec(int n_steps, const ChurnParams& churn, const Window& w) {
    SamplerSpec spec;
    spec.kind = SamplerKind::improved_sde;
    spec.solver_main = Solver::heun;
    spec.n_steps = n_steps;
    spec.t_min = w.t_min;
    spec.t_max = w.t_max;
    spec.final_zero = false;
    spec.churn = churn;
    return spec;
}

SamplerSpec window_restart_spec(int down_steps, int n_restart_steps, int k_iterations,
                                const Window& w, Solver solver, double s_noise) {
    if (down_steps < 1) throw ConfigError("window restart spec needs down_steps >= 1");
    SamplerSpec spec;
    spec.kind = SamplerKind::restart;
    spec.solver_main = solver;
    spec.solver_restart = solver;
    spec.restart.n_main = down_steps + 1;  // grid points; final_zero off
    spec.restart.main_t_min = w.t_min;
    spec.restart.main_t_max = w.t_max;
    spec.restart.final_zero = false;
    RestartLevel level;
    level.n_restart_steps = n_restart_steps;
    level.k_iterations = k_iterations;
    level.t_min = w.t_min;
    level.t_max = w.t_max;
    level.s_noise = s_noise;
    spec.restart.levels = {level};
    return spec;
}

namespace {

void run_one_cell(const EmpiricalDataset& ds, const ScoreField& f, const SweepCell& cell,
                  const SweepSettings& settings, SweepRecord& record) {
    auto started = std::chrono::steady_clock::now();
    record.cell = cell;
    record.seed_group = settings.base_seed;
    record.n_samples = settings.pipe.n_samples;

    double total = 0.0, contracted = 0.0, additional = 0.0;
    int successes = 0;
    std::ostringstream errors;
    for (int rep = 0; rep < settings.n_seed_reps; ++rep) {
        std::uint64_t rep_seed = derive_stream(settings.base_seed, rep, 0x5EED);
        try {
            ErrorDecomposition dec =
                decompose_errors(ds, f, cell.spec, settings.window, settings.pipe, rep_seed);
            total += dec.total_w1;
            contracted += dec.contracted_w1;
            additional += dec.additional_w1;
            record.nfe = dec.window_nfe;
            ++successes;
        } catch (const std::exception& e) {
            if (errors.tellp() > 0) errors << "; ";
            errors << "rep " << rep << ": " << e.what();
        }
    }
    record.n_seed_reps = successes;
    if (successes > 0) {
        record.total_w1 = total / successes;
        record.contracted_w1 = contracted / successes;
        record.additional_w1 = additional / successes;
        if (errors.tellp() > 0) record.error = errors.str();  // degraded, not fatal
        if (successes == settings.n_seed_reps) record.error.clear();
    } else {
        record.total_w1 = record.contracted_w1 = record.additional_w1 =
            std::numeric_limits<double>::quiet_NaN();
        record.error = errors.str();
    }
    record.wall_ms = std::chrono::duration<double, std::milli>(
                         std::chrono::steady_clock::now() - started)
                         .count();
}

} // namespace

std::vector<SweepRecord> run_sweep(const EmpiricalDataset& ds, const ScoreField& f,
                                   const std::vector<SweepCell>& cells,
                                   const SweepSettings& settings) {
    if (settings.n_seed_reps < 1) throw ConfigError("sweep needs n_seed_reps >= 1");
    std::vector<SweepRecord> records(cells.size());
    int threads = std::max(1, settings.threads);
    threads = std::min<int>(threads, static_cast<int>(cells.size()));

    if (threads <= 1) {
        for (size_t i = 0; i < cells.size(); ++i)
            run_one_cell(ds, f, cells[i], settings, records[i]);
        return records;
    }

    std::atomic<size_t> next{0};
    auto worker = [&]() {
        while (true) {
            size_t i = next.fetch_add(1);
            if (i >= cells.size()) return;
            run_one_cell(ds, f, cells[i], settings, records[i]);
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    return records;
}

namespace {

SweepCell make_cell(SamplerSpec spec, std::string label) {
    SweepCell cell;
    cell.spec = std::move(spec);
    cell.label = std::move(label);
    return cell;
}

std::string cell_label(const std::string& kind, int a, double b) {
    std::ostringstream out;
    out << kind << "_" << a << "_" << b;
    return out.str();
}

} // namespace

std::vector<SweepCell> ode_sweep_cells(const Window& w) {
    std::vector<SweepCell> cells;
    for (int steps : {20, 40, 80, 160, 320, 640})
        cells.push_back(make_cell(window_ode_spec(steps, w), "ode_" + std::to_string(steps)));
    return cells;
}

std::vector<SweepCell> sde_sweep_cells(const Window& w) {
    std::vector<SweepCell> cells;
    for (int steps : {20, 40, 80, 160, 320})
        for (double m : {0.0, 0.25, 0.5, 1.0, 1.5, 2.0, 4.0, 8.0})
            cells.push_back(make_cell(window_sde_spec(steps, m, w), cell_label("sde", steps, m)));
    return cells;
}

std::vector<SweepCell> restart_sweep_cells(const Window& w) {
    // Down leg fixed at 20 Euler steps; one branch varies K at a 40-point
    // backward leg, the other scans small legs against moderate K.
    std::vector<SweepCell> cells;
    const int down_steps = 20;
    for (int k : {0, 5, 10, 15, 20, 25, 30, 35})
        cells.push_back(make_cell(window_restart_spec(down_steps, 40, k, w),
                                  cell_label("restart", 40, k)));
    for (int k : {5, 10, 15, 20, 25})
        for (int leg = 2; leg <= 7; ++leg)
            cells.push_back(make_cell(window_restart_spec(down_steps, leg, k, w),
                                      cell_label("restart", leg, k)));
    return cells;
}

std::vector<SweepCell> improved_sde_sweep_cells(const Window& w) {
    std::vector<SweepCell> cells;
    std::set<std::pair<int, double>> seen;
    for (int steps : {20, 40, 80, 160, 320}) {
        for (double churn : {0.2 * steps, 0.5 * steps, 20.0, 60.0}) {
            if (!seen.insert({steps, churn}).second) continue;
            ChurnParams params;
            params.s_churn = churn;
            cells.push_back(make_cell(window_improved_sde_spec(steps, params, w),
                                      cell_label("improved_sde", steps, churn)));
        }
    }
    return cells;
}

std::vector<SweepCell> smoke_sweep_cells(const Window& w) {
    // NFE-aligned triples {16, 32, 64} across the three samplers.
    std::vector<SweepCell> cells;
    for (int steps : {16, 32, 64})
        cells.push_back(make_cell(window_ode_spec(steps, w), "ode_" + std::to_string(steps)));
    for (int steps : {16, 32, 64})
        cells.push_back(make_cell(window_sde_spec(steps, 1.0, w), cell_label("sde", steps, 1.0)));
    cells.push_back(make_cell(window_restart_spec(8, 3, 4, w), "restart_3_4"));
    cells.push_back(make_cell(window_restart_spec(16, 3, 8, w), "restart_3_8"));
    cells.push_back(make_cell(window_restart_spec(32, 3, 16, w), "restart_3_16"));
    return cells;
}

std::vector<int> pareto_frontier(const std::vector<double>& xs, const std::vector<double>& ys) {
    if (xs.size() != ys.size()) throw ConfigError("pareto keys must have equal length");
    std::vector<int> order;
    for (size_t i = 0; i < xs.size(); ++i)
        if (std::isfinite(xs[i]) && std::isfinite(ys[i])) order.push_back(static_cast<int>(i));
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return xs[a] < xs[b]; });
    std::vector<int> frontier;
    for (int i : order) {
        if (frontier.empty()) {
            frontier.push_back(i);
            continue;
        }
        int back = frontier.back();
        if (xs[i] == xs[back]) {
            if (ys[i] < ys[back]) frontier.back() = i;  // better record at equal cost
        } else if (ys[i] < ys[back]) {
            frontier.push_back(i);
        }
    }
    return frontier;
}

double record_key(const SweepRecord& record, const std::string& key) {
    if (key == "nfe") return static_cast<double>(record.nfe);
    if (key == "total_w1") return record.total_w1;
    if (key == "contracted_w1") return record.contracted_w1;
    if (key == "additional_w1") return record.additional_w1;
    if (key == "wall_ms") return record.wall_ms;
    throw ConfigError("unknown record key '" + key + "'");
}

std::vector<int> pareto_frontier(const std::vector<SweepRecord>& records,
                                 const std::string& x_key, const std::string& y_key) {
    std::vector<double> xs(records.size()), ys(records.size());
    for (size_t i = 0; i < records.size(); ++i) {
        xs[i] = record_key(records[i], x_key);
        ys[i] = record_key(records[i], y_key);
    }
    return pareto_frontier(xs, ys);
}

DecayCurve contraction_decay_study(const EmpiricalDataset& ds, const ScoreField& f,
                                   const Window& w, const DecayStudyOptions& opt) {
    if (opt.n_pairs < 1) throw ConfigError("decay study needs n_pairs >= 1");
    if (opt.k_max < 0) throw ConfigError("decay study needs k_max >= 0");
    if (opt.leg_steps < 1) throw ConfigError("decay study needs leg_steps >= 1");
    if (!(w.t_min > 0.0) || !(w.t_max > w.t_min))
        throw ConfigError("decay study needs 0 < t_min < t_max");

    const int n = opt.n_pairs;
    const int d = ds.dim();
    const double sigma = std::sqrt(w.t_max * w.t_max - w.t_min * w.t_min);
    TimeGrid leg = edm_time_grid(w.t_min, w.t_max, opt.leg_steps + 1, 7.0);

    Eigen::MatrixXd x = sample_true_at(ds, w.t_min, n, opt.seed, kStageTrueInit);
    Eigen::MatrixXd y(n, d);
    if (opt.identical_init) {
        y = x;
    } else {
        for (int i = 0; i < n; ++i) {
            RngStream rng(opt.seed, static_cast<std::uint64_t>(i), kStagePrior);
            y.row(i) = (w.t_min * rng.normal_vec(d)).transpose();
        }
    }

    std::vector<RngStream> streams;
    streams.reserve(n);
    for (int i = 0; i < n; ++i)
        streams.emplace_back(opt.seed, static_cast<std::uint64_t>(i), kStageCoupling);
    std::vector<char> collided(n, 0);
    for (int i = 0; i < n; ++i)
        if ((x.row(i) - y.row(i)).norm() == 0.0) collided[i] = 1;

    DecayCurve curve;
    double b_measured = 0.0;
    auto fraction_free = [&]() {
        int free_count = 0;
        for (int i = 0; i < n; ++i) free_count += collided[i] ? 0 : 1;
        return static_cast<double>(free_count) / n;
    };

    curve.non_collided.push_back(fraction_free());
    curve.w1.push_back(w1_assignment(x, y));

    for (int k = 1; k <= opt.k_max; ++k) {
        for (int i = 0; i < n; ++i) {
            if (collided[i]) {
                // Merged pairs share one noise stream from then on.
                Eigen::VectorXd xi = streams[i].normal_vec(d);
                x.row(i) += sigma * xi.transpose();
                y.row(i) = x.row(i);
                continue;
            }
            double dist = (x.row(i) - y.row(i)).norm();
            b_measured = std::max(b_measured, dist);
            CouplingOutcome outcome = maximal_coupling_step(
                x.row(i).transpose(), y.row(i).transpose(), sigma, streams[i]);
            x.row(i) = outcome.x_next.transpose();
            y.row(i) = outcome.y_next.transpose();
            if (outcome.collided) collided[i] = 1;
        }
        SampleBatch bx = ode_solve(f, x, leg, Solver::euler);
        SampleBatch by = ode_solve(f, y, leg, Solver::euler);
        x = bx.points;
        y = by.points;
        for (int i = 0; i < n; ++i)
            if (collided[i]) y.row(i) = x.row(i);  // deterministic legs preserve merges

        curve.non_collided.push_back(fraction_free());
        curve.w1.push_back(w1_assignment(x, y));
    }

    curve.b_measured = b_measured;
    double b = opt.b_override > 0.0 ? opt.b_override : b_measured;
    curve.lambda_hat = b > 0.0 ? contraction_factor_lambda(b, w.t_min, w.t_max) : 1.0;
    return curve;
}

} // namespace restart
