#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "restart/errors.hpp"
#include "restart/experiments.hpp"
#include "restart/rng.hpp"

using namespace restart;

namespace {

SyntheticSpec small_spec(std::uint64_t seed) {
    SyntheticSpec spec;
    spec.base_dim = 2;
    spec.ambient_dim = 6;
    spec.n_points = 300;
    spec.seed = seed;
    return spec;
}

Window default_window() {
    Window w;
    w.t_min = 1.0;
    w.t_max = 1.5;
    return w;
}

PipelineSettings tiny_pipe(int n_samples) {
    PipelineSettings pipe;
    pipe.steps_before = 16;
    pipe.steps_after = 24;
    pipe.n_samples = n_samples;
    return pipe;
}

class ExplodingField final : public ScoreField {
public:
    explicit ExplodingField(int d) : d_(d) {}
    int dim() const override { return d_; }
    Eigen::VectorXd eval(const Eigen::VectorXd& x, double) const override { return 1e8 * x; }

private:
    int d_;
};

// Independent quadratic-time staircase: i survives when it is the best record
// at its x (earliest on exact ties) and strictly below everything to its left.
std::vector<int> brute_force_frontier(const std::vector<double>& xs,
                                      const std::vector<double>& ys) {
    std::vector<int> kept;
    for (size_t i = 0; i < xs.size(); ++i) {
        if (!std::isfinite(xs[i]) || !std::isfinite(ys[i])) continue;
        bool survives = true;
        for (size_t j = 0; j < xs.size() && survives; ++j) {
            if (j == i || !std::isfinite(xs[j]) || !std::isfinite(ys[j])) continue;
            if (xs[j] == xs[i] && (ys[j] < ys[i] || (ys[j] == ys[i] && j < i)))
                survives = false;
            if (xs[j] < xs[i] && ys[j] <= ys[i]) survives = false;
        }
        if (survives) kept.push_back(static_cast<int>(i));
    }
    std::sort(kept.begin(), kept.end(), [&](int a, int b) { return xs[a] < xs[b]; });
    return kept;
}

} // namespace

TEST_CASE("synthetic dataset has exact unit coordinate variance") {
    SyntheticSpec spec;  // library defaults: 2000 x 20
    EmpiricalDataset ds = build_synthetic_dataset(spec);
    REQUIRE(ds.size() == 2000);
    REQUIRE(ds.dim() == 20);

    for (int j = 0; j < ds.dim(); ++j) {
        double mean = ds.points.col(j).mean();
        double var = (ds.points.col(j).array() - mean).square().sum() / ds.size();
        CHECK(var == doctest::Approx(1.0).epsilon(1e-9));
    }

    EmpiricalDataset again = build_synthetic_dataset(spec);
    CHECK(ds.points == again.points);
    SyntheticSpec other = spec;
    other.seed = 1;
    CHECK((ds.points - build_synthetic_dataset(other).points).norm() > 1e-6);

    SyntheticSpec bad = spec;
    bad.base_dim = 30;
    CHECK_THROWS_AS(build_synthetic_dataset(bad), ConfigError);
    bad = spec;
    bad.weight_pos = 1.0;
    CHECK_THROWS_AS(build_synthetic_dataset(bad), ConfigError);
    bad = spec;
    bad.n_points = 1;
    CHECK_THROWS_AS(build_synthetic_dataset(bad), ConfigError);
}

TEST_CASE("true-distribution draws behave at t = 0 and inflate with t") {
    EmpiricalDataset ds = build_synthetic_dataset(small_spec(3));

    Eigen::MatrixXd members = sample_true_at(ds, 0.0, 40, 11);
    for (int i = 0; i < members.rows(); ++i) {
        bool found = false;
        for (int r = 0; r < ds.size() && !found; ++r)
            if (members.row(i) == ds.points.row(r)) found = true;
        CHECK(found);
    }

    // Mean squared norm grows by t^2 * d over the dataset average.
    const int n = 20000;
    const double t = 1.3;
    Eigen::MatrixXd noisy = sample_true_at(ds, t, n, 11);
    double base = ds.points.rowwise().squaredNorm().mean();
    double expected = base + t * t * ds.dim();
    double got = noisy.rowwise().squaredNorm().mean();
    CHECK(std::abs(got - expected) < 0.05 * expected);

    // Per-row streams: a longer batch extends the shorter one.
    Eigen::MatrixXd short_batch = sample_true_at(ds, t, 50, 11);
    Eigen::MatrixXd long_batch = sample_true_at(ds, t, 100, 11);
    CHECK(short_batch == long_batch.topRows(50));

    CHECK_THROWS_AS(sample_true_at(ds, -1.0, 10, 1), DomainError);
    CHECK_THROWS_AS(sample_true_at(ds, 1.0, 0, 1), ConfigError);
}

TEST_CASE("restart window with zero iterations decomposes exactly like the ode") {
    EmpiricalDataset ds = build_synthetic_dataset(small_spec(5));
    EmpiricalScoreField f(ds);
    Window w = default_window();
    PipelineSettings pipe = tiny_pipe(64);

    SamplerSpec ode = window_ode_spec(10, w, Solver::euler);
    SamplerSpec rst = window_restart_spec(10, 3, 0, w, Solver::euler);

    DecomposeTrace trace_ode, trace_rst;
    ErrorDecomposition a = decompose_errors(ds, f, ode, w, pipe, 21, &trace_ode);
    ErrorDecomposition b = decompose_errors(ds, f, rst, w, pipe, 21, &trace_rst);

    CHECK(a.total_w1 == b.total_w1);
    CHECK(a.contracted_w1 == b.contracted_w1);
    CHECK(a.additional_w1 == b.additional_w1);
    CHECK(a.window_nfe == 10);
    CHECK(b.window_nfe == 10);
    CHECK(trace_ode.p_final == trace_rst.p_final);
    CHECK(trace_ode.q_final == trace_rst.q_final);
}

TEST_CASE("sde window with zero noise decomposes exactly like the euler ode") {
    EmpiricalDataset ds = build_synthetic_dataset(small_spec(6));
    EmpiricalScoreField f(ds);
    Window w = default_window();
    PipelineSettings pipe = tiny_pipe(48);

    ErrorDecomposition a = decompose_errors(ds, f, window_ode_spec(12, w, Solver::euler),
                                            w, pipe, 31);
    ErrorDecomposition b = decompose_errors(ds, f, window_sde_spec(12, 0.0, w), w, pipe, 31);
    CHECK(a.total_w1 == b.total_w1);
    CHECK(a.contracted_w1 == b.contracted_w1);
    CHECK(a.additional_w1 == b.additional_w1);
    CHECK(a.window_nfe == 12);
}

TEST_CASE("stages outside the window are untouched by the sampler choice") {
    EmpiricalDataset ds = build_synthetic_dataset(small_spec(7));
    EmpiricalScoreField f(ds);
    Window w = default_window();
    PipelineSettings pipe = tiny_pipe(40);

    DecomposeTrace t1, t2, t3;
    decompose_errors(ds, f, window_ode_spec(8, w), w, pipe, 77, &t1);
    decompose_errors(ds, f, window_sde_spec(16, 1.0, w), w, pipe, 77, &t2);
    decompose_errors(ds, f, window_restart_spec(8, 3, 4, w), w, pipe, 77, &t3);

    // The p-run state entering the window, the q-run's initial draws, and the
    // reference draws all depend only on the seed.
    CHECK(t1.p_at_window == t2.p_at_window);
    CHECK(t1.p_at_window == t3.p_at_window);
    CHECK(t1.q_at_window == t2.q_at_window);
    CHECK(t1.q_at_window == t3.q_at_window);
    CHECK(t1.reference == t2.reference);
    CHECK(t1.reference == t3.reference);
}

TEST_CASE("decompose accounting and determinism") {
    EmpiricalDataset ds = build_synthetic_dataset(small_spec(8));
    EmpiricalScoreField f(ds);
    Window w = default_window();
    PipelineSettings pipe = tiny_pipe(40);

    SamplerSpec rst = window_restart_spec(10, 3, 2, w, Solver::euler);
    ErrorDecomposition a = decompose_errors(ds, f, rst, w, pipe, 5);
    ErrorDecomposition b = decompose_errors(ds, f, rst, w, pipe, 5);
    CHECK(a.total_w1 == b.total_w1);
    CHECK(a.contracted_w1 == b.contracted_w1);
    CHECK(a.additional_w1 == b.additional_w1);
    CHECK(a.window_nfe == 10 + 2 * 2);
    CHECK(a.n_samples == 40);
    CHECK(a.seed == 5);
    CHECK(a.total_w1 > 0.0);

    ErrorDecomposition c = decompose_errors(ds, f, rst, w, pipe, 6);
    CHECK(a.total_w1 != c.total_w1);
}

TEST_CASE("decompose validates the window contract") {
    EmpiricalDataset ds = build_synthetic_dataset(small_spec(9));
    EmpiricalScoreField f(ds);
    Window w = default_window();
    PipelineSettings pipe = tiny_pipe(16);

    // Spec grid must span exactly the window with no terminal zero.
    SamplerSpec wrong = window_ode_spec(8, w);
    wrong.t_min = 0.5;
    CHECK_THROWS_AS(decompose_errors(ds, f, wrong, w, pipe, 1), ConfigError);
    wrong = window_ode_spec(8, w);
    wrong.final_zero = true;
    CHECK_THROWS_AS(decompose_errors(ds, f, wrong, w, pipe, 1), ConfigError);

    PipelineSettings bad = pipe;
    bad.t_start = 1.2;  // below window top
    CHECK_THROWS_AS(decompose_errors(ds, f, window_ode_spec(8, w), w, bad, 1), ConfigError);
    bad = pipe;
    bad.t_end = 1.1;  // above window floor
    CHECK_THROWS_AS(decompose_errors(ds, f, window_ode_spec(8, w), w, bad, 1), ConfigError);
    bad = pipe;
    bad.n_samples = 0;
    CHECK_THROWS_AS(decompose_errors(ds, f, window_ode_spec(8, w), w, bad, 1), ConfigError);
}

TEST_CASE("decompose surfaces trajectory blowups") {
    EmpiricalDataset ds = build_synthetic_dataset(small_spec(10));
    ExplodingField f(ds.dim());
    Window w = default_window();
    PipelineSettings pipe = tiny_pipe(8);
    CHECK_THROWS_AS(decompose_errors(ds, f, window_ode_spec(4, w), w, pipe, 1), BlowupError);
}

TEST_CASE("sub-sampled error estimates are stable across seed groups and sizes") {
    // Single-run W1 estimates at these sample counts fluctuate a lot; the
    // documented stability contract is on the seed-averaged sweep records.
    EmpiricalDataset ds = build_synthetic_dataset(small_spec(12));
    EmpiricalScoreField f(ds);
    Window w = default_window();
    std::vector<SweepCell> cells = {{window_ode_spec(16, w), "ode_16"}};

    auto averaged = [&](int n_samples, std::uint64_t group) {
        SweepSettings settings;
        settings.window = w;
        settings.pipe = tiny_pipe(n_samples);
        settings.n_seed_reps = 5;
        settings.base_seed = group;
        SweepRecord r = run_sweep(ds, f, cells, settings)[0];
        REQUIRE(r.ok());
        return r;
    };

    SweepRecord a = averaged(256, 100);
    SweepRecord b = averaged(256, 200);
    SweepRecord big = averaged(512, 100);

    CHECK(std::abs(a.total_w1 - b.total_w1) <= 0.35 * std::max(a.total_w1, b.total_w1));
    CHECK(std::abs(a.additional_w1 - b.additional_w1) <=
          0.35 * std::max(a.additional_w1, b.additional_w1));
    CHECK(std::abs(a.total_w1 - big.total_w1) <= 0.5 * std::max(a.total_w1, big.total_w1));
}

TEST_CASE("sweeps average seeds, tolerate failures, and ignore thread count") {
    EmpiricalDataset ds = build_synthetic_dataset(small_spec(11));
    EmpiricalScoreField f(ds);

    SweepSettings settings;
    settings.window = default_window();
    settings.pipe = tiny_pipe(32);
    settings.n_seed_reps = 2;
    settings.base_seed = 9;

    std::vector<SweepCell> cells;
    cells.push_back({window_ode_spec(6, settings.window), "ode_6"});
    cells.push_back({window_sde_spec(6, 1.0, settings.window), "sde_6_1"});

    std::vector<SweepRecord> serial = run_sweep(ds, f, cells, settings);
    REQUIRE(serial.size() == 2);
    for (const auto& r : serial) {
        CHECK(r.ok());
        CHECK(r.n_seed_reps == 2);
        CHECK(r.nfe == 6);
        CHECK(r.total_w1 > 0.0);
        CHECK(r.n_samples == 32);
        CHECK(r.seed_group == 9);
    }
    CHECK(serial[0].cell.label == "ode_6");

    settings.threads = 2;
    std::vector<SweepRecord> threaded = run_sweep(ds, f, cells, settings);
    REQUIRE(threaded.size() == 2);
    for (size_t i = 0; i < 2; ++i) {
        CHECK(serial[i].total_w1 == threaded[i].total_w1);
        CHECK(serial[i].contracted_w1 == threaded[i].contracted_w1);
        CHECK(serial[i].additional_w1 == threaded[i].additional_w1);
    }

    // A cell that cannot run is recorded, not fatal.
    SamplerSpec broken = window_ode_spec(6, settings.window);
    broken.t_max = 2.0;  // no longer matches the sweep window
    cells.push_back({broken, "broken"});
    settings.threads = 1;
    std::vector<SweepRecord> mixed = run_sweep(ds, f, cells, settings);
    REQUIRE(mixed.size() == 3);
    CHECK(mixed[0].ok());
    CHECK_FALSE(mixed[2].ok());
    CHECK(std::isnan(mixed[2].total_w1));
    CHECK(mixed[2].n_seed_reps == 0);
    CHECK(mixed[2].error.find("rep 0") != std::string::npos);
}

TEST_CASE("sweep grids enumerate the published configurations") {
    Window w = default_window();

    std::vector<SweepCell> ode = ode_sweep_cells(w);
    REQUIRE(ode.size() == 6);
    CHECK(ode.front().label == "ode_20");
    CHECK(ode.back().label == "ode_640");
    CHECK(ode.back().spec.n_steps == 640);

    std::vector<SweepCell> sde = sde_sweep_cells(w);
    CHECK(sde.size() == 5 * 8);
    CHECK(sde.front().spec.kind == SamplerKind::sde);

    std::vector<SweepCell> rst = restart_sweep_cells(w);
    CHECK(rst.size() == 8 + 5 * 6);
    for (const auto& cell : rst) {
        REQUIRE(cell.spec.kind == SamplerKind::restart);
        CHECK(cell.spec.restart.main_t_min == w.t_min);
        CHECK(cell.spec.restart.main_t_max == w.t_max);
        CHECK_FALSE(cell.spec.restart.final_zero);
    }

    std::vector<SweepCell> imp = improved_sde_sweep_cells(w);
    CHECK(imp.size() == 19);  // churn lists overlap at some step counts

    std::vector<SweepCell> smoke = smoke_sweep_cells(w);
    REQUIRE(smoke.size() == 9);
    // The restart smoke cells sit on the shared NFE ladder 16/32/64.
    CHECK(nfe_count(smoke[6].spec.restart, Solver::euler, Solver::euler) == 16);
    CHECK(nfe_count(smoke[7].spec.restart, Solver::euler, Solver::euler) == 32);
    CHECK(nfe_count(smoke[8].spec.restart, Solver::euler, Solver::euler) == 64);

    for (const auto& group : {ode, sde, rst, imp, smoke})
        for (const auto& cell : group) CHECK_NOTHROW(validate_sampler_spec(cell.spec));
}

TEST_CASE("pareto frontier matches the quadratic brute force") {
    RngStream rng(101, 0, kStageProbe);
    for (int trial = 0; trial < 30; ++trial) {
        int n = 1 + static_cast<int>(rng.uniform() * 50.0);
        std::vector<double> xs(n), ys(n);
        for (int i = 0; i < n; ++i) {
            // Coarse values force ties in both coordinates.
            xs[i] = std::floor(rng.uniform() * 8.0);
            ys[i] = std::floor(rng.uniform() * 8.0);
            if (rng.uniform() < 0.1) xs[i] = std::numeric_limits<double>::quiet_NaN();
        }
        CHECK(pareto_frontier(xs, ys) == brute_force_frontier(xs, ys));
    }
}

TEST_CASE("pareto frontier basics and record keys") {
    std::vector<double> xs = {3.0, 1.0, 2.0, 4.0};
    std::vector<double> ys = {0.5, 2.0, 1.0, 0.4};
    std::vector<int> frontier = pareto_frontier(xs, ys);
    REQUIRE(frontier == std::vector<int>{1, 2, 0, 3});

    // Strictly increasing x, strictly decreasing y along the frontier.
    for (size_t i = 1; i < frontier.size(); ++i) {
        CHECK(xs[frontier[i]] > xs[frontier[i - 1]]);
        CHECK(ys[frontier[i]] < ys[frontier[i - 1]]);
    }

    CHECK(pareto_frontier({5.0}, {1.0}) == std::vector<int>{0});
    CHECK(pareto_frontier({}, {}).empty());
    // A point dominated in both keys is excluded.
    CHECK(pareto_frontier({1.0, 2.0}, {1.0, 2.0}) == std::vector<int>{0});
    CHECK_THROWS_AS(pareto_frontier({1.0}, {1.0, 2.0}), ConfigError);

    SweepRecord r1, r2;
    r1.nfe = 10;
    r1.total_w1 = 1.0;
    r2.nfe = 20;
    r2.total_w1 = 0.5;
    std::vector<SweepRecord> records = {r1, r2};
    CHECK(pareto_frontier(records, "nfe", "total_w1") == std::vector<int>{0, 1});
    CHECK(record_key(r1, "contracted_w1") == 0.0);
    CHECK_THROWS_AS(record_key(r1, "bogus"), ConfigError);
}

TEST_CASE("identical decay-study populations collide immediately and stay merged") {
    SyntheticSpec spec = small_spec(14);
    spec.base_dim = 1;
    spec.ambient_dim = 1;
    spec.n_points = 100;
    EmpiricalDataset ds = build_synthetic_dataset(spec);
    EmpiricalScoreField f(ds);

    DecayStudyOptions opt;
    opt.n_pairs = 32;
    opt.k_max = 3;
    opt.leg_steps = 4;
    opt.identical_init = true;
    DecayCurve curve = contraction_decay_study(ds, f, default_window(), opt);

    REQUIRE(curve.non_collided.size() == 4);
    for (double frac : curve.non_collided) CHECK(frac == 0.0);
    for (double w1 : curve.w1) CHECK(w1 == 0.0);
}

TEST_CASE("decay study contracts distinct populations") {
    SyntheticSpec spec = small_spec(15);
    spec.base_dim = 1;
    spec.ambient_dim = 1;
    spec.n_points = 200;
    EmpiricalDataset ds = build_synthetic_dataset(spec);
    EmpiricalScoreField f(ds);

    DecayStudyOptions opt;
    opt.n_pairs = 128;
    opt.k_max = 5;
    opt.leg_steps = 4;
    DecayCurve curve = contraction_decay_study(ds, f, default_window(), opt);

    REQUIRE(curve.non_collided.size() == 6);
    CHECK(curve.non_collided[0] == 1.0);  // distinct draws never start merged
    for (size_t k = 1; k < curve.non_collided.size(); ++k)
        CHECK(curve.non_collided[k] <= curve.non_collided[k - 1]);
    CHECK(curve.non_collided.back() < 1.0);  // some pairs must have merged

    CHECK(curve.b_measured > 0.0);
    CHECK(curve.lambda_hat > 0.0);
    CHECK(curve.lambda_hat <= 1.0);

    // Populations converge in distribution as chains merge.
    CHECK(curve.w1.back() < curve.w1.front());

    DecayStudyOptions forced = opt;
    forced.b_override = 1.7;
    DecayCurve forced_curve = contraction_decay_study(ds, f, default_window(), forced);
    Window w = default_window();
    CHECK(forced_curve.lambda_hat == contraction_factor_lambda(1.7, w.t_min, w.t_max));

    DecayStudyOptions bad = opt;
    bad.n_pairs = 0;
    CHECK_THROWS_AS(contraction_decay_study(ds, f, default_window(), bad), ConfigError);
}
