#include <doctest.h>

#include <cmath>
#include <memory>
#include <vector>

#include <Eigen/Core>

#include "restart/errors.hpp"
#include "restart/rng.hpp"
#include "restart/samplers.hpp"
#include "restart/score_field.hpp"

using namespace restart;

namespace {

// Score of a single zero-mean Gaussian with std s; the backward ODE flow is
// x(t) = x(T) sqrt((s^2 + t^2) / (s^2 + T^2)), which makes exact endpoint
// errors available for convergence checks.
GaussianMixture single_gaussian(int d, double s) {
    Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(1, d);
    Eigen::VectorXd w = Eigen::VectorXd::Ones(1);
    Eigen::VectorXd std_vec = Eigen::VectorXd::Constant(1, s);
    return GaussianMixture(mean, w, std_vec);
}

// f(x, t) = scale * x, independent of t; lets tests force blowups.
class ScaleField final : public ScoreField {
public:
    ScaleField(int d, double scale) : d_(d), scale_(scale) {}
    int dim() const override { return d_; }
    Eigen::VectorXd eval(const Eigen::VectorXd& x, double) const override { return scale_ * x; }

private:
    int d_;
    double scale_;
};

class ZeroField final : public ScoreField {
public:
    explicit ZeroField(int d) : d_(d) {}
    int dim() const override { return d_; }
    Eigen::VectorXd eval(const Eigen::VectorXd& x, double) const override {
        return Eigen::VectorXd::Zero(x.size());
    }

private:
    int d_;
};

Eigen::MatrixXd random_points(int n, int d, std::uint64_t seed) {
    RngStream rng(seed, 0, kStageProbe);
    Eigen::MatrixXd x(n, d);
    for (int i = 0; i < n; ++i) x.row(i) = rng.normal_vec(d).transpose();
    return x;
}

double flow_factor(double s, double t_from, double t_to) {
    return std::sqrt((s * s + t_to * t_to) / (s * s + t_from * t_from));
}

RestartConfig canonical_restart(int k_iterations) {
    RestartConfig config;
    config.n_main = 18;
    RestartLevel level;
    level.n_restart_steps = 3;
    level.k_iterations = k_iterations;
    level.t_min = 0.06;
    level.t_max = 0.30;
    config.levels = {level};
    return embed_restart_intervals(main_time_grid(RestartConfig{}), config);
}

} // namespace

TEST_CASE("single euler and heun steps match hand-rolled formulas") {
    GaussianMixture gm = single_gaussian(3, 1.2);
    RngStream rng(91, 0, kStageProbe);
    Eigen::VectorXd x = 2.0 * rng.normal_vec(3);
    double t_cur = 1.4, t_next = 1.1;

    Eigen::VectorXd f0 = gm.eval(x, t_cur);
    Eigen::VectorXd euler_expected = x - (t_next - t_cur) * (t_cur * f0);
    CHECK((euler_step(gm, x, t_cur, t_next) - euler_expected).norm() <= 1e-14);

    Eigen::VectorXd d1 = t_cur * f0;
    Eigen::VectorXd mid = x - (t_next - t_cur) * d1;
    Eigen::VectorXd d2 = t_next * gm.eval(mid, t_next);
    Eigen::VectorXd heun_expected = x - 0.5 * (t_next - t_cur) * (d1 + d2);
    CHECK((heun_step(gm, x, t_cur, t_next) - heun_expected).norm() <= 1e-14);

    // The terminal step to t = 0 skips the corrector.
    Eigen::VectorXd to_zero = heun_step(gm, x, 0.5, 0.0);
    Eigen::VectorXd f_half = gm.eval(x, 0.5);
    CHECK((to_zero - (x + 0.5 * (0.5 * f_half))).norm() <= 1e-14);

    CHECK_THROWS_AS(euler_step(gm, x, 1.0, 1.5), DomainError);
    CHECK_THROWS_AS(heun_step(gm, x, 0.0, -1.0), DomainError);
}

TEST_CASE("solver orders show on the analytic gaussian flow") {
    const double s = 1.0, t_start = 3.0, t_end = 0.5;
    GaussianMixture gm = single_gaussian(2, s);
    Eigen::MatrixXd x0(1, 2);
    x0 << 1.7, -0.9;
    Eigen::RowVector2d exact = x0.row(0) * flow_factor(s, t_start, t_end);

    auto endpoint_error = [&](Solver solver, int n_steps) {
        TimeGrid grid = edm_time_grid(t_end, t_start, n_steps + 1, 7.0);
        SampleBatch out = ode_solve(gm, x0, grid, solver);
        REQUIRE(out.failed.empty());
        return (out.points.row(0) - exact).norm();
    };

    double euler_32 = endpoint_error(Solver::euler, 32);
    double euler_64 = endpoint_error(Solver::euler, 64);
    double heun_32 = endpoint_error(Solver::heun, 32);
    double heun_64 = endpoint_error(Solver::heun, 64);

    double euler_order = std::log2(euler_32 / euler_64);
    double heun_order = std::log2(heun_32 / heun_64);
    CHECK(euler_order > 0.7);
    CHECK(euler_order < 1.3);
    CHECK(heun_order > 1.7);
    CHECK(heun_order < 2.3);

    // Heun is far more accurate at an equal step count.
    CHECK(heun_32 < 0.1 * euler_32);
}

TEST_CASE("sampler grids realize the requested step counts") {
    SamplerSpec spec;
    spec.n_steps = 18;

    TimeGrid grid = sampler_grid(spec);
    REQUIRE(grid.n_points() == 19);
    CHECK(grid.back() == 0.0);
    CHECK(grid.times[0] == 80.0);
    CHECK(grid.times[17] == 0.002);

    spec.final_zero = false;
    TimeGrid window = sampler_grid(spec);
    REQUIRE(window.n_points() == 19);
    CHECK(window.back() == 0.002);

    GaussianMixture gm = single_gaussian(2, 1.0);
    Eigen::MatrixXd x0 = random_points(3, 2, 1);
    spec.final_zero = true;
    CHECK(ode_solve(gm, x0, sampler_grid(spec), Solver::heun).nfe == 35);
    CHECK(ode_solve(gm, x0, sampler_grid(spec), Solver::euler).nfe == 18);
    spec.final_zero = false;
    CHECK(ode_solve(gm, x0, sampler_grid(spec), Solver::heun).nfe == 36);
    CHECK(ode_solve(gm, x0, sampler_grid(spec), Solver::euler).nfe == 18);
}

TEST_CASE("sde with zero noise multiplier is bitwise the euler ode") {
    GaussianMixture gm = single_gaussian(3, 0.9);
    Eigen::MatrixXd x0 = random_points(6, 3, 2);
    TimeGrid grid = edm_time_grid(0.01, 5.0, 12, 7.0);

    SampleBatch ode = ode_solve(gm, x0, grid, Solver::euler);
    SampleBatch sde = sde_solve(gm, x0, grid, 0.0, 1234);
    CHECK(ode.points == sde.points);
    CHECK(ode.nfe == sde.nfe);

    // Positive noise leaves the degenerate path.
    SampleBatch noisy = sde_solve(gm, x0, grid, 1.0, 1234);
    CHECK((noisy.points - ode.points).norm() > 1e-8);
}

TEST_CASE("improved sde with zero churn is bitwise the heun ode") {
    GaussianMixture gm = single_gaussian(3, 0.9);
    Eigen::MatrixXd x0 = random_points(5, 3, 3);
    TimeGrid grid = edm_time_grid(0.01, 5.0, 12, 7.0);

    ChurnParams churn;  // s_churn = 0
    SampleBatch quiet = improved_sde_solve(gm, x0, grid, churn, 99);
    SampleBatch ode = ode_solve(gm, x0, grid, Solver::heun);
    CHECK(quiet.points == ode.points);
    CHECK(quiet.nfe == ode.nfe);

    churn.s_churn = 8.0;
    SampleBatch churned = improved_sde_solve(gm, x0, grid, churn, 99);
    CHECK((churned.points - ode.points).norm() > 1e-8);
    CHECK(churned.nfe == ode.nfe);  // churn costs noise, not evaluations
}

TEST_CASE("churn restricted to a noise band only fires inside it") {
    GaussianMixture gm = single_gaussian(2, 1.0);
    Eigen::MatrixXd x0 = random_points(4, 2, 4);
    TimeGrid grid = edm_time_grid(0.01, 5.0, 10, 7.0);

    ChurnParams banded;
    banded.s_churn = 4.0;
    banded.s_min = 100.0;  // band is empty, so no churn anywhere
    banded.s_max = 200.0;
    SampleBatch no_hits = improved_sde_solve(gm, x0, grid, banded, 7);
    SampleBatch ode = ode_solve(gm, x0, grid, Solver::heun);
    CHECK(no_hits.points == ode.points);

    banded.s_min = 0.0;
    banded.s_max = 1e9;
    SampleBatch always = improved_sde_solve(gm, x0, grid, banded, 7);
    CHECK((always.points - ode.points).norm() > 1e-10);
}

TEST_CASE("restart with zero iterations is bitwise the main ode") {
    GaussianMixture gm = single_gaussian(4, 1.1);
    Eigen::MatrixXd x0 = random_points(5, 4, 5);

    for (Solver solver : {Solver::euler, Solver::heun}) {
        RestartConfig config = canonical_restart(0);
        SampleBatch rst = restart_sample(gm, x0, config, solver, solver, 77);
        SampleBatch ode = ode_solve(gm, x0, main_time_grid(config), solver);
        CHECK(rst.points == ode.points);
        CHECK(rst.nfe == ode.nfe);
    }
}

TEST_CASE("restart nfe matches the schedule accounting") {
    GaussianMixture gm = single_gaussian(2, 1.0);
    Eigen::MatrixXd x0 = random_points(3, 2, 6);

    RestartConfig config = canonical_restart(10);
    SampleBatch out = restart_sample(gm, x0, config, Solver::heun, Solver::heun, 7);
    CHECK(out.nfe == 75);
    CHECK(out.nfe == nfe_count(config, Solver::heun, Solver::heun));

    // Forward jumps are free: k iterations only pay for backward legs.
    SampleBatch base = restart_sample(gm, x0, canonical_restart(0), Solver::heun, Solver::heun, 7);
    CHECK(out.nfe == base.nfe + 10LL * 2 * (3 - 1));

    SampleBatch euler_legs = restart_sample(gm, x0, config, Solver::heun, Solver::euler, 7);
    CHECK(euler_legs.nfe == 35 + 10 * 2);
}

TEST_CASE("restart accounting matches the samplers on random configs") {
    ZeroField field(2);
    Eigen::MatrixXd x0 = Eigen::MatrixXd::Zero(1, 2);
    RngStream rng(95, 0, kStageProbe);

    for (int trial = 0; trial < 100; ++trial) {
        RestartConfig config;
        config.n_main = 4 + static_cast<int>(rng.uniform() * 20.0);
        config.final_zero = rng.uniform() < 0.5;
        TimeGrid main = main_time_grid(config);

        int max_min_index = config.n_main - 1;  // grid index of main_t_min
        int n_levels = static_cast<int>(rng.uniform() * 3.0);
        int next_max = 1;  // indices must increase strictly down the grid
        for (int l = 0; l < n_levels && next_max < max_min_index; ++l) {
            int a = next_max + static_cast<int>(rng.uniform() * (max_min_index - next_max));
            int b = a + 1 + static_cast<int>(rng.uniform() * (max_min_index - a));
            if (b > max_min_index) b = max_min_index;
            RestartLevel level;
            level.t_max = main.times[a];
            level.t_min = main.times[b];
            level.n_restart_steps = 2 + static_cast<int>(rng.uniform() * 5.0);
            level.k_iterations = static_cast<int>(rng.uniform() * 5.0);
            config.levels.push_back(level);
            next_max = b;
        }

        Solver sm = rng.uniform() < 0.5 ? Solver::euler : Solver::heun;
        Solver sr = rng.uniform() < 0.5 ? Solver::euler : Solver::heun;
        SampleBatch out = restart_sample(field, x0, config, sm, sr, trial);
        CHECK(out.nfe == nfe_count(config, sm, sr));
        CHECK(out.failed.empty());
    }
}

TEST_CASE("restart rejects levels that are not on the main grid") {
    GaussianMixture gm = single_gaussian(2, 1.0);
    Eigen::MatrixXd x0 = random_points(2, 2, 8);

    RestartConfig config;
    config.n_main = 18;
    RestartLevel level;
    level.n_restart_steps = 3;
    level.k_iterations = 2;
    level.t_min = 0.06;  // not a grid time until embedded
    level.t_max = 0.30;
    config.levels = {level};

    CHECK_THROWS_AS(restart_sample(gm, x0, config, Solver::heun, Solver::heun, 1), ConfigError);
    RestartConfig embedded = embed_restart_intervals(main_time_grid(config), config);
    CHECK_NOTHROW(restart_sample(gm, x0, embedded, Solver::heun, Solver::heun, 1));
}

TEST_CASE("stochastic samplers are deterministic in the seed and batch-stable") {
    GaussianMixture gm = single_gaussian(3, 1.0);
    Eigen::MatrixXd x0 = random_points(6, 3, 9);
    TimeGrid grid = edm_time_grid(0.05, 4.0, 10, 7.0);

    SampleBatch a = sde_solve(gm, x0, grid, 1.0, 42);
    SampleBatch b = sde_solve(gm, x0, grid, 1.0, 42);
    CHECK(a.points == b.points);
    SampleBatch c = sde_solve(gm, x0, grid, 1.0, 43);
    CHECK((a.points - c.points).norm() > 1e-8);

    // Trimming the batch does not change the surviving trajectories.
    SampleBatch head = sde_solve(gm, x0.topRows(3), grid, 1.0, 42);
    CHECK(head.points == a.points.topRows(3));

    RestartConfig config = canonical_restart(4);
    SampleBatch r1 = restart_sample(gm, x0, config, Solver::heun, Solver::heun, 12);
    SampleBatch r2 = restart_sample(gm, x0.topRows(2), config, Solver::heun, Solver::heun, 12);
    CHECK(r2.points == r1.points.topRows(2));
}

TEST_CASE("blowups freeze the offending rows and are reported in order") {
    ScaleField field(2, 1e5);
    Eigen::MatrixXd x0(3, 2);
    x0 << 0.0, 0.0,
          1e3, 1e3,
          2e3, -2e3;
    TimeGrid grid{{1.0, 0.5, 0.25}};

    SampleBatch out = ode_solve(field, x0, grid, Solver::euler);
    REQUIRE(out.failed == std::vector<int>{1, 2});
    CHECK(out.points.row(0).norm() == 0.0);  // survivor untouched at the origin
    // Failed rows freeze at their last finite value instead of going non-finite.
    CHECK(out.points.row(1) == x0.row(1));
    CHECK(out.points.row(2) == x0.row(2));
    CHECK(out.points.allFinite());
}

TEST_CASE("run_sampler dispatches every kind with consistent accounting") {
    GaussianMixture gm = single_gaussian(2, 1.0);
    Eigen::MatrixXd x0 = random_points(4, 2, 10);

    SamplerSpec ode;
    ode.kind = SamplerKind::ode;
    ode.n_steps = 12;
    SampleBatch a = run_sampler(gm, x0, ode, 5);
    CHECK(a.nfe == 2 * 12 - 1);

    SamplerSpec sde;
    sde.kind = SamplerKind::sde;
    sde.n_steps = 12;
    sde.noise_mult = 1.0;
    SampleBatch b = run_sampler(gm, x0, sde, 5);
    CHECK(b.nfe == 12);
    CHECK(b.seed == 5);

    SamplerSpec imp;
    imp.kind = SamplerKind::improved_sde;
    imp.n_steps = 12;
    imp.churn.s_churn = 4.0;
    SampleBatch c = run_sampler(gm, x0, imp, 5);
    CHECK(c.nfe == 2 * 12 - 1);

    SamplerSpec rst;
    rst.kind = SamplerKind::restart;
    rst.restart = canonical_restart(2);
    SampleBatch d = run_sampler(gm, x0, rst, 5);
    CHECK(d.nfe == 43);

    CHECK(describe(ode).find("ode") == 0);
    CHECK(describe(rst).find("restart") == 0);
    CHECK(describe(sde).find("m=1") != std::string::npos);

    CHECK(sampler_kind_from_string("improved_sde") == SamplerKind::improved_sde);
    CHECK_THROWS_AS(sampler_kind_from_string("dpm"), ConfigError);
    CHECK(to_string(SamplerKind::restart) == "restart");
}

TEST_CASE("sde marginal variance tracks the widened gaussian") {
    const double s = 1.0, t_start = 4.0, t_check = 1.0;
    GaussianMixture gm = single_gaussian(2, s);

    const int n = 4000;
    RngStream prior(97, 0, kStagePrior);
    Eigen::MatrixXd x0(n, 2);
    double start_std = std::sqrt(s * s + t_start * t_start);
    for (int i = 0; i < n; ++i) x0.row(i) = (start_std * prior.normal_vec(2)).transpose();

    TimeGrid grid = edm_time_grid(t_check, t_start, 65, 7.0);
    SampleBatch out = sde_solve(gm, x0, grid, 1.0, 4242);
    REQUIRE(out.failed.empty());

    double expected = s * s + t_check * t_check;
    Eigen::RowVectorXd mean = out.points.colwise().mean();
    for (int c = 0; c < 2; ++c) {
        double var = (out.points.col(c).array() - mean[c]).square().sum() / (n - 1);
        // 5 sampling SEs plus a small discretization allowance.
        double tol = 5.0 * expected * std::sqrt(2.0 / (n - 1)) + 0.04 * expected;
        CHECK(std::abs(var - expected) < tol);
    }
}

TEST_CASE("spec validation rejects malformed samplers") {
    SamplerSpec spec;
    spec.n_steps = 0;
    CHECK_THROWS_AS(validate_sampler_spec(spec), ConfigError);

    spec = SamplerSpec{};
    spec.t_min = 2.0;
    spec.t_max = 1.0;
    CHECK_THROWS_AS(validate_sampler_spec(spec), ConfigError);

    spec = SamplerSpec{};
    spec.t_min = 0.0;  // final_zero needs a positive floor
    CHECK_THROWS_AS(validate_sampler_spec(spec), ConfigError);

    spec = SamplerSpec{};
    spec.kind = SamplerKind::sde;
    spec.noise_mult = -1.0;
    CHECK_THROWS_AS(validate_sampler_spec(spec), ConfigError);

    GaussianMixture gm = single_gaussian(2, 1.0);
    Eigen::MatrixXd wrong_dim = Eigen::MatrixXd::Zero(2, 3);
    CHECK_THROWS_AS(ode_solve(gm, wrong_dim, edm_time_grid(0.1, 1.0, 4, 7.0), Solver::euler),
                    ConfigError);
    Eigen::MatrixXd no_rows(0, 2);
    CHECK_THROWS_AS(ode_solve(gm, no_rows, edm_time_grid(0.1, 1.0, 4, 7.0), Solver::euler),
                    ConfigError);
}
