#include <doctest.h>

#include <cmath>
#include <vector>

#include "restart/errors.hpp"
#include "restart/rng.hpp"
#include "restart/schedule.hpp"

using namespace restart;

namespace {

// Direct transcription of the warped-grid formula, kept separate from the
// library implementation on purpose.
double reference_edm_time(double t_min, double t_max, int n, double rho, int i) {
    double hi = std::pow(t_max, 1.0 / rho);
    double lo = std::pow(t_min, 1.0 / rho);
    double u = static_cast<double>(i) / static_cast<double>(n - 1);
    return std::pow(hi + u * (lo - hi), rho);
}

RestartLevel make_level(int n_restart_steps, int k, double t_min, double t_max) {
    RestartLevel level;
    level.n_restart_steps = n_restart_steps;
    level.k_iterations = k;
    level.t_min = t_min;
    level.t_max = t_max;
    return level;
}

} // namespace

TEST_CASE("edm grid endpoints and landmark interior values") {
    TimeGrid grid = edm_time_grid(0.002, 80.0, 18, 7.0);
    REQUIRE(grid.n_points() == 18);
    CHECK(grid.times[0] == 80.0);
    CHECK(grid.times[17] == 0.002);

    // Interior entries agree with an independent evaluation of the formula.
    for (int i = 1; i < 17; ++i)
        CHECK(grid.times[i] == doctest::Approx(reference_edm_time(0.002, 80.0, 18, 7.0, i))
                                   .epsilon(1e-15));

    // The default main grid passes close to the canonical restart interval
    // bounds 0.30 and 0.06.
    CHECK(std::abs(grid.times[12] - 0.30) <= 0.05 * 0.30);
    CHECK(std::abs(grid.times[14] - 0.06) <= 0.05 * 0.06);
}

TEST_CASE("edm grid with two points is just the endpoints") {
    TimeGrid grid = edm_time_grid(0.1, 2.0, 2, 7.0);
    REQUIRE(grid.n_points() == 2);
    CHECK(grid.times[0] == 2.0);
    CHECK(grid.times[1] == 0.1);
}

TEST_CASE("edm grid with rho = 1 is arithmetic") {
    TimeGrid grid = edm_time_grid(1.0, 9.0, 9, 1.0);
    for (int i = 1; i < grid.n_points(); ++i)
        CHECK(grid.times[i - 1] - grid.times[i] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("edm grid is strictly decreasing across random shapes") {
    RngStream rng(7, 0, kStageProbe);
    for (int trial = 0; trial < 50; ++trial) {
        double t_min = 1e-3 + rng.uniform();
        double t_max = t_min + 0.5 + 100.0 * rng.uniform();
        int n = 2 + static_cast<int>(rng.uniform() * 40.0);
        double rho = 0.5 + 10.0 * rng.uniform();
        TimeGrid grid = edm_time_grid(t_min, t_max, n, rho);
        CHECK(grid.front() == t_max);
        CHECK(grid.back() == t_min);
        for (int i = 1; i < grid.n_points(); ++i)
            CHECK(grid.times[i] < grid.times[i - 1]);
    }
}

TEST_CASE("grid validation rejects malformed inputs") {
    CHECK_THROWS_AS(edm_time_grid(2.0, 1.0, 8, 7.0), ConfigError);
    CHECK_THROWS_AS(edm_time_grid(-1.0, 1.0, 8, 7.0), ConfigError);
    CHECK_THROWS_AS(edm_time_grid(0.1, 1.0, 1, 7.0), ConfigError);
    CHECK_THROWS_AS(edm_time_grid(0.1, 1.0, 8, 0.0), ConfigError);

    TimeGrid increasing{{1.0, 2.0}};
    CHECK_THROWS_AS(validate_time_grid(increasing), ConfigError);
    TimeGrid zero_inside{{2.0, 0.0, 1.0}};
    CHECK_THROWS_AS(validate_time_grid(zero_inside), ConfigError);
    TimeGrid ok{{2.0, 1.0, 0.0}};
    CHECK_NOTHROW(validate_time_grid(ok));
}

TEST_CASE("main grid appends the terminal zero only when requested") {
    RestartConfig config;
    config.n_main = 18;

    TimeGrid with_zero = main_time_grid(config);
    REQUIRE(with_zero.n_points() == 19);
    CHECK(with_zero.back() == 0.0);
    CHECK(with_zero.times[17] == 0.002);

    config.final_zero = false;
    TimeGrid without = main_time_grid(config);
    REQUIRE(without.n_points() == 18);
    CHECK(without.back() == 0.002);
}

TEST_CASE("embedding rounds level t_min onto the main grid") {
    RestartConfig config;
    config.n_main = 18;
    config.levels = {make_level(3, 10, 0.06, 0.30)};
    TimeGrid main = main_time_grid(config);

    RestartConfig embedded = embed_restart_intervals(main, config);
    CHECK(embedded.levels[0].t_min == main.times[14]);  // nearest to 0.06
    CHECK(embedded.levels[0].t_max == 0.30);            // t_max is left alone
    CHECK(is_embedded(main, embedded));
    CHECK_FALSE(is_embedded(main, config));

    // Idempotence: embedding an embedded config changes nothing.
    RestartConfig again = embed_restart_intervals(main, embedded);
    CHECK(again.levels[0].t_min == embedded.levels[0].t_min);
    for (size_t j = 0; j < again.levels.size(); ++j)
        CHECK(again.levels[j].t_min == embedded.levels[j].t_min);
}

TEST_CASE("embedding resolves exact midpoint ties to the larger time") {
    TimeGrid main{{4.0, 2.0, 0.5}};
    RestartConfig config;
    config.n_main = 3;
    config.main_t_min = 0.5;
    config.main_t_max = 4.0;
    config.levels = {make_level(2, 1, 3.0, 4.5)};  // 3.0 is equidistant from 4 and 2

    RestartConfig embedded = embed_restart_intervals(main, config);
    CHECK(embedded.levels[0].t_min == 4.0);
}

TEST_CASE("embedding rejects levels that fall off the grid or collapse") {
    RestartConfig config;
    config.n_main = 18;
    TimeGrid main = main_time_grid(config);

    // Below the smallest positive grid time, rounds to the appended 0.
    config.levels = {make_level(2, 1, 5e-4, 0.30)};
    CHECK_THROWS_AS(embed_restart_intervals(main, config), ConfigError);

    // Above the grid entirely.
    config.levels = {make_level(2, 1, 100.0, 120.0)};
    CHECK_THROWS_AS(embed_restart_intervals(main, config), ConfigError);

    // Rounding pushes t_min above t_max, leaving an empty interval.
    config.levels = {make_level(2, 1, 70.0, 75.0)};
    CHECK_THROWS_AS(embed_restart_intervals(main, config), ConfigError);
}

TEST_CASE("restart config validation rejects overlapping levels") {
    RestartConfig config;
    config.levels = {make_level(3, 2, 1.0, 5.0), make_level(3, 2, 0.1, 2.0)};
    CHECK_THROWS_AS(validate_restart_config(config), ConfigError);

    // Touching intervals are allowed.
    config.levels = {make_level(3, 2, 1.0, 5.0), make_level(3, 2, 0.1, 1.0)};
    CHECK_NOTHROW(validate_restart_config(config));

    config.levels = {make_level(1, 2, 0.1, 1.0)};
    CHECK_THROWS_AS(validate_restart_config(config), ConfigError);
    config.levels = {make_level(3, -1, 0.1, 1.0)};
    CHECK_THROWS_AS(validate_restart_config(config), ConfigError);
    config.levels = {make_level(3, 2, 0.1, 1.0)};
    config.levels[0].s_noise = 0.5;
    CHECK_THROWS_AS(validate_restart_config(config), ConfigError);
}

TEST_CASE("nfe_count reproduces the published restart budgets") {
    auto budget = [](int k) {
        RestartConfig config;
        config.n_main = 18;
        config.levels = {make_level(3, k, 0.06, 0.30)};
        return nfe_count(config, Solver::heun, Solver::heun);
    };
    CHECK(budget(10) == 75);
    CHECK(budget(2) == 43);
    CHECK(budget(20) == 115);
    CHECK(budget(5) == 55);

    RestartConfig plain;
    plain.n_main = 18;
    CHECK(nfe_count(plain, Solver::heun, Solver::heun) == 35);
    CHECK(nfe_count(plain, Solver::euler, Solver::euler) == 18);
}

TEST_CASE("nfe_count covers solver combinations and window grids") {
    RestartConfig config;
    config.n_main = 18;
    config.levels = {make_level(3, 10, 0.06, 0.30)};

    CHECK(nfe_count(config, Solver::euler, Solver::heun) == 18 + 40);
    CHECK(nfe_count(config, Solver::heun, Solver::euler) == 35 + 20);
    CHECK(nfe_count(config, Solver::euler, Solver::euler) == 18 + 20);

    // Without the terminal zero the main process has n_main - 1 steps and no
    // half-price final step.
    config.final_zero = false;
    CHECK(nfe_count(config, Solver::heun, Solver::heun) == 2 * 17 + 40);
    CHECK(nfe_count(config, Solver::euler, Solver::euler) == 17 + 20);
}

TEST_CASE("solver and name round trips") {
    CHECK(solver_from_string("euler") == Solver::euler);
    CHECK(solver_from_string("heun") == Solver::heun);
    CHECK(to_string(Solver::euler) == "euler");
    CHECK(to_string(Solver::heun) == "heun");
    CHECK_THROWS_AS(solver_from_string("rk4"), ConfigError);
}
