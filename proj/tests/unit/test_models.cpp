#include "eflow/errors.hpp"
#include "eflow/models.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

using namespace eflow;
using Catch::Approx;

TEST_CASE("constant rate passes every assumption with L = 0", "[rate]") {
    const auto r = make_constant_rate(1.5, 1.0);
    CHECK(r(3.0, 0.2) == 1.5);
    CHECK(r.lipschitz() == 0.0);
    const auto rep = validate_rate(r, {0.0, 10.0}, Grid(10.0, 500));
    CHECK(rep.pass());
    CHECK(rep.empirical_lipschitz == 0.0);
    CHECK_THROWS_AS(make_constant_rate(-1.0, 1.0), ConfigError);
    CHECK_THROWS_AS(make_constant_rate(1.0, 0.0), ConfigError);
}

TEST_CASE("affine sigmoid rate: bounds, monotonicity, certified L", "[rate]") {
    const auto r = make_affine_sigmoid_rate(0.5, 2.0, 1.0, 0.1, 0.25);
    CHECK(r.lipschitz() <= 0.15 + 1e-15);
    CHECK(r.lipschitz() == Approx(0.15));
    CHECK(r.p_min() == 0.5);
    CHECK(r.p_max() == 2.0);

    // Independent oracle: tanh' and logistic' are maximal at 0, so the
    // sup of |dp/dN| is attained at N = 0, s = s_star.
    const double h = 1e-6;
    const double slope = (r(h, 1.0) - r(-h, 1.0)) / (2 * h);
    CHECK(slope == Approx(0.1 * 1.5 / (4 * 0.25)).epsilon(1e-6));

    const auto rep = validate_rate(r, {0.0, 9.0}, Grid(10.0, 1000));
    CHECK(rep.pass());
    CHECK(rep.empirical_lipschitz <= r.lipschitz() * (1 + 1e-9));
    CHECK(rep.empirical_lipschitz > 0.9 * r.lipschitz());
    CHECK(rep.sampled_min_beyond_s_star >= 0.5);
    CHECK(rep.sampled_max <= 2.0);

    const auto zero = make_affine_sigmoid_rate(0.5, 2.0, 1.0, 0.0, 0.25);
    CHECK(zero.lipschitz() == 0.0);
    const auto flat = make_affine_sigmoid_rate(1.0, 1.0, 1.0, 0.3, 0.25);
    CHECK(flat.lipschitz() == 0.0);
    CHECK(flat(4.0, 0.1) == 1.0);
}

TEST_CASE("certified L dominates random difference quotients", "[rate]") {
    const auto r = make_affine_sigmoid_rate(0.3, 1.7, 0.8, -0.4, 0.2);
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> act(0.0, 4 * r.p_max() + 1);
    std::uniform_real_distribution<double> age(0.0, 10.0);
    double worst = 0.0;
    for (int k = 0; k < 10000; ++k) {
        const double n1 = act(rng);
        const double n2 = act(rng);
        const double s = age(rng);
        if (n1 == n2) continue;
        worst = std::max(worst, std::abs(r(n1, s) - r(n2, s)) / std::abs(n1 - n2));
    }
    CHECK(worst <= r.lipschitz());
}

TEST_CASE("validate_rate reports a witness for each broken assumption", "[rate]") {
    const Grid g(5.0, 200);
    // p4: vanishes beyond s_star while claiming p_min = 1.
    const RateModel dies("custom", [](double, double s) { return s < 2.0 ? 1.0 : 0.0; },
                         RateBounds{1.0, 1.0, 1.0, 0.0, false});
    const auto r4 = validate_rate(dies, {0.0, 1.0}, g);
    CHECK_FALSE(r4.check("p4").pass);
    REQUIRE(r4.check("p4").witness);
    CHECK(r4.check("p4").witness->age >= 2.0);

    // p2: slope 1 in N while claiming L = 0.5.
    const RateModel steep("custom", [](double n, double) { return std::min(1.0 + n, 3.0); },
                          RateBounds{1.0, 3.0, 1.0, 0.5, true});
    const auto r2 = validate_rate(steep, {0.0, 1.0}, g);
    CHECK_FALSE(r2.check("p2").pass);
    CHECK(r2.empirical_lipschitz == Approx(1.0));

    // p3: decreasing in s.
    const RateModel falling("custom", [](double, double s) { return 2.0 - 0.1 * s; },
                            RateBounds{1.0, 2.0, 1.0, 0.0, true});
    CHECK_FALSE(validate_rate(falling, {0.0, 1.0}, g).check("p3").pass);

    // p1: negative values.
    const RateModel negative("custom", [](double, double s) { return s - 1.0; },
                             RateBounds{0.0, 5.0, 1.0, 0.0, false});
    CHECK_FALSE(validate_rate(negative, {0.0, 1.0}, g).check("p1").pass);
}

TEST_CASE("affine rate factory", "[rate]") {
    const auto r = make_affine_rate(1.0, 0.5, 3.0, 1.0);
    CHECK(r.lipschitz() == 0.5);
    CHECK(r(2.0, 0.0) == 2.0);
    CHECK(r(100.0, 0.0) == 3.0);
    CHECK_THROWS_AS(make_affine_rate(4.0, 0.5, 3.0, 1.0), ConfigError);
}

TEST_CASE("frozen rate drops the activity dependence", "[rate]") {
    const auto r = make_affine_sigmoid_rate(0.5, 2.0, 1.0, 0.2, 0.25);
    const auto f = r.frozen_at(0.7);
    CHECK(f.lipschitz() == 0.0);
    CHECK(f(0.0, 1.1) == r(0.7, 1.1));
    CHECK(f(5.0, 1.1) == r(0.7, 1.1));
}

TEST_CASE("point-mass kernel", "[kernel]") {
    const Grid g(10.0, 1000);
    const auto k = make_delta_kernel(g);
    CHECK(k.is_point_mass_at_zero());
    CHECK(k.weight(0, 500) == 1.0);
    CHECK(k.weight(1, 500) == 0.0);
    CHECK(validate_kernel(k, 1.0).pass());
}

TEST_CASE("truncated uniform kernel: stochastic, supported below the source, minorized", "[kernel]") {
    const Grid g(10.0, 1000);  // ds = 0.01
    const double c = 0.25;
    const auto k = make_truncated_uniform_kernel(g, c);
    CHECK(k.eps() == Approx(1.0 / c));
    CHECK(k.delta() == Approx(c - g.ds()));
    const auto rep = validate_kernel(k, 1.0);
    CHECK(rep.pass());
    CHECK(rep.worst_sum_error <= 1e-12);

    // Column for u >= c: uniform density 1/c on [0, c).
    for (std::size_t i = 0; i < 25; ++i) CHECK(k.weight(i, 600) == Approx(g.ds() / c));
    CHECK(k.weight(25, 600) == 0.0);
    // Column for u < c: uniform on [0, u], nothing above the source cell.
    CHECK(k.weight(0, 0) == 1.0);
    CHECK(k.weight(3, 3) == Approx(0.25));
    CHECK(k.weight(4, 3) == 0.0);

    std::vector<double> fired(g.n_cells(), 0.0);
    fired[10] = 0.3;
    fired[700] = 0.7;
    std::vector<double> dest(g.n_cells(), 0.0);
    k.redistribute(fired, 0.0, dest);
    double total = 0.0;
    for (double v : dest) total += v;
    CHECK(total == Approx(1.0).epsilon(1e-14));

    CHECK_THROWS_AS(make_truncated_uniform_kernel(g, 0.01), ConfigError);
    CHECK_THROWS_AS(make_truncated_uniform_kernel(g, 0.005), ConfigError);
    CHECK_THROWS_AS(make_truncated_uniform_kernel(g, 20.0), ConfigError);
    CHECK_FALSE(validate_kernel(make_truncated_uniform_kernel(g, 2.0), 1.0).delta_in_range);
}

TEST_CASE("kernel with a column above its source fails the support check", "[kernel]") {
    const Grid g(1.0, 4);
    std::vector<KernelColumn> cols{{0, {1.0}}, {0, {0.5, 0.5}}, {0, {0.0, 0.0, 0.0, 1.0}}, {0, {1.0}}};
    const KernelModel k(g, "custom", cols, 1.0, 0.25);
    const auto rep = validate_kernel(k, 0.5);
    CHECK_FALSE(rep.support);
    REQUIRE(rep.witness_column);
    CHECK(*rep.witness_column == 2);
}
