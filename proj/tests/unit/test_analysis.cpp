#include "eflow/analysis.hpp"
#include "eflow/errors.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

using namespace eflow;
using Catch::Approx;

TEST_CASE("decay fit recovers an exact exponential", "[fit]") {
    std::vector<double> t;
    std::vector<double> d;
    for (int k = 0; k <= 400; ++k) {
        t.push_back(0.1 * k);
        d.push_back(3.0 * std::exp(-0.5 * t.back()));
    }
    const auto fit = fit_decay_rate(t, d, 2.0, 30.0, 0.0);
    CHECK(fit.lambda_fit == Approx(0.5).epsilon(1e-12));
    CHECK(fit.intercept == Approx(std::log(3.0)).epsilon(1e-10));
    CHECK(fit.r2 == Approx(1.0).epsilon(1e-12));
    CHECK(fit.t_lo >= 2.0);
    CHECK(fit.t_hi <= 30.0);
    CHECK_FALSE(fit.window_shrunk);
}

TEST_CASE("decay fit stops at the noise floor", "[fit]") {
    std::vector<double> t;
    std::vector<double> d;
    for (int k = 0; k <= 400; ++k) {
        t.push_back(0.1 * k);
        d.push_back(std::max(std::exp(-t.back()), 1e-13));
    }
    const auto fit = fit_decay_rate(t, d, 0.0, 40.0);
    CHECK(fit.window_shrunk);
    CHECK(fit.t_hi < -std::log(kDecayNoiseFloor) + 0.1);
    CHECK(fit.lambda_fit == Approx(1.0).epsilon(1e-10));

    const std::vector<double> few_t{0.0, 1.0, 2.0};
    const std::vector<double> few_d{1.0, 0.5, 0.25};
    CHECK_THROWS_AS(fit_decay_rate(few_t, few_d, 0.0, 2.0), NumericalFailure);
}

TEST_CASE("Doeblin floor for model 1 with p = 1, s_star = 1", "[doeblin]") {
    const Grid g(10.0, 1000);
    const auto rep = doeblin_check(ModelKind::age_structured, make_constant_rate(1.0, 1.0), nullptr, g, 32);
    CHECK(rep.pass);
    CHECK(rep.bound == Approx(std::exp(-2.0)));
    CHECK(rep.lo == 0.0);
    CHECK(rep.hi == 1.0);
    CHECK(rep.t0 == 2.0);
    CHECK(rep.min_density >= rep.floor);
    CHECK(rep.trials >= 32);

    // The same floor scaled well above the attained minimum must fail.
    const auto tamper = doeblin_check(ModelKind::age_structured, make_constant_rate(1.0, 1.0), nullptr, g, 32,
                                      1, 1.1 * rep.min_density / rep.floor);
    CHECK_FALSE(tamper.pass);
}

TEST_CASE("Doeblin floor for model 2 with a uniform kernel", "[doeblin]") {
    const Grid g(10.0, 1000);
    const auto kernel = make_truncated_uniform_kernel(g, 0.25);
    const auto rep = doeblin_check(ModelKind::fatigue, make_constant_rate(1.0, 1.0), &kernel, g, 16, 2);
    CHECK(rep.pass);
    CHECK(rep.lo == Approx(kernel.delta()));
    CHECK(rep.bound == Approx(kernel.eps() * kernel.delta() * std::exp(-2.0)));
}

TEST_CASE("Doeblin check rejects under-resolved grids", "[doeblin]") {
    CHECK_THROWS_AS(doeblin_check(ModelKind::age_structured, make_constant_rate(1.0, 1.0), nullptr, Grid(10.0, 100)),
                    ConfigError);
    CHECK_THROWS_AS(doeblin_check(ModelKind::age_structured, make_constant_rate(1.0, 4.0), nullptr, Grid(6.0, 600)),
                    ConfigError);
    CHECK_THROWS_AS(
        doeblin_check(ModelKind::age_structured, make_constant_rate(1.0, 1.0), nullptr, Grid(10.0, 1000), 1),
        ConfigError);
}

TEST_CASE("windowed contraction and non-expansion", "[contraction]") {
    const Grid g(10.0, 1000);
    const auto frozen = make_constant_rate(1.0, 1.0);
    const auto rep = contraction_check(ModelKind::age_structured, frozen, nullptr, g, 40, 99, 2);
    CHECK(rep.pass);
    CHECK(rep.non_expansive);
    CHECK(rep.worst_ratio <= 1.0 - std::exp(-2.0) + 5 * g.ds());
    CHECK(rep.pairs == 40);

    const auto again = contraction_check(ModelKind::age_structured, frozen, nullptr, g, 40, 99, 1);
    CHECK(again.worst_ratio == rep.worst_ratio);
    CHECK(again.worst_pair == rep.worst_pair);

    const auto kernel = make_truncated_uniform_kernel(g, 0.25);
    const auto rep2 = contraction_check(ModelKind::fatigue, frozen, &kernel, g, 20, 7);
    CHECK(rep2.pass);
}

TEST_CASE("random Dirac mixtures are probabilities with few atoms", "[contraction]") {
    const Grid g(10.0, 1000);
    std::mt19937_64 rng(1);
    for (int k = 0; k < 50; ++k) {
        const auto m = random_dirac_mixture(g, rng);
        CHECK(m.mass() == Approx(1.0).epsilon(1e-14));
        CHECK(m.is_nonnegative(0.0));
        std::size_t atoms = 0;
        for (double v : m.masses()) atoms += v > 0.0 ? 1 : 0;
        CHECK(atoms >= 1);
        CHECK(atoms <= 8);
    }
}

TEST_CASE("perturbation term vanishes for L = 0 and has zero integral", "[perturbation]") {
    const Grid g(10.0, 1000);
    const auto init = GridMeasure::dirac(g, 1.0);

    const auto flat = make_constant_rate(1.0, 1.0);
    const SimState st{0.0, init, 1.0};
    CHECK(perturbation_term(flat, nullptr, st, 0.7).tv() == 0.0);

    const auto rate = make_affine_sigmoid_rate(0.5, 1.0, 0.5, 0.016, 0.1);
    const auto kernel = make_truncated_uniform_kernel(g, 0.25);
    for (const KernelModel* k : {static_cast<const KernelModel*>(nullptr), &kernel}) {
        const auto h = perturbation_term(rate, k, SimState{0.0, init, 0.9}, 0.6);
        CHECK(h.tv() > 0.0);
        CHECK(std::abs(h.mass()) <= 1e-15);
    }
}

TEST_CASE("perturbation bound along a trajectory: ||h|| <= C_tilde tv", "[perturbation]") {
    // L = 0.05 on p in [0.5, 2] with s_star = 0.25 stays below the stationary threshold.
    const Grid g(10.0, 1000);
    const double L = 0.05;
    const auto rate = make_affine_sigmoid_rate(0.5, 2.0, 0.25, 4 * 0.1 * L / 1.5, 0.1);
    REQUIRE(rate.lipschitz() == Approx(L));
    const auto tc = theory_constants(rate, nullptr, ModelKind::age_structured);
    const auto eq = stationary_model1(rate, g);
    const Dynamics dyn{ModelKind::age_structured, rate, std::nullopt, false, kDefaultActivityTol};
    double worst = 0.0;
    Observers obs;
    obs.on_step = [&](const SimState& st, std::size_t) {
        const double d = tv_distance(st.n, eq.n_star);
        if (d < 1e-9) return;
        const auto h = perturbation_term(rate, nullptr, st, eq.N_star);
        worst = std::max(worst, h.tv() / d);
        REQUIRE(std::abs(h.mass()) <= 1e-12);
    };
    (void)simulate(dyn, GridMeasure::dirac(g, 0.0), 5.0, obs);
    CHECK(worst > 0.0);
    CHECK(worst <= 1.05 * tc.C_tilde);
}

TEST_CASE("relaxation experiment: equilibrium start and weak connectivity guard", "[relaxation]") {
    const Grid g(10.0, 1000);
    const auto rate = make_affine_sigmoid_rate(0.5, 1.0, 0.5, 0.016, 0.1);
    const auto eq = stationary_model1(rate, g);
    RelaxationOptions opt;
    opt.horizon = 10.0;
    opt.fit_hi = 10.0;
    opt.stride = 10;
    const auto rep = relaxation_experiment(ModelKind::age_structured, rate, nullptr,
                                           {{"d1", GridMeasure::dirac(g, 1.0)}, {"eq", eq.n_star}}, g, opt);
    REQUIRE(rep.runs.size() == 2);
    for (double d : rep.runs[1].tv) CHECK(d <= 1e-11);
    CHECK_FALSE(rep.runs[1].fit_ok);
    CHECK(rep.runs[0].fit_ok);
    CHECK(rep.runs[0].fit.lambda_fit >= 0.98 * rep.lambda_theory);
    CHECK(rep.h_pass);
    CHECK(rep.integral_pass);

    const auto strong = make_affine_sigmoid_rate(0.5, 1.0, 0.5, 0.1, 0.1);
    CHECK_THROWS_AS(relaxation_experiment(ModelKind::age_structured, strong, nullptr,
                                          {{"d", GridMeasure::dirac(g, 0.0)}}, g, opt),
                    ThresholdViolation);
}
