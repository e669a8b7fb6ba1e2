// Acceptance criteria at desk scale: s_max = 10, 2000 cells (ds = 0.005).
// Prints one PASS/FAIL line per criterion; exit status is nonzero on any FAIL.

#include "eflow/analysis.hpp"
#include "eflow/equilibria.hpp"
#include "eflow/grid_measure.hpp"
#include "eflow/models.hpp"
#include "eflow/semigroup.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

using namespace eflow;

namespace {

int failures = 0;

void report(int id, bool pass, const std::string& what, const std::string& detail, double seconds) {
    std::printf("%s [%d] %s: %s (%.1fs)\n", pass ? "PASS" : "FAIL", id, what.c_str(), detail.c_str(), seconds);
    std::fflush(stdout);
    if (!pass) ++failures;
}

std::string g(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

const Grid kGrid(10.0, 2000);

// Smoothed step with certified L = 0.016 * 0.5 / (4 * 0.1) = 0.02.
RateModel relaxation_rate() {
    return make_affine_sigmoid_rate(0.5, 1.0, 0.5, 0.016, 0.1);
}

// 1. Conservation and positivity over 1e5 steps.
void criterion_1() {
    const auto t0 = std::chrono::steady_clock::now();
    const KernelModel uniform = make_truncated_uniform_kernel(kGrid, 0.25);
    struct Case {
        const char* name;
        RateModel rate;
        const KernelModel* kernel;
    };
    const RateModel constant = make_constant_rate(1.0, 1.0);
    const RateModel smooth = relaxation_rate();
    const std::vector<Case> cases = {
        {"model1/constant", constant, nullptr},
        {"model1/smoothed-step", smooth, nullptr},
        {"model2/constant", constant, &uniform},
        {"model2/smoothed-step", smooth, &uniform},
    };
    double worst_drift = 0.0;
    double worst_negative = 0.0;
    for (const auto& c : cases) {
        const Dynamics dyn{c.kernel ? ModelKind::fatigue : ModelKind::age_structured, c.rate,
                           c.kernel ? std::optional<KernelModel>(*c.kernel) : std::nullopt, false,
                           kDefaultActivityTol};
        SimState state = make_state(dyn, GridMeasure::dirac(kGrid, 0.0));
        const double m0 = state.n.mass();
        for (int step = 0; step < 100000; ++step) {
            state = advance(dyn, std::move(state));
            for (double v : state.n.masses()) worst_negative = std::min(worst_negative, v);
            worst_negative = std::min(worst_negative, state.n.tail());
        }
        worst_drift = std::max(worst_drift, std::abs(state.n.mass() - m0) / m0);
    }
    const bool pass = worst_drift <= 1e-10 && worst_negative >= -1e-14;
    report(1, pass, "conservation and positivity, 1e5 steps, 4 model/rate cases",
           "max relative drift " + g(worst_drift) + " <= 1e-10, most negative cell " + g(worst_negative) +
               " >= -1e-14",
           seconds_since(t0));
}

// 2. Doeblin floor, model 1.
void criterion_2() {
    const auto t0 = std::chrono::steady_clock::now();
    const RateModel rate = make_constant_rate(1.0, 1.0);
    const DoeblinReport rep = doeblin_check(ModelKind::age_structured, rate, nullptr, kGrid, 64);
    const double floor = std::exp(-2.0) * (1.0 - 5.0 * kGrid.ds());
    const double secs = seconds_since(t0);
    const bool pass = rep.pass && rep.min_density >= floor && rep.trials >= 64 && secs < 30.0;
    report(2, pass, "Doeblin floor, model 1, " + std::to_string(rep.trials) + " Dirac data to t = 2",
           "min density on (0,1) " + g(rep.min_density) + " >= " + g(floor), secs);
}

// 3. Windowed contraction, 100 seeded pairs.
void criterion_3() {
    const auto t0 = std::chrono::steady_clock::now();
    const RateModel rate = make_constant_rate(1.0, 1.0);
    const ContractionReport rep = contraction_check(ModelKind::age_structured, rate, nullptr, kGrid, 100, 20240607);
    const double bound = (1.0 - 0.135335) + 5.0 * kGrid.ds();
    const bool pass = rep.pass && rep.worst_ratio <= bound && rep.non_expansive;
    report(3, pass, "windowed contraction over t0 = 2, 100 seeded probability pairs",
           "worst TV ratio " + g(rep.worst_ratio) + " <= " + g(bound), seconds_since(t0));
}

// 4 and 9. Nonlinear relaxation and perturbation bound, model 1.
void criteria_4_and_9() {
    const auto t0 = std::chrono::steady_clock::now();
    const RateModel rate = relaxation_rate();
    const TheoryConstants tc = theory_constants(rate, nullptr, ModelKind::age_structured);
    std::printf("      certified L = %.6g; margins:", tc.L);
    for (const auto& m : threshold_margins(tc)) {
        std::printf(" %s %.6g (threshold %.6g)", m.name.c_str(), m.margin(), m.threshold);
    }
    std::printf("\n");

    std::vector<LabeledMeasure> inits;
    for (double s0 : {0.0, 0.75, 1.5, 3.0}) inits.emplace_back("dirac", GridMeasure::dirac(kGrid, s0));
    GridMeasure spread = GridMeasure::from_density(kGrid, [](double s) { return s < 2.0 ? 0.5 : 0.0; });
    inits.emplace_back("uniform[0,2)", spread);

    RelaxationOptions opt;
    opt.horizon = 40.0;
    opt.fit_lo = 2.0;
    opt.fit_hi = 40.0;
    opt.stride = 20;
    opt.tol = 1e-13;
    const RelaxationReport rep = relaxation_experiment(ModelKind::age_structured, rate, nullptr, inits, kGrid, opt);
    const double secs = seconds_since(t0);

    const double lambda_theory = tc.lambda_lin - tc.C_tilde;
    const bool below = tc.L < tc.L_threshold_first && tc.L < tc.L_threshold_rate;
    const bool pass4 = below && std::abs(tc.L - 0.02) < 1e-15 && rep.rate_pass &&
                       rep.min_lambda_fit >= 0.98 * lambda_theory && rep.min_r2 >= 0.99 && secs < 120.0;
    report(4, pass4, "nonlinear relaxation rate, model 1, L = 0.02, 5 initial data, t in [2,40]",
           "min lambda_fit " + g(rep.min_lambda_fit) + " >= 0.98 * " + g(lambda_theory) + ", min r2 " +
               g(rep.min_r2) + " >= 0.99",
           secs);

    const bool pass9 = rep.max_h_ratio <= 1.05 * tc.C_tilde && rep.max_abs_h_integral <= 1e-10;
    report(9, pass9, "perturbation bound on the run of criterion 4",
           "max ||h||/tv " + g(rep.max_h_ratio) + " <= 1.05 * " + g(tc.C_tilde) + ", max |int h| " +
               g(rep.max_abs_h_integral) + " <= 1e-10",
           0.0);
}

// 5. Model 2 with the point-mass kernel reproduces model 1.
void criterion_5() {
    const auto t0 = std::chrono::steady_clock::now();
    const RateModel rate = relaxation_rate();
    const KernelModel delta = make_delta_kernel(kGrid);
    const Dynamics one{ModelKind::age_structured, rate, std::nullopt, false, kDefaultActivityTol};
    const Dynamics two{ModelKind::fatigue, rate, delta, false, kDefaultActivityTol};
    const GridMeasure init = GridMeasure::dirac(kGrid, 0.3);
    SimState a = make_state(one, init);
    SimState b = make_state(two, init);
    double worst = 0.0;
    for (std::size_t step = 0; step < kGrid.steps_for(5.0); ++step) {
        a = advance(one, std::move(a));
        b = advance(two, std::move(b));
        worst = std::max(worst, tv_distance(a.n, b.n));
    }
    const bool pass = worst <= 10.0 * kGrid.ds();
    report(5, pass, "model 2 with the point-mass kernel vs model 1, T = 5",
           "sup_t tv(n2 - n1) " + g(worst) + " <= " + g(10.0 * kGrid.ds()), seconds_since(t0));
}

// 6. Doeblin floor, model 2, truncated uniform kernel.
void criterion_6() {
    const auto t0 = std::chrono::steady_clock::now();
    const RateModel rate = make_constant_rate(1.0, 1.0);
    const KernelModel kernel = make_truncated_uniform_kernel(kGrid, 0.25);
    const DoeblinReport rep = doeblin_check(ModelKind::fatigue, rate, &kernel, kGrid, 64);
    const double floor = kernel.eps() * kernel.delta() * std::exp(-2.0) * (1.0 - 5.0 * kGrid.ds());
    const bool pass = rep.pass && rep.min_density >= floor && std::abs(kernel.eps() - 4.0) < 1e-9;
    report(6, pass, "Doeblin floor, model 2, uniform kernel c = 0.25",
           "eps " + g(kernel.eps()) + ", delta " + g(kernel.delta()) + "; min density on (delta,1) " +
               g(rep.min_density) + " >= " + g(floor),
           seconds_since(t0));
}

// 7. Stationary state for p = 1.
void criterion_7() {
    const auto t0 = std::chrono::steady_clock::now();
    const double tol = 1e-12;
    const RateModel rate = make_constant_rate(1.0, 1.0);
    const Equilibrium eq = stationary_model1(rate, kGrid, tol);
    // Exact cell integrals of e^{-s}, tail e^{-s_max}.
    GridMeasure exact(kGrid);
    for (std::size_t i = 0; i < kGrid.n_cells(); ++i) {
        exact.masses()[i] = std::exp(-kGrid.cell_lo(i)) - std::exp(-kGrid.cell_hi(i));
    }
    exact.tail() = std::exp(-kGrid.s_max());
    const double dist = tv_distance(eq.n_star, exact);
    const SimState next = step_model1(SimState{0.0, eq.n_star, eq.N_star}, rate, tol);
    const double change = tv_distance(next.n, eq.n_star);
    const bool pass = std::abs(eq.N_star - 1.0) <= 1e-3 && dist <= 5.0 * kGrid.ds() && change <= 2.0 * tol;
    report(7, pass, "stationary state for p = 1",
           "N* = " + g(eq.N_star) + ", tv to e^{-s} " + g(dist) + " <= " + g(5.0 * kGrid.ds()) +
               ", one-step change " + g(change) + " <= " + g(2.0 * tol),
           seconds_since(t0));
}

// 8. Stability envelope for two nonlinear runs.
void criterion_8() {
    const auto t0 = std::chrono::steady_clock::now();
    const RateModel rate = relaxation_rate();
    const KernelModel uniform = make_truncated_uniform_kernel(kGrid, 0.25);
    const GridMeasure n1 = GridMeasure::from_density(kGrid, [](double s) { return std::exp(-s); });
    GridMeasure n2 = GridMeasure::from_density(kGrid, [](double s) {
        return std::exp(-s) * (1.0 + 0.3 * std::sin(3.0 * s));
    });
    n2 *= n1.mass() / n2.mass();

    bool pass = true;
    std::string detail;
    for (ModelKind model : {ModelKind::age_structured, ModelKind::fatigue}) {
        const Dynamics dyn{model, rate,
                           model == ModelKind::fatigue ? std::optional<KernelModel>(uniform) : std::nullopt, false,
                           kDefaultActivityTol};
        SimState a = make_state(dyn, n1);
        SimState b = make_state(dyn, n2);
        const double gap0 = tv_distance(a.n, b.n);
        std::size_t step = 0;
        for (double t : {0.5, 1.0, 2.0}) {
            const std::size_t target = kGrid.steps_for(t);
            for (; step < target; ++step) {
                a = advance(dyn, std::move(a));
                b = advance(dyn, std::move(b));
            }
            const double gap = tv_distance(a.n, b.n);
            const double envelope = gap0 * std::exp(4.0 * rate.p_max() * t);
            pass = pass && gap <= envelope;
            detail += std::string(model == ModelKind::age_structured ? "m1" : "m2") + " t=" + g(t) + ": " + g(gap) +
                      " <= " + g(envelope) + "; ";
        }
    }
    report(8, pass, "stability envelope e^{4 p_max t}", detail, seconds_since(t0));
}

// 10. First-order grid convergence at t = 1, each grid against its 4x refinement.
double error_vs_refined(ModelKind model, std::size_t n_cells, const GridMeasure* reuse_fine,
                        GridMeasure* fine_out) {
    const RateModel rate = relaxation_rate();
    auto run = [&](std::size_t cells) {
        const Grid grid(10.0, cells);
        std::optional<KernelModel> kernel;
        if (model == ModelKind::fatigue) kernel = make_truncated_uniform_kernel(grid, 0.25);
        const Dynamics dyn{model, rate, kernel, false, kDefaultActivityTol};
        const GridMeasure init = GridMeasure::from_density(grid, [](double s) {
            return std::exp(-0.5 * (s - 2.0) * (s - 2.0) / 0.25);
        });
        return simulate(dyn, init, 1.0, Observers{1000000, std::nullopt, 0, {}}).final_state.n;
    };
    const GridMeasure coarse = run(n_cells);
    const GridMeasure fine = reuse_fine ? *reuse_fine : run(4 * n_cells);
    if (fine_out) *fine_out = fine;
    return tv_distance(coarse, coarsen(fine, coarse.grid()));
}

void criterion_10() {
    const auto t0 = std::chrono::steady_clock::now();
    bool pass = true;
    std::string detail;
    for (ModelKind model : {ModelKind::age_structured, ModelKind::fatigue}) {
        const double e_h = error_vs_refined(model, 1000, nullptr, nullptr);
        const double e_h2 = error_vs_refined(model, 2000, nullptr, nullptr);
        const double ratio = e_h / e_h2;
        pass = pass && ratio >= 1.7 && ratio <= 2.3;
        detail += std::string(model == ModelKind::age_structured ? "model 1" : "model 2") + ": e(h) " + g(e_h) +
                  ", e(h/2) " + g(e_h2) + ", ratio " + g(ratio) + " in [1.7, 2.3]; ";
    }
    report(10, pass, "order-1 grid convergence at t = 1 (ds = 0.01 and 0.005)", detail, seconds_since(t0));
}

}  // namespace

int main() {
    const std::vector<std::function<void()>> criteria = {criterion_1, criterion_2, criterion_3, criteria_4_and_9,
                                                         criterion_5, criterion_6, criterion_7, criterion_8,
                                                         criterion_10};
    for (const auto& c : criteria) {
        try {
            c();
        } catch (const std::exception& e) {
            std::printf("FAIL criterion raised: %s\n", e.what());
            ++failures;
        }
    }
    std::printf("%s: %d failing criteria\n", failures == 0 ? "ALL PASS" : "SOME FAIL", failures);
    return failures == 0 ? 0 : 1;
}
