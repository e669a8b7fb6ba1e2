#include "eflow/equilibria.hpp"

#include "eflow/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace eflow {

namespace {

constexpr int kMaxOuterIterations = 10000;

void require_stationary_threshold(const TheoryConstants& tc) {
    if (!(tc.L < tc.L_threshold_stationary)) {
        throw ThresholdViolation("stationary-state contraction L < threshold", tc.L, tc.L_threshold_stationary);
    }
}

// A stationary state must reproduce itself under one step; 2 tol absorbs the
// activity tolerance carried into the step.
void require_small_residual(double residual, double tol, const char* which) {
    if (!(residual <= 2.0 * tol)) {
        throw NumericalFailure(std::string(which) + ": stationary residual " + std::to_string(residual) +
                               " exceeds 2*tol");
    }
}

}  // namespace

TheoryConstants theory_constants(const RateModel& rate, const KernelModel* kernel, ModelKind model) {
    if (model == ModelKind::fatigue && kernel == nullptr) {
        throw ConfigError("theory constants for model 2 need a kernel");
    }
    TheoryConstants tc;
    tc.model = model;
    tc.point_mass_kernel = model == ModelKind::fatigue && kernel->is_point_mass_at_zero();
    tc.p_min = rate.p_min();
    tc.p_max = rate.p_max();
    tc.s_star = rate.s_star();
    tc.L = rate.lipschitz();
    tc.t0 = 2.0 * tc.s_star;
    if (tc.s_star <= 0.0) throw ConfigError("s_star must be positive");

    const double p_min = tc.p_min;
    const double p_max = tc.p_max;
    const double s = tc.s_star;
    tc.beta = p_min * std::exp(-2.0 * p_max * s);

    const double growth = std::exp(4.0 * p_max * s);
    if (model == ModelKind::age_structured || tc.point_mass_kernel) {
        tc.alpha = s * tc.beta;
        const double sp = s * p_min;
        tc.L_threshold_first = p_max > 0.0 ? p_min * p_min / (p_max * p_max * (sp * (sp + 2.0) + 2.0)) : 0.0;
        // 1 / (p_max^2 (s^2/2 + s/p_min + 1/p_min^2)), written without dividing by p_min.
        tc.L_threshold_stationary =
            p_max > 0.0 ? p_min * p_min / (p_max * p_max * (0.5 * sp * sp + sp + 1.0)) : 0.0;
    } else {
        tc.eps = kernel->eps();
        tc.delta = kernel->delta();
        tc.alpha = tc.eps * tc.delta * (s - tc.delta) * tc.beta;
        const double a = p_min * tc.alpha;
        tc.L_threshold_first = a > 0.0 ? a / (a + p_max * growth) : 0.0;
        tc.L_threshold_stationary = tc.L_threshold_first;
    }
    if (tc.point_mass_kernel) {
        tc.eps = kernel->eps();
        tc.delta = kernel->delta();
    }

    const double log_gap = -std::log1p(-tc.alpha);  // -log(1 - alpha) >= 0
    tc.C = 1.0 / (1.0 - tc.alpha);
    tc.lambda_lin = log_gap / (2.0 * s);
    tc.C_tilde = tc.L < 1.0 ? 2.0 * p_max * tc.L / (1.0 - tc.L) : std::numeric_limits<double>::infinity();
    tc.lambda_nl = tc.lambda_lin - tc.C_tilde;
    tc.L_threshold_rate = log_gap > 0.0 ? log_gap / (log_gap + 4.0 * p_max * s) : 0.0;
    tc.L_threshold = std::min(tc.L_threshold_first, tc.L_threshold_rate);
    tc.upsilon_factor = tc.alpha > 0.0 && p_min > 0.0
                            ? tc.L * (1.0 + growth * p_max / (tc.alpha * p_min))
                            : std::numeric_limits<double>::infinity();
    return tc;
}

std::vector<ThresholdMargin> threshold_margins(const TheoryConstants& tc) {
    return {
        {"weak_connectivity_first", tc.L, tc.L_threshold_first},
        {"weak_connectivity_rate", tc.L, tc.L_threshold_rate},
        {"stationary_uniqueness", tc.L, tc.L_threshold_stationary},
    };
}

void require_weak_connectivity(const TheoryConstants& tc) {
    for (const auto& m : threshold_margins(tc)) {
        if (!m.satisfied()) throw ThresholdViolation(m.name + ": L < threshold", m.L, m.threshold);
    }
}

GridMeasure model1_profile(const RateModel& rate, const Grid& grid, double activity) {
    const CellRates r = cell_rates(rate, grid, activity);
    const double ds = grid.ds();
    const std::size_t n = grid.n_cells();
    std::vector<double> m(n);
    m[0] = 1.0;
    for (std::size_t i = 0; i + 1 < n; ++i) m[i + 1] = m[i] * std::exp(-r.cells[i] * ds);
    const double tail_loss = -std::expm1(-r.tail * ds);
    if (!(tail_loss > 0.0)) {
        throw NumericalFailure("zero firing rate at s_max: no stationary probability");
    }
    const double tail = m[n - 1] * std::exp(-r.cells[n - 1] * ds) / tail_loss;
    double total = tail;
    for (double v : m) total += v;
    for (double& v : m) v /= total;
    GridMeasure out(grid, std::move(m), tail / total);
    out *= 1.0 / out.mass();
    return out;
}

Equilibrium stationary_model1(const RateModel& rate, const Grid& grid, double tol) {
    const TheoryConstants tc = theory_constants(rate, nullptr, ModelKind::age_structured);
    require_stationary_threshold(tc);

    double activity = 0.0;
    int iterations = 0;
    bool converged = false;
    while (iterations < kMaxOuterIterations) {
        ++iterations;
        const GridMeasure profile = model1_profile(rate, grid, activity);
        const double next = activity_map(rate, profile, activity);
        const double step = std::abs(next - activity);
        activity = next;
        if (tc.L == 0.0 || step <= tol) {
            converged = true;
            break;
        }
    }
    if (!converged) {
        throw NumericalFailure("model-1 stationary fixed point did not converge in " +
                               std::to_string(kMaxOuterIterations) + " iterations");
    }

    Equilibrium eq{model1_profile(rate, grid, activity), 0.0, 0.0, iterations};
    eq.N_star = solve_activity(rate, eq.n_star, activity, tol).N;
    const SimState next = step_model1(SimState{0.0, eq.n_star, eq.N_star}, rate, tol);
    eq.residual = tv_distance(next.n, eq.n_star);
    require_small_residual(eq.residual, tol, "model 1");
    return eq;
}

GridMeasure stationary_linear_model2(const RateModel& frozen_rate, const KernelModel& kernel,
                                     const LinearStationaryOptions& options) {
    if (frozen_rate.lipschitz() != 0.0) {
        throw std::invalid_argument("stationary_linear_model2 needs a frozen rate");
    }
    const Grid& grid = kernel.grid();
    const TheoryConstants tc = theory_constants(frozen_rate, &kernel, ModelKind::fatigue);
    const double alpha = tc.alpha;
    const double tol = options.tol;
    // With a window contraction factor 1 - alpha, a window change d bounds
    // the distance to the limit by d (1 - alpha) / alpha.
    const double to_limit = alpha > 0.0 ? (1.0 - alpha) / alpha : 1.0;

    std::size_t max_windows = options.max_windows;
    if (max_windows == 0) {
        max_windows = 100000;
        if (alpha > 0.0) {
            const double needed = std::log(tol / (4.0 * to_limit)) / std::log1p(-alpha);
            max_windows = static_cast<std::size_t>(std::min(1e5, std::ceil(std::max(needed, 0.0)))) + 100;
        }
    }

    GridMeasure n = options.initial ? *options.initial : GridMeasure::dirac(grid, 0.0);
    if (!(n.grid() == grid)) throw std::invalid_argument("initial measure lives on a different grid");
    if (!n.is_nonnegative() || !(n.mass() > 0.0)) {
        throw std::invalid_argument("initial measure must be a nonnegative measure with positive mass");
    }
    n *= 1.0 / n.mass();

    const CellRates rates = cell_rates(frozen_rate, grid, 0.0);
    const std::size_t window = std::max<std::size_t>(1, grid.steps_for(tc.t0));
    std::vector<double> scratch;
    for (std::size_t w = 0; w < max_windows; ++w) {
        const GridMeasure before = n;
        for (std::size_t k = 0; k < window; ++k) split_step(n, rates, &kernel, scratch);
        const double change = tv_distance(n, before);
        if (change * to_limit > tol) continue;
        GridMeasure probe = n;
        split_step(probe, rates, &kernel, scratch);
        if (tv_distance(probe, n) <= tol) {
            n *= 1.0 / n.mass();
            return n;
        }
    }
    throw NumericalFailure("linear model-2 stationary state not reached within " + std::to_string(max_windows) +
                           " windows of length 2 s_star");
}

double upsilon(const RateModel& rate, const KernelModel& kernel, double activity, double tol) {
    const RateModel frozen = rate.frozen_at(activity);
    const GridMeasure n = stationary_linear_model2(frozen, kernel, {tol, 0, std::nullopt});
    return activity_of(cell_rates(rate, kernel.grid(), activity), n);
}

Equilibrium stationary_model2(const RateModel& rate, const KernelModel& kernel, double tol) {
    const TheoryConstants tc = theory_constants(rate, &kernel, ModelKind::fatigue);
    require_stationary_threshold(tc);
    const Grid& grid = kernel.grid();

    double activity = 0.0;
    std::optional<GridMeasure> n;
    int iterations = 0;
    bool converged = false;
    while (iterations < kMaxOuterIterations) {
        ++iterations;
        n = stationary_linear_model2(rate.frozen_at(activity), kernel, {tol, 0, n});
        const double next = activity_of(cell_rates(rate, grid, activity), *n);
        const double step = std::abs(next - activity);
        if (tc.L == 0.0 || step <= tol) {
            converged = true;
            break;
        }
        activity = next;
    }
    if (!converged) {
        throw NumericalFailure("model-2 stationary fixed point did not converge in " +
                               std::to_string(kMaxOuterIterations) + " iterations");
    }

    Equilibrium eq{std::move(*n), 0.0, 0.0, iterations};
    eq.N_star = solve_activity(rate, eq.n_star, activity, tol).N;
    const SimState next = step_model2(SimState{0.0, eq.n_star, eq.N_star}, rate, kernel, tol);
    eq.residual = tv_distance(next.n, eq.n_star);
    require_small_residual(eq.residual, tol, "model 2");
    return eq;
}

}  // namespace eflow
