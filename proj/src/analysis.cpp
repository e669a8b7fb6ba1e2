#include "eflow/analysis.hpp"

#include "eflow/errors.hpp"
#include "eflow/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace eflow {

namespace {

void require_frozen(const RateModel& rate) {
    if (rate.lipschitz() != 0.0) {
        throw std::invalid_argument("certification of the linear semigroup needs a frozen rate (L = 0)");
    }
}

const KernelModel* kernel_for(ModelKind model, const KernelModel* kernel) {
    if (model == ModelKind::age_structured) return nullptr;
    if (kernel == nullptr) throw ConfigError("model 2 needs a reinjection kernel");
    return kernel;
}

void evolve_linear(GridMeasure& n, const CellRates& rates, const KernelModel* kernel, std::size_t steps) {
    std::vector<double> scratch;
    for (std::size_t k = 0; k < steps; ++k) split_step(n, rates, kernel, scratch);
}

// Uniform double in [0, 1) from the top 53 bits; identical on every platform.
double unit_uniform(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

GridMeasure perturbation_from_rates(const CellRates& now, const CellRates& star, const KernelModel* kernel,
                                    const GridMeasure& n) {
    const std::size_t size = n.size();
    const auto m = n.masses();
    std::vector<double> excess(size);
    for (std::size_t i = 0; i < size; ++i) excess[i] = (now.cells[i] - star.cells[i]) * m[i];
    const double excess_tail = (now.tail - star.tail) * n.tail();

    GridMeasure h(n.grid());
    auto hm = h.masses();
    for (std::size_t i = 0; i < size; ++i) hm[i] = -excess[i];
    h.tail() = -excess_tail;
    if (kernel == nullptr) {
        double total = excess_tail;
        for (double e : excess) total += e;
        hm[0] += total;
    } else {
        kernel->redistribute(excess, excess_tail, hm);
    }
    return h;
}

double truncation_horizon(const GridMeasure& n) {
    if (n.tail() != 0.0) return 0.0;
    const auto m = n.masses();
    for (std::size_t i = m.size(); i-- > 0;) {
        if (m[i] != 0.0) return n.grid().s_max() - n.grid().cell_hi(i);
    }
    return n.grid().s_max();
}

}  // namespace

DoeblinReport doeblin_check(ModelKind model, const RateModel& frozen_rate, const KernelModel* kernel,
                            const Grid& grid, std::size_t n_trials, unsigned threads, double bound_scale) {
    require_frozen(frozen_rate);
    kernel = kernel_for(model, kernel);
    const double s_star = frozen_rate.s_star();
    if (s_star / grid.ds() < 20.0 - 1e-9) {
        throw ConfigError("grid too coarse for Doeblin certification: " + std::to_string(s_star / grid.ds()) +
                          " cells per s_star, need at least 20");
    }
    if (grid.s_max() < 2.0 * s_star) throw ConfigError("grid must cover [0, 2 s_star]");
    if (n_trials < 2) throw ConfigError("need at least 2 Doeblin trials");

    const TheoryConstants tc = theory_constants(frozen_rate, kernel, model);
    DoeblinReport rep;
    rep.model = model;
    rep.t0 = tc.t0;
    rep.hi = s_star;
    rep.bound_scale = bound_scale;
    if (model == ModelKind::age_structured || tc.point_mass_kernel) {
        rep.lo = 0.0;
        rep.bound = tc.beta;
    } else {
        rep.lo = tc.delta;
        rep.bound = tc.eps * tc.delta * tc.beta;
    }
    rep.floor = rep.bound * (1.0 - scheme_tolerance(grid, tc.p_max)) * bound_scale;

    std::vector<std::size_t> cells;
    const double slack = 1e-9 * grid.ds();
    for (std::size_t i = 0; i < grid.n_cells(); ++i) {
        if (grid.cell_lo(i) >= rep.lo - slack && grid.cell_hi(i) <= rep.hi + slack) cells.push_back(i);
    }
    if (cells.empty()) throw ConfigError("Doeblin window contains no whole cell");
    rep.window_cells = cells.size();

    std::vector<double> starts;
    for (std::size_t k = 0; k < n_trials; ++k) {
        starts.push_back(grid.s_max() * static_cast<double>(k) / static_cast<double>(n_trials - 1));
    }
    for (double s0 : {0.0, s_star, 2.0 * s_star, grid.s_max()}) starts.push_back(s0);
    rep.trials = starts.size();

    const CellRates rates = cell_rates(frozen_rate, grid, 0.0);
    const std::size_t steps = grid.steps_for(tc.t0);
    std::vector<double> minima(starts.size());
    parallel_for(starts.size(), threads, [&](std::size_t k) {
        GridMeasure n = GridMeasure::dirac(grid, starts[k]);
        evolve_linear(n, rates, kernel, steps);
        double lowest = std::numeric_limits<double>::infinity();
        for (std::size_t i : cells) lowest = std::min(lowest, n.masses()[i] / grid.ds());
        minima[k] = lowest;
    });

    const auto worst = std::min_element(minima.begin(), minima.end());
    const std::size_t w = static_cast<std::size_t>(worst - minima.begin());
    rep.min_density = *worst;
    rep.worst_s0 = starts[w];
    rep.worst_initial = "dirac(" + std::to_string(starts[w]) + ")";
    rep.pass = rep.min_density >= rep.floor;
    return rep;
}

GridMeasure random_dirac_mixture(const Grid& grid, std::mt19937_64& rng) {
    const std::size_t atoms = 1 + static_cast<std::size_t>(rng() % 8);
    GridMeasure n(grid);
    double total = 0.0;
    for (std::size_t a = 0; a < atoms; ++a) {
        const double s = unit_uniform(rng) * grid.s_max();
        const double w = 1.0 - unit_uniform(rng);  // (0, 1]
        n.masses()[grid.cell_of(s)] += w;
        total += w;
    }
    n *= 1.0 / total;
    return n;
}

ContractionReport contraction_check(ModelKind model, const RateModel& frozen_rate, const KernelModel* kernel,
                                    const Grid& grid, std::size_t n_pairs, std::uint64_t seed, unsigned threads) {
    require_frozen(frozen_rate);
    kernel = kernel_for(model, kernel);
    const TheoryConstants tc = theory_constants(frozen_rate, kernel, model);

    ContractionReport rep;
    rep.pairs = n_pairs;
    rep.seed = seed;
    rep.alpha = tc.alpha;
    rep.bound = (1.0 - tc.alpha) + scheme_tolerance(grid, tc.p_max);

    // Draw every pair up front so results do not depend on the thread count.
    std::mt19937_64 rng(seed);
    std::vector<GridMeasure> diffs;
    diffs.reserve(n_pairs);
    for (std::size_t k = 0; k < n_pairs; ++k) {
        GridMeasure a = random_dirac_mixture(grid, rng);
        GridMeasure b = random_dirac_mixture(grid, rng);
        diffs.push_back(a - b);
    }

    const CellRates rates = cell_rates(frozen_rate, grid, 0.0);
    const std::size_t steps = grid.steps_for(tc.t0);
    std::vector<double> ratios(n_pairs, -1.0);
    parallel_for(n_pairs, threads, [&](std::size_t k) {
        GridMeasure d = diffs[k];
        const double before = d.tv();
        if (before == 0.0) return;
        evolve_linear(d, rates, kernel, steps);
        ratios[k] = d.tv() / before;
    });

    for (std::size_t k = 0; k < n_pairs; ++k) {
        if (ratios[k] < 0.0) {
            ++rep.skipped;
            continue;
        }
        if (ratios[k] > rep.worst_ratio) {
            rep.worst_ratio = ratios[k];
            rep.worst_pair = k;
        }
        if (ratios[k] > 1.0 + 1e-12) rep.non_expansive = false;
    }
    rep.pass = rep.worst_ratio <= rep.bound && rep.non_expansive;
    return rep;
}

RateFit fit_decay_rate(std::span<const double> t, std::span<const double> d, double t_lo, double t_hi,
                       double noise_floor) {
    if (t.size() != d.size()) throw std::invalid_argument("time and value series differ in length");
    RateFit fit;
    fit.t_lo = t_lo;
    fit.t_hi = t_hi;
    std::vector<double> xs;
    std::vector<double> ys;
    for (std::size_t k = 0; k < t.size(); ++k) {
        if (t[k] < t_lo || t[k] > t_hi) continue;
        if (!(d[k] > noise_floor)) {
            fit.window_shrunk = true;
            break;
        }
        xs.push_back(t[k]);
        ys.push_back(std::log(d[k]));
    }
    if (xs.size() < 5) {
        throw NumericalFailure("decay fit needs at least 5 samples above the noise floor in [" +
                               std::to_string(t_lo) + ", " + std::to_string(t_hi) + "], found " +
                               std::to_string(xs.size()));
    }
    if (fit.window_shrunk) fit.t_hi = xs.back();
    fit.samples = xs.size();

    const double count = static_cast<double>(xs.size());
    double mx = 0.0;
    double my = 0.0;
    for (std::size_t k = 0; k < xs.size(); ++k) {
        mx += xs[k];
        my += ys[k];
    }
    mx /= count;
    my /= count;
    double sxx = 0.0;
    double sxy = 0.0;
    double syy = 0.0;
    for (std::size_t k = 0; k < xs.size(); ++k) {
        sxx += (xs[k] - mx) * (xs[k] - mx);
        sxy += (xs[k] - mx) * (ys[k] - my);
        syy += (ys[k] - my) * (ys[k] - my);
    }
    if (sxx == 0.0) throw NumericalFailure("decay fit needs distinct sample times");
    const double slope = sxy / sxx;
    fit.lambda_fit = -slope;
    fit.intercept = my - slope * mx;
    double ss_res = 0.0;
    for (std::size_t k = 0; k < xs.size(); ++k) {
        const double r = ys[k] - (fit.intercept + slope * xs[k]);
        ss_res += r * r;
    }
    fit.r2 = syy > 0.0 ? 1.0 - ss_res / syy : 1.0;
    return fit;
}

GridMeasure perturbation_term(const RateModel& rate, const KernelModel* kernel, const SimState& state,
                              double N_star) {
    const Grid& grid = state.n.grid();
    return perturbation_from_rates(cell_rates(rate, grid, state.N), cell_rates(rate, grid, N_star), kernel,
                                   state.n);
}

RelaxationReport relaxation_experiment(ModelKind model, const RateModel& rate, const KernelModel* kernel,
                                       const std::vector<LabeledMeasure>& inits, const Grid& grid,
                                       const RelaxationOptions& options) {
    kernel = kernel_for(model, kernel);
    if (inits.empty()) throw ConfigError("relaxation experiment needs at least one initial datum");

    const TheoryConstants constants = theory_constants(rate, kernel, model);
    require_weak_connectivity(constants);
    RelaxationReport rep{constants,
                         model == ModelKind::age_structured ? stationary_model1(rate, grid, options.tol)
                                                            : stationary_model2(rate, *kernel, options.tol),
                         {},
                         0.0,
                         0.0,
                         0.0,
                         0.0,
                         0.0,
                         false,
                         false,
                         false};
    rep.lambda_theory = rep.constants.lambda_nl;
    const GridMeasure& n_star = rep.equilibrium.n_star;
    const double N_star = rep.equilibrium.N_star;
    const CellRates star_rates = cell_rates(rate, grid, N_star);

    Dynamics dyn{model, rate, kernel != nullptr ? std::optional<KernelModel>(*kernel) : std::nullopt, false,
                 options.tol};

    rep.runs.resize(inits.size());
    parallel_for(inits.size(), options.threads, [&](std::size_t k) {
        RelaxationRun& run = rep.runs[k];
        run.label = inits[k].first;
        GridMeasure init = inits[k].second;
        if (init.mass() > 0.0) init *= 1.0 / init.mass();
        run.truncation_horizon = truncation_horizon(init);

        Observers obs;
        obs.stride = options.stride;
        obs.reference = n_star;
        obs.on_step = [&](const SimState& s, std::size_t) {
            const GridMeasure h = perturbation_from_rates(cell_rates(rate, grid, s.N), star_rates, kernel, s.n);
            double integral = h.tail();
            for (double v : h.masses()) integral += v;
            run.max_abs_h_integral = std::max(run.max_abs_h_integral, std::abs(integral));
            const double dist = tv_distance(s.n, n_star);
            if (dist >= options.h_min_tv) run.max_h_ratio = std::max(run.max_h_ratio, h.tv() / dist);
        };
        const Trajectory traj = simulate(dyn, init, options.horizon, obs);
        for (const auto& sample : traj.samples) {
            run.t.push_back(sample.t);
            run.tv.push_back(sample.tv_to_ref.value_or(0.0));
        }
        try {
            const double fit_hi = std::min(options.fit_hi, run.truncation_horizon - 0.5 * grid.ds());
            run.fit = fit_decay_rate(run.t, run.tv, options.fit_lo, fit_hi, options.noise_floor);
            run.fit_ok = true;
        } catch (const NumericalFailure&) {
            run.fit_ok = false;
        }
        run.fit.lambda_theory = rep.lambda_theory;
    });

    rep.rate_pass = true;
    rep.min_lambda_fit = std::numeric_limits<double>::infinity();
    rep.min_r2 = 1.0;
    for (const auto& run : rep.runs) {
        if (!run.fit_ok) {
            rep.rate_pass = false;
        } else {
            rep.min_lambda_fit = std::min(rep.min_lambda_fit, run.fit.lambda_fit);
            rep.min_r2 = std::min(rep.min_r2, run.fit.r2);
            if (run.fit.lambda_fit < options.rate_factor * rep.lambda_theory || run.fit.r2 < options.r2_min) {
                rep.rate_pass = false;
            }
        }
        rep.max_h_ratio = std::max(rep.max_h_ratio, run.max_h_ratio);
        rep.max_abs_h_integral = std::max(rep.max_abs_h_integral, run.max_abs_h_integral);
    }
    rep.h_pass = rep.max_h_ratio <= options.h_factor * rep.constants.C_tilde;
    rep.integral_pass = rep.max_abs_h_integral <= options.integral_tol * rep.constants.p_max;
    return rep;
}

}  // namespace eflow
