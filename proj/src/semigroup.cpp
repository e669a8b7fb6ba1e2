#include "eflow/semigroup.hpp"

#include "eflow/errors.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>

namespace eflow {

namespace {

std::string fmt17(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void require_kernel_grid(const KernelModel& kernel, const GridMeasure& n) {
    if (!(kernel.grid() == n.grid())) {
        throw std::invalid_argument("kernel grid does not match the measure grid");
    }
}

SimState nonlinear_step(SimState state, const RateModel& rate, const KernelModel* kernel, double tol) {
    const CellRates rates = cell_rates(rate, state.n.grid(), state.N);
    std::vector<double> scratch;
    split_step(state.n, rates, kernel, scratch);
    state.t += state.n.grid().ds();
    state.N = solve_activity(rate, state.n, state.N, tol).N;
    return state;
}

}  // namespace

double activity_map(const RateModel& rate, const GridMeasure& n, double activity) {
    const Grid& g = n.grid();
    const auto m = n.masses();
    double total = 0.0;
    for (std::size_t i = 0; i < m.size(); ++i) {
        if (m[i] != 0.0) total += rate(activity, g.midpoint(i)) * m[i];
    }
    if (n.tail() != 0.0) total += rate(activity, g.s_max()) * n.tail();
    return total;
}

double activity_of(const CellRates& rates, const GridMeasure& n) {
    const auto m = n.masses();
    double total = 0.0;
    for (std::size_t i = 0; i < m.size(); ++i) total += rates.cells[i] * m[i];
    return total + rates.tail * n.tail();
}

ActivitySolution solve_activity(const RateModel& rate, const GridMeasure& n, double guess, double tol) {
    const double ratio = rate.lipschitz() * n.tv();
    if (ratio >= 1.0) {
        throw ThresholdViolation("activity contraction L*||n||_TV < 1", ratio, 1.0);
    }
    if (rate.lipschitz() == 0.0) {
        return {activity_map(rate, n, guess), 1, 0.0};
    }
    double current = guess;
    for (int it = 1; it <= kMaxActivityIterations; ++it) {
        const double next = activity_map(rate, n, current);
        const double residual = std::abs(next - current);
        if (!std::isfinite(next)) break;
        if (residual <= tol) return {next, it, residual};
        current = next;
    }
    throw NumericalFailure("activity fixed point did not converge in " +
                           std::to_string(kMaxActivityIterations) + " iterations");
}

double split_step(GridMeasure& n, const CellRates& rates, const KernelModel* kernel,
                  std::vector<double>& scratch) {
    const double ds = n.grid().ds();
    auto m = n.masses();
    const std::size_t size = m.size();
    if (rates.cells.size() != size) throw std::invalid_argument("rate vector does not match the grid");

    // Decay with the exact survival factor; scratch holds the fired mass.
    scratch.resize(size);
    for (std::size_t i = 0; i < size; ++i) {
        const double fired = m[i] * -std::expm1(-rates.cells[i] * ds);
        scratch[i] = fired;
        m[i] -= fired;
    }
    const double tail_fired = n.tail() * -std::expm1(-rates.tail * ds);

    // Transport by exactly one cell.
    n.tail() = (n.tail() - tail_fired) + m[size - 1];
    for (std::size_t i = size - 1; i > 0; --i) m[i] = m[i - 1];
    m[0] = 0.0;

    // Reinjection.
    double total = 0.0;
    for (double f : scratch) total += f;
    total += tail_fired;
    if (kernel == nullptr) {
        m[0] += total;
    } else {
        kernel->redistribute(scratch, tail_fired, m);
    }
    return total;
}

SimState step_model1(SimState state, const RateModel& rate, double tol) {
    return nonlinear_step(std::move(state), rate, nullptr, tol);
}

SimState step_model2(SimState state, const RateModel& rate, const KernelModel& kernel, double tol) {
    require_kernel_grid(kernel, state.n);
    return nonlinear_step(std::move(state), rate, &kernel, tol);
}

SimState step_linear(SimState state, const RateModel& rate, const KernelModel* kernel) {
    if (rate.lipschitz() != 0.0) {
        throw std::invalid_argument("step_linear needs an activity-independent (frozen) rate");
    }
    const CellRates rates = cell_rates(rate, state.n.grid(), 0.0);
    return step_linear(std::move(state), rates, kernel);
}

SimState step_linear(SimState state, const CellRates& rates, const KernelModel* kernel) {
    if (kernel != nullptr) require_kernel_grid(*kernel, state.n);
    std::vector<double> scratch;
    split_step(state.n, rates, kernel, scratch);
    state.t += state.n.grid().ds();
    state.N = activity_of(rates, state.n);
    return state;
}

void Dynamics::check(const Grid& grid) const {
    if (model == ModelKind::fatigue) {
        if (!kernel) throw std::invalid_argument("model 2 needs a reinjection kernel");
        if (!(kernel->grid() == grid)) throw std::invalid_argument("kernel grid does not match the measure grid");
    }
    if (linear && rate.lipschitz() != 0.0) {
        throw std::invalid_argument("linear dynamics need an activity-independent (frozen) rate");
    }
}

SimState make_state(const Dynamics& dyn, GridMeasure n, double t) {
    dyn.check(n.grid());
    double activity = 0.0;
    if (dyn.linear) {
        activity = activity_of(cell_rates(dyn.rate, n.grid(), 0.0), n);
    } else {
        activity = solve_activity(dyn.rate, n, dyn.rate.p_max() * n.mass(), dyn.activity_tol).N;
    }
    return SimState{t, std::move(n), activity};
}

SimState advance(const Dynamics& dyn, SimState state) {
    const KernelModel* kernel = dyn.model == ModelKind::fatigue ? dyn.kernel_ptr() : nullptr;
    if (dyn.linear) return step_linear(std::move(state), dyn.rate, kernel);
    return nonlinear_step(std::move(state), dyn.rate, kernel, dyn.activity_tol);
}

Trajectory simulate(const Dynamics& dyn, const GridMeasure& init, double horizon, const Observers& observers) {
    const Grid& grid = init.grid();
    dyn.check(grid);
    if (observers.stride == 0) throw std::invalid_argument("observer stride must be positive");
    if (observers.reference && !(observers.reference->grid() == grid)) {
        throw std::invalid_argument("reference measure lives on a different grid");
    }
    if (!dyn.linear && !init.is_nonnegative()) {
        throw std::invalid_argument("nonlinear dynamics need a nonnegative initial measure");
    }
    const std::size_t steps = grid.steps_for(horizon);
    const KernelModel* kernel = dyn.model == ModelKind::fatigue ? dyn.kernel_ptr() : nullptr;

    std::vector<TrajectorySample> samples;
    std::vector<SimState> snapshots;
    samples.reserve(steps / observers.stride + 1);

    auto record = [&](const SimState& s, std::size_t step) {
        if (step % observers.stride == 0) {
            TrajectorySample sample{s.t, s.n.mass(), s.N, std::nullopt};
            if (observers.reference) sample.tv_to_ref = tv_distance(s.n, *observers.reference);
            samples.push_back(sample);
        }
        if (observers.snapshot_stride != 0 && step % observers.snapshot_stride == 0) {
            snapshots.push_back(s);
        }
        if (observers.on_step) observers.on_step(s, step);
    };

    SimState state = make_state(dyn, init);
    record(state, 0);

    if (dyn.linear) {
        // Rates are fixed along a linear trajectory.
        const CellRates rates = cell_rates(dyn.rate, grid, 0.0);
        std::vector<double> scratch;
        for (std::size_t step = 1; step <= steps; ++step) {
            split_step(state.n, rates, kernel, scratch);
            state.t = static_cast<double>(step) * grid.ds();
            state.N = activity_of(rates, state.n);
            record(state, step);
        }
    } else {
        for (std::size_t step = 1; step <= steps; ++step) {
            state = nonlinear_step(std::move(state), dyn.rate, kernel, dyn.activity_tol);
            state.t = static_cast<double>(step) * grid.ds();
            record(state, step);
        }
    }
    return Trajectory{std::move(samples), std::move(snapshots), std::move(state)};
}

void write_trajectory_csv(std::ostream& os, const Trajectory& traj) {
    os << "t,mass,N,tv_to_ref\n";
    for (const auto& s : traj.samples) {
        os << fmt17(s.t) << ',' << fmt17(s.mass) << ',' << fmt17(s.N) << ',';
        if (s.tv_to_ref) os << fmt17(*s.tv_to_ref);
        os << '\n';
    }
}

}  // namespace eflow
