#pragma once

#include "eflow/grid_measure.hpp"
#include "eflow/models.hpp"

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace eflow {

/// Model 1: age structure with reinjection at s = 0.
/// Model 2: generic state with reinjection through a kernel (fatigue).
enum class ModelKind { age_structured = 1, fatigue = 2 };

inline constexpr double kDefaultActivityTol = 1e-12;
inline constexpr int kMaxActivityIterations = 10000;

struct SimState {
    double t = 0.0;
    GridMeasure n;
    double N = 0.0;
};

struct ActivitySolution {
    double N = 0.0;
    int iterations = 0;
    double residual = 0.0;
};

/// Phi(N) = sum_i p(N, s_i) m_i + p(N, s_max) tail.
[[nodiscard]] double activity_map(const RateModel& rate, const GridMeasure& n, double activity);

/// Explicit activity for frozen per-cell rates.
[[nodiscard]] double activity_of(const CellRates& rates, const GridMeasure& n);

/// Fixed point N = Phi(N) by Picard iteration from `guess`. The map
/// contracts with ratio L * ||n||_TV; throws ThresholdViolation when that
/// ratio is >= 1 and NumericalFailure after kMaxActivityIterations.
[[nodiscard]] ActivitySolution solve_activity(const RateModel& rate, const GridMeasure& n, double guess,
                                              double tol = kDefaultActivityTol);

/// One conservative split step of length ds with frozen rates:
/// exact exponential decay, transport by one cell, reinjection of the fired
/// mass (cell 0 when `kernel` is null, otherwise through the kernel columns).
/// Returns the total fired mass.
double split_step(GridMeasure& n, const CellRates& rates, const KernelModel* kernel,
                  std::vector<double>& scratch);

[[nodiscard]] SimState step_model1(SimState state, const RateModel& rate, double tol = kDefaultActivityTol);
[[nodiscard]] SimState step_model2(SimState state, const RateModel& rate, const KernelModel& kernel,
                                   double tol = kDefaultActivityTol);

/// Frozen-activity step; `rate` must have L = 0 (see RateModel::frozen_at).
/// Accepts signed measures. `kernel == nullptr` selects model 1.
[[nodiscard]] SimState step_linear(SimState state, const RateModel& rate, const KernelModel* kernel = nullptr);
[[nodiscard]] SimState step_linear(SimState state, const CellRates& rates, const KernelModel* kernel = nullptr);

/// Bundles what a trajectory needs: which model, the rate, the kernel for
/// model 2, and whether activity is frozen (linear path).
struct Dynamics {
    ModelKind model = ModelKind::age_structured;
    RateModel rate;
    std::optional<KernelModel> kernel;
    bool linear = false;
    double activity_tol = kDefaultActivityTol;

    [[nodiscard]] const KernelModel* kernel_ptr() const noexcept { return kernel ? &*kernel : nullptr; }
    void check(const Grid& grid) const;
};

/// State at time t with N solved self-consistently (explicit sum when linear).
[[nodiscard]] SimState make_state(const Dynamics& dyn, GridMeasure n, double t = 0.0);

[[nodiscard]] SimState advance(const Dynamics& dyn, SimState state);

struct TrajectorySample {
    double t = 0.0;
    double mass = 0.0;
    double N = 0.0;
    std::optional<double> tv_to_ref;
};

struct Observers {
    std::size_t stride = 1;
    std::optional<GridMeasure> reference;
    std::size_t snapshot_stride = 0;  // 0 disables snapshots
    std::function<void(const SimState&, std::size_t step)> on_step;
};

struct Trajectory {
    std::vector<TrajectorySample> samples;
    std::vector<SimState> snapshots;
    SimState final_state;
};

/// ceil(T / ds) steps from `init`; samples every `stride` steps (step 0
/// included), so the sample count is steps / stride + 1.
[[nodiscard]] Trajectory simulate(const Dynamics& dyn, const GridMeasure& init, double horizon,
                                  const Observers& observers = {});

/// CSV with header `t,mass,N,tv_to_ref`; tv_to_ref is empty without a reference.
void write_trajectory_csv(std::ostream& os, const Trajectory& traj);

}  // namespace eflow
