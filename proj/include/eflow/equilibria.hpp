#pragma once

#include "eflow/grid_measure.hpp"
#include "eflow/models.hpp"
#include "eflow/semigroup.hpp"

#include <optional>
#include <string>
#include <vector>

namespace eflow {

struct Equilibrium {
    GridMeasure n_star;
    double N_star = 0.0;
    double residual = 0.0;  // tv(step(n_star) - n_star)
    int iterations = 0;
};

/// Explicit constants of the weak-connectivity theory for one model.
/// For model 2 with the point-mass kernel the model-1 constants are used.
struct TheoryConstants {
    ModelKind model = ModelKind::age_structured;
    bool point_mass_kernel = false;
    double p_min = 0.0;
    double p_max = 0.0;
    double s_star = 0.0;
    double L = 0.0;
    double eps = 0.0;    // model 2 only
    double delta = 0.0;  // model 2 only
    double t0 = 0.0;     // Doeblin window, 2 s_star

    double beta = 0.0;
    double alpha = 0.0;
    double C = 0.0;
    double lambda_lin = 0.0;
    double C_tilde = 0.0;
    double lambda_nl = 0.0;

    double L_threshold_first = 0.0;       // first term of the minimum
    double L_threshold_rate = 0.0;        // equivalent to lambda_nl > 0
    double L_threshold = 0.0;             // min of the two
    double L_threshold_stationary = 0.0;  // existence/uniqueness of n_star

    /// Lipschitz factor of the model-2 map N -> Upsilon(N):
    /// L (1 + e^{4 p_max s_star} p_max / (alpha p_min)).
    double upsilon_factor = 0.0;
};

[[nodiscard]] TheoryConstants theory_constants(const RateModel& rate, const KernelModel* kernel, ModelKind model);

struct ThresholdMargin {
    std::string name;
    double L = 0.0;
    double threshold = 0.0;
    [[nodiscard]] double margin() const noexcept { return threshold - L; }
    [[nodiscard]] bool satisfied() const noexcept { return L < threshold; }
};

[[nodiscard]] std::vector<ThresholdMargin> threshold_margins(const TheoryConstants& tc);

/// Throws ThresholdViolation naming the first failed margin.
void require_weak_connectivity(const TheoryConstants& tc);

/// Discrete stationary profile of the model-1 scheme for frozen activity:
/// m_{i+1} = m_i e^{-p_i ds}, tail from the geometric series, mass 1.
[[nodiscard]] GridMeasure model1_profile(const RateModel& rate, const Grid& grid, double activity);

/// Fixed point of N -> Phi(profile(N)); requires L below the stationary threshold.
[[nodiscard]] Equilibrium stationary_model1(const RateModel& rate, const Grid& grid,
                                            double tol = kDefaultActivityTol);

struct LinearStationaryOptions {
    double tol = kDefaultActivityTol;
    std::size_t max_windows = 0;  // 0: derived from the contraction factor
    std::optional<GridMeasure> initial;
};

/// Stationary probability of the frozen-rate model-2 semigroup, by evolving
/// step_linear window by window (window = 2 s_star) until the guaranteed
/// distance to the limit, d (1 - alpha) / alpha, and the one-step residual are
/// both <= tol. Throws NumericalFailure after max_windows.
[[nodiscard]] GridMeasure stationary_linear_model2(const RateModel& frozen_rate, const KernelModel& kernel,
                                                   const LinearStationaryOptions& options = {});

/// Outer fixed point N -> Upsilon(N) with warm-started inner linear solves.
[[nodiscard]] Equilibrium stationary_model2(const RateModel& rate, const KernelModel& kernel,
                                            double tol = kDefaultActivityTol);

/// Upsilon(N) = activity of the linear stationary state at frozen N.
[[nodiscard]] double upsilon(const RateModel& rate, const KernelModel& kernel, double activity,
                             double tol = kDefaultActivityTol);

}  // namespace eflow
