#pragma once

#include "eflow/equilibria.hpp"
#include "eflow/grid_measure.hpp"
#include "eflow/models.hpp"
#include "eflow/semigroup.hpp"

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace eflow {

/// Relative scheme tolerance on density floors and contraction factors.
[[nodiscard]] inline double scheme_tolerance(const Grid& grid, double p_max) noexcept {
    return 5.0 * grid.ds() * p_max;
}

struct DoeblinReport {
    ModelKind model = ModelKind::age_structured;
    double t0 = 0.0;
    double lo = 0.0;             // window (lo, hi) in s
    double hi = 0.0;
    double bound = 0.0;          // theoretical density floor
    double floor = 0.0;          // bound * (1 - 5 ds p_max) * bound_scale
    double bound_scale = 1.0;
    double min_density = 0.0;
    std::size_t trials = 0;
    std::size_t window_cells = 0;
    double worst_s0 = 0.0;
    std::string worst_initial;
    bool pass = false;
};

/// Evolves dirac(s0) for n_trials evenly spaced s0 in [0, s_max], plus
/// s0 in {0, s_star, 2 s_star, s_max}, to t0 = 2 s_star under the frozen
/// rate and compares the minimum cell density on the window with the floor.
/// Throws ConfigError when the grid has fewer than 20 cells per s_star.
[[nodiscard]] DoeblinReport doeblin_check(ModelKind model, const RateModel& frozen_rate, const KernelModel* kernel,
                                          const Grid& grid, std::size_t n_trials = 64, unsigned threads = 1,
                                          double bound_scale = 1.0);

struct ContractionReport {
    std::size_t pairs = 0;
    std::size_t skipped = 0;    // identical pairs (0/0)
    std::uint64_t seed = 0;
    double alpha = 0.0;
    double bound = 0.0;         // (1 - alpha) + 5 ds p_max
    double worst_ratio = 0.0;
    std::size_t worst_pair = 0;
    bool non_expansive = true;  // every ratio <= 1 + 1e-12
    bool pass = false;
};

/// Random probability: a normalized mixture of 1..8 Diracs placed uniformly
/// on [0, s_max] with uniform weights.
[[nodiscard]] GridMeasure random_dirac_mixture(const Grid& grid, std::mt19937_64& rng);

[[nodiscard]] ContractionReport contraction_check(ModelKind model, const RateModel& frozen_rate,
                                                  const KernelModel* kernel, const Grid& grid, std::size_t n_pairs,
                                                  std::uint64_t seed, unsigned threads = 1);

struct RateFit {
    double lambda_fit = 0.0;
    double intercept = 0.0;
    double r2 = 0.0;
    double t_lo = 0.0;
    double t_hi = 0.0;
    std::size_t samples = 0;
    bool window_shrunk = false;
    double lambda_theory = 0.0;
};

inline constexpr double kDecayNoiseFloor = 1e-11;

/// Least squares of log d against t over samples with t in [t_lo, t_hi].
/// The window ends before the first sample at or below `noise_floor`;
/// throws NumericalFailure when fewer than 5 samples remain.
[[nodiscard]] RateFit fit_decay_rate(std::span<const double> t, std::span<const double> d, double t_lo, double t_hi,
                                     double noise_floor = kDecayNoiseFloor);

/// h = (L_N - L_{N*}) n on the grid, for the current state and activity.
/// Returned as a measure so its TV norm and integral can be inspected.
[[nodiscard]] GridMeasure perturbation_term(const RateModel& rate, const KernelModel* kernel, const SimState& state,
                                            double N_star);

struct RelaxationOptions {
    double horizon = 40.0;
    double fit_lo = 2.0;
    double fit_hi = 40.0;
    std::size_t stride = 1;     // steps between recorded tv samples
    double tol = kDefaultActivityTol;
    double noise_floor = kDecayNoiseFloor;
    double h_min_tv = 1e-9;     // ratios ||h|| / tv only above this distance
    double rate_factor = 0.98;
    double r2_min = 0.99;
    double h_factor = 1.05;
    double integral_tol = 1e-10;
    unsigned threads = 1;
};

struct RelaxationRun {
    std::string label;
    double truncation_horizon = 0.0;  // s_max minus the top of the initial support
    std::vector<double> t;
    std::vector<double> tv;
    RateFit fit;
    double max_h_ratio = 0.0;
    double max_abs_h_integral = 0.0;
    bool fit_ok = false;
};

struct RelaxationReport {
    TheoryConstants constants;
    Equilibrium equilibrium;
    std::vector<RelaxationRun> runs;
    double lambda_theory = 0.0;
    double min_lambda_fit = 0.0;
    double min_r2 = 0.0;
    double max_h_ratio = 0.0;
    double max_abs_h_integral = 0.0;
    bool rate_pass = false;
    bool h_pass = false;
    bool integral_pass = false;

    [[nodiscard]] bool pass() const noexcept { return rate_pass && h_pass && integral_pass; }
};

using LabeledMeasure = std::pair<std::string, GridMeasure>;

/// Requires weak connectivity (ThresholdViolation otherwise), solves the
/// equilibrium, then runs each initial datum to `horizon`, recording
/// tv(n(t) - n_star), the perturbation ratio ||h|| / tv and |integral of h|.
/// The fit window of a run ends at its truncation horizon: after that the
/// oldest deviation has entered the lumped tail cell, where positive and
/// negative parts merge and tv collapses for reasons unrelated to relaxation.
[[nodiscard]] RelaxationReport relaxation_experiment(ModelKind model, const RateModel& rate, const KernelModel* kernel,
                                                     const std::vector<LabeledMeasure>& inits, const Grid& grid,
                                                     const RelaxationOptions& options = {});

}  // namespace eflow
