#pragma once

#include "eflow/grid_measure.hpp"

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace eflow {

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
};

/// Certified structural constants of a firing rate p(N, s):
/// p_min * 1{s >= s_star} <= p <= p_max and |p(N1,s) - p(N2,s)| <= L |N1 - N2|.
struct RateBounds {
    double p_min = 0.0;
    double p_max = 0.0;
    double s_star = 0.0;
    double lipschitz = 0.0;
    bool monotone_s = true;
};

/// Firing rate p(N, s) together with its certified bounds. Immutable.
class RateModel {
public:
    using Function = std::function<double(double activity, double age)>;

    RateModel(std::string family, Function f, RateBounds bounds,
              std::map<std::string, double> params = {});

    [[nodiscard]] double operator()(double activity, double age) const { return f_(activity, age); }

    [[nodiscard]] const RateBounds& bounds() const noexcept { return bounds_; }
    [[nodiscard]] double p_min() const noexcept { return bounds_.p_min; }
    [[nodiscard]] double p_max() const noexcept { return bounds_.p_max; }
    [[nodiscard]] double s_star() const noexcept { return bounds_.s_star; }
    [[nodiscard]] double lipschitz() const noexcept { return bounds_.lipschitz; }
    [[nodiscard]] const std::string& family() const noexcept { return family_; }
    [[nodiscard]] const std::map<std::string, double>& params() const noexcept { return params_; }

    /// Linear (no-connectivity) rate s -> p(activity, s). Keeps the bounds, L = 0.
    [[nodiscard]] RateModel frozen_at(double activity) const;

private:
    std::string family_;
    Function f_;
    RateBounds bounds_;
    std::map<std::string, double> params_;
};

/// p evaluated at every cell midpoint and at s_max (used for the tail).
struct CellRates {
    std::vector<double> cells;
    double tail = 0.0;
};

[[nodiscard]] CellRates cell_rates(const RateModel& rate, const Grid& grid, double activity);

struct Witness {
    double activity = 0.0;
    double age = 0.0;
    double value = 0.0;
};

struct AssumptionCheck {
    std::string name;
    bool pass = true;
    std::optional<Witness> witness;
    std::string detail;
};

struct RateReport {
    std::vector<AssumptionCheck> checks;
    double empirical_lipschitz = 0.0;
    double sampled_min_beyond_s_star = 0.0;
    double sampled_max = 0.0;

    [[nodiscard]] bool pass() const noexcept;
    [[nodiscard]] const AssumptionCheck& check(const std::string& name) const;
};

/// Samples a 200 x n_cells lattice over activity_range x cell midpoints (plus
/// s_max) and checks bounded/nonnegative, Lipschitz in N, monotone in s and
/// the p_min / p_max bounds.
[[nodiscard]] RateReport validate_rate(const RateModel& rate, Interval activity_range, const Grid& grid);

/// p == p0 everywhere; p_min = p_max = p0, L = 0.
[[nodiscard]] RateModel make_constant_rate(double p0, double s_star);

/// Smoothed step p(N,s) = p_min + (p_max - p_min) * sigma((s - s_star + J tanh N) / w),
/// sigma the logistic function. L = |J| (p_max - p_min) / (4 w), which is the
/// exact supremum of |dp/dN|. Certified on a sample lattice; throws
/// ConfigError with a witness when a bound fails.
[[nodiscard]] RateModel make_affine_sigmoid_rate(double p_min, double p_max, double s_star,
                                                 double coupling, double width);

/// p(N,s) = clamp(a + b N, 0, p_max), independent of s. L = |b|.
[[nodiscard]] RateModel make_affine_rate(double a, double b, double p_max, double s_star);

/// Destination weights of one kernel column, covering cells first..first+size-1.
struct KernelColumn {
    std::size_t first = 0;
    std::vector<double> weights;
};

/// Column-stochastic reinjection kernel on the grid: column j is the law of
/// the post-firing state for a neuron firing from source cell j, whose state
/// is represented by u_j = (j + 1) ds. The tail fires through the last column.
class KernelModel {
public:
    KernelModel(Grid grid, std::string family, std::vector<KernelColumn> columns, double eps,
                double delta, bool point_mass_at_zero = false, std::map<std::string, double> params = {});

    [[nodiscard]] const Grid& grid() const noexcept { return grid_; }
    [[nodiscard]] const std::string& family() const noexcept { return family_; }
    [[nodiscard]] std::span<const KernelColumn> columns() const noexcept { return columns_; }
    [[nodiscard]] double eps() const noexcept { return eps_; }
    [[nodiscard]] double delta() const noexcept { return delta_; }
    [[nodiscard]] bool is_point_mass_at_zero() const noexcept { return point_mass_at_zero_; }
    [[nodiscard]] const std::map<std::string, double>& params() const noexcept { return params_; }

    /// Weight sent from source cell `src` to destination cell `dest`.
    [[nodiscard]] double weight(std::size_t dest, std::size_t src) const noexcept;

    /// dest += K * fired, with the tail firing routed through the last column.
    void redistribute(std::span<const double> fired, double fired_tail, std::span<double> dest) const;

private:
    Grid grid_;
    std::string family_;
    std::vector<KernelColumn> columns_;
    double eps_;
    double delta_;
    bool point_mass_at_zero_;
    std::map<std::string, double> params_;
};

/// Every column is a unit mass in cell 0 (reinjection at s = 0).
[[nodiscard]] KernelModel make_delta_kernel(const Grid& grid);

/// Column j uniform over the cells covering [0, min(u_j, c)]. Certified
/// eps = 1 / (k ds) and delta = (k - 1) ds with k = ceil(c / ds), i.e.
/// eps = 1/c and delta = c - ds when c is a multiple of ds.
[[nodiscard]] KernelModel make_truncated_uniform_kernel(const Grid& grid, double c);

struct KernelReport {
    bool stochastic = true;        // columns nonnegative, sum to 1 within 1e-12
    bool support = true;           // column j confined to cells 0..j
    bool minorization = true;      // weight >= eps ds on [0, delta] for u >= s_star
    bool delta_in_range = true;    // 0 < delta < s_star
    double worst_sum_error = 0.0;
    std::optional<std::size_t> witness_column;
    std::string detail;

    [[nodiscard]] bool pass() const noexcept {
        return stochastic && support && minorization && delta_in_range;
    }
};

[[nodiscard]] KernelReport validate_kernel(const KernelModel& kernel, double s_star);

}  // namespace eflow
