#include "eflow/models.hpp"

#include "eflow/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace eflow {

namespace {

constexpr std::size_t kActivitySamples = 200;
constexpr double kLipschitzSlack = 1e-12;

double logistic(double x) {
    // Both branches avoid overflow in exp.
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

std::string witness_text(const Witness& w) {
    std::ostringstream os;
    os.precision(17);
    os << "(N=" << w.activity << ", s=" << w.age << ", p=" << w.value << ")";
    return os.str();
}

void certify_or_throw(const RateModel& rate) {
    // Lattice wide enough to see the transition and the plateau beyond it.
    const double width = rate.params().count("w") ? rate.params().at("w") : 0.0;
    const double s_max = std::max({10.0, 4.0 * rate.s_star() + 40.0 * width});
    const Grid lattice(s_max, 1000);
    const Interval activity{0.0, 4.0 * rate.p_max() + 1.0};
    const auto report = validate_rate(rate, activity, lattice);
    for (const auto& c : report.checks) {
        if (!c.pass) {
            throw ConfigError("rate family '" + rate.family() + "' failed certification of " + c.name +
                              (c.witness ? " at " + witness_text(*c.witness) : std::string{}) +
                              (c.detail.empty() ? std::string{} : ": " + c.detail));
        }
    }
}

}  // namespace

RateModel::RateModel(std::string family, Function f, RateBounds bounds, std::map<std::string, double> params)
    : family_(std::move(family)), f_(std::move(f)), bounds_(bounds), params_(std::move(params)) {
    if (!f_) throw std::invalid_argument("rate: empty evaluation function");
    if (!(bounds_.p_min >= 0.0) || !(bounds_.p_max >= bounds_.p_min) || !std::isfinite(bounds_.p_max)) {
        throw std::invalid_argument("rate: need 0 <= p_min <= p_max < inf");
    }
    if (!(bounds_.s_star > 0.0) || !std::isfinite(bounds_.s_star)) {
        throw std::invalid_argument("rate: s_star must be positive");
    }
    if (!(bounds_.lipschitz >= 0.0) || !std::isfinite(bounds_.lipschitz)) {
        throw std::invalid_argument("rate: Lipschitz constant must be finite and nonnegative");
    }
}

RateModel RateModel::frozen_at(double activity) const {
    RateBounds b = bounds_;
    b.lipschitz = 0.0;
    auto params = params_;
    params["frozen_activity"] = activity;
    return RateModel(family_, [f = f_, activity](double, double s) { return f(activity, s); }, b,
                     std::move(params));
}

CellRates cell_rates(const RateModel& rate, const Grid& grid, double activity) {
    CellRates out;
    out.cells.resize(grid.n_cells());
    for (std::size_t i = 0; i < grid.n_cells(); ++i) out.cells[i] = rate(activity, grid.midpoint(i));
    out.tail = rate(activity, grid.s_max());
    return out;
}

bool RateReport::pass() const noexcept {
    return std::all_of(checks.begin(), checks.end(), [](const AssumptionCheck& c) { return c.pass; });
}

const AssumptionCheck& RateReport::check(const std::string& name) const {
    for (const auto& c : checks) {
        if (c.name == name) return c;
    }
    throw std::out_of_range("no assumption check named " + name);
}

RateReport validate_rate(const RateModel& rate, Interval activity_range, const Grid& grid) {
    if (!(activity_range.hi >= activity_range.lo)) {
        throw std::invalid_argument("validate_rate: empty activity range");
    }
    const auto& b = rate.bounds();
    const double slack = 1e-12 * std::max(1.0, b.p_max);

    std::vector<double> ages(grid.n_cells() + 1);
    for (std::size_t i = 0; i < grid.n_cells(); ++i) ages[i] = grid.midpoint(i);
    ages.back() = grid.s_max();

    std::vector<double> activities(kActivitySamples);
    for (std::size_t k = 0; k < kActivitySamples; ++k) {
        activities[k] = activity_range.lo + (activity_range.hi - activity_range.lo) *
                                                static_cast<double>(k) / static_cast<double>(kActivitySamples - 1);
    }

    AssumptionCheck p1{"p1", true, std::nullopt, ""};
    AssumptionCheck p2{"p2", true, std::nullopt, ""};
    AssumptionCheck p3{"p3", true, std::nullopt, ""};
    AssumptionCheck p4{"p4", true, std::nullopt, ""};

    RateReport report;
    report.sampled_min_beyond_s_star = std::numeric_limits<double>::infinity();
    report.sampled_max = 0.0;

    std::vector<double> prev_row;
    double prev_activity = 0.0;
    std::vector<double> row(ages.size());
    for (double activity : activities) {
        for (std::size_t i = 0; i < ages.size(); ++i) {
            const double v = rate(activity, ages[i]);
            row[i] = v;
            const Witness w{activity, ages[i], v};
            if (!std::isfinite(v) || v < 0.0) {
                if (p1.pass) p1 = {"p1", false, w, "rate must be finite and nonnegative"};
                continue;
            }
            report.sampled_max = std::max(report.sampled_max, v);
            if (v > b.p_max + slack && p4.pass) p4 = {"p4", false, w, "rate exceeds p_max"};
            if (ages[i] >= b.s_star) {
                report.sampled_min_beyond_s_star = std::min(report.sampled_min_beyond_s_star, v);
                if (v < b.p_min - slack && p4.pass) p4 = {"p4", false, w, "rate below p_min beyond s_star"};
            }
            if (b.monotone_s && i > 0 && v < row[i - 1] - slack && p3.pass) {
                p3 = {"p3", false, w, "rate decreases in s"};
            }
        }
        if (!prev_row.empty() && activity != prev_activity) {
            const double dn = activity - prev_activity;
            for (std::size_t i = 0; i < ages.size(); ++i) {
                const double q = std::abs(row[i] - prev_row[i]) / dn;
                if (std::isfinite(q) && q > report.empirical_lipschitz) {
                    report.empirical_lipschitz = q;
                    if (q > b.lipschitz * (1.0 + 1e-9) + kLipschitzSlack && p2.pass) {
                        p2 = {"p2", false, Witness{activity, ages[i], row[i]},
                              "difference quotient " + std::to_string(q) + " exceeds L"};
                    }
                }
            }
        }
        prev_row = row;
        prev_activity = activity;
    }
    if (!std::isfinite(report.sampled_min_beyond_s_star)) report.sampled_min_beyond_s_star = 0.0;
    report.checks = {p1, p2, p3, p4};
    return report;
}

RateModel make_constant_rate(double p0, double s_star) {
    if (!(p0 >= 0.0) || !std::isfinite(p0)) throw ConfigError("constant rate: p0 must be finite and >= 0");
    if (!(s_star > 0.0)) throw ConfigError("constant rate: s_star must be positive");
    return RateModel("constant", [p0](double, double) { return p0; },
                     RateBounds{p0, p0, s_star, 0.0, true}, {{"p0", p0}, {"s_star", s_star}});
}

RateModel make_affine_sigmoid_rate(double p_min, double p_max, double s_star, double coupling, double width) {
    if (!(p_min > 0.0) || !(p_max >= p_min) || !std::isfinite(p_max)) {
        throw ConfigError("affine_sigmoid rate: need 0 < p_min <= p_max");
    }
    if (!(width > 0.0)) throw ConfigError("affine_sigmoid rate: width w must be positive");
    if (!std::isfinite(coupling)) throw ConfigError("affine_sigmoid rate: J must be finite");
    if (!(s_star > 0.0)) throw ConfigError("affine_sigmoid rate: s_star must be positive");

    const double span = p_max - p_min;
    auto f = [=](double activity, double s) {
        const double v = p_min + span * logistic((s - s_star + coupling * std::tanh(activity)) / width);
        return std::clamp(v, p_min, p_max);
    };
    const double lipschitz = std::abs(coupling) * span / (4.0 * width);
    RateModel rate("affine_sigmoid", f, RateBounds{p_min, p_max, s_star, lipschitz, true},
                   {{"p_min", p_min}, {"p_max", p_max}, {"s_star", s_star}, {"J", coupling}, {"w", width}});
    certify_or_throw(rate);
    return rate;
}

RateModel make_affine_rate(double a, double b, double p_max, double s_star) {
    if (!std::isfinite(a) || !std::isfinite(b)) throw ConfigError("affine rate: a and b must be finite");
    if (!(p_max >= std::max(a, 0.0))) throw ConfigError("affine rate: need p_max >= a");
    if (!(s_star > 0.0)) throw ConfigError("affine rate: s_star must be positive");
    // Over N >= 0 the minimum is a when b >= 0; a decreasing rate can reach 0.
    const double p_min = b >= 0.0 ? std::max(a, 0.0) : 0.0;
    auto f = [=](double activity, double) { return std::clamp(a + b * activity, 0.0, p_max); };
    RateModel rate("affine", f, RateBounds{p_min, p_max, s_star, std::abs(b), true},
                   {{"a", a}, {"b", b}, {"p_max", p_max}, {"s_star", s_star}});
    certify_or_throw(rate);
    return rate;
}

KernelModel::KernelModel(Grid grid, std::string family, std::vector<KernelColumn> columns, double eps,
                         double delta, bool point_mass_at_zero, std::map<std::string, double> params)
    : grid_(grid),
      family_(std::move(family)),
      columns_(std::move(columns)),
      eps_(eps),
      delta_(delta),
      point_mass_at_zero_(point_mass_at_zero),
      params_(std::move(params)) {
    if (columns_.size() != grid_.n_cells()) {
        throw std::invalid_argument("kernel: need one column per grid cell");
    }
    for (const auto& col : columns_) {
        if (col.first + col.weights.size() > grid_.n_cells()) {
            throw std::invalid_argument("kernel: column extends past the grid");
        }
    }
}

double KernelModel::weight(std::size_t dest, std::size_t src) const noexcept {
    const auto& col = columns_[src];
    if (dest < col.first || dest >= col.first + col.weights.size()) return 0.0;
    return col.weights[dest - col.first];
}

void KernelModel::redistribute(std::span<const double> fired, double fired_tail, std::span<double> dest) const {
    if (fired.size() != columns_.size() || dest.size() != columns_.size()) {
        throw std::invalid_argument("kernel: grid mismatch in redistribution");
    }
    auto scatter = [&dest](const KernelColumn& col, double f) {
        double* out = dest.data() + col.first;
        for (std::size_t k = 0; k < col.weights.size(); ++k) out[k] += col.weights[k] * f;
    };
    for (std::size_t j = 0; j < fired.size(); ++j) {
        if (fired[j] != 0.0) scatter(columns_[j], fired[j]);
    }
    if (fired_tail != 0.0) scatter(columns_.back(), fired_tail);
}

KernelModel make_delta_kernel(const Grid& grid) {
    std::vector<KernelColumn> columns(grid.n_cells(), KernelColumn{0, {1.0}});
    return KernelModel(grid, "delta", std::move(columns), 1.0 / grid.ds(), grid.ds(), true);
}

KernelModel make_truncated_uniform_kernel(const Grid& grid, double c) {
    const double ds = grid.ds();
    if (!(c > ds)) {
        throw ConfigError("truncated_uniform kernel: support c must exceed the cell width");
    }
    const auto k_c = static_cast<std::size_t>(std::ceil(c / ds - 1e-9));
    if (k_c > grid.n_cells()) throw ConfigError("truncated_uniform kernel: c exceeds s_max");

    std::vector<KernelColumn> columns(grid.n_cells());
    for (std::size_t j = 0; j < grid.n_cells(); ++j) {
        const std::size_t k = std::min(j + 1, k_c);
        std::vector<double> w(k, 1.0 / static_cast<double>(k));
        // Put the rounding remainder in the last weight so the column sums to 1.
        double head = 0.0;
        for (std::size_t i = 0; i + 1 < k; ++i) head += w[i];
        w.back() = 1.0 - head;
        columns[j] = KernelColumn{0, std::move(w)};
    }
    const double eps = 1.0 / (static_cast<double>(k_c) * ds);
    const double delta = static_cast<double>(k_c - 1) * ds;
    return KernelModel(grid, "truncated_uniform", std::move(columns), eps, delta, false, {{"c", c}});
}

KernelReport validate_kernel(const KernelModel& kernel, double s_star) {
    KernelReport r;
    const Grid& g = kernel.grid();
    const auto cols = kernel.columns();
    const double ds = g.ds();
    const double floor = kernel.eps() * ds * (1.0 - 1e-12);

    auto fail = [&r](bool& flag, std::size_t j, std::string msg) {
        if (flag) {
            flag = false;
            r.witness_column = j;
            r.detail = std::move(msg);
        }
    };

    if (!(kernel.delta() > 0.0 && kernel.delta() < s_star)) {
        r.delta_in_range = false;
        r.detail = "delta must lie in (0, s_star)";
    }
    for (std::size_t j = 0; j < cols.size(); ++j) {
        const auto& col = cols[j];
        double sum = 0.0;
        for (std::size_t k = 0; k < col.weights.size(); ++k) {
            const double w = col.weights[k];
            if (w < 0.0) fail(r.stochastic, j, "negative weight");
            if (w != 0.0 && col.first + k > j) fail(r.support, j, "weight above the source cell");
            sum += w;
        }
        const double err = std::abs(sum - 1.0);
        r.worst_sum_error = std::max(r.worst_sum_error, err);
        if (err > 1e-12) fail(r.stochastic, j, "column does not sum to 1");

        const double u = g.cell_hi(j);
        if (u >= s_star * (1.0 - 1e-12)) {
            for (std::size_t i = 0; i < g.n_cells() && g.cell_hi(i) <= kernel.delta() * (1.0 + 1e-12) + 1e-15; ++i) {
                if (kernel.weight(i, j) < floor) {
                    fail(r.minorization, j, "weight below eps * ds inside [0, delta]");
                    break;
                }
            }
        }
    }
    return r;
}

}  // namespace eflow
