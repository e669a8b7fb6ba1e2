#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace eflow {

/// Uniform partition of [0, s_max] into n_cells left-closed cells of width ds.
/// Everything beyond s_max is lumped into a single tail cell owned by the
/// measure, not the grid.
class Grid {
public:
    Grid(double s_max, std::size_t n_cells);

    [[nodiscard]] double s_max() const noexcept { return s_max_; }
    [[nodiscard]] std::size_t n_cells() const noexcept { return n_cells_; }
    [[nodiscard]] double ds() const noexcept { return ds_; }

    [[nodiscard]] double cell_lo(std::size_t i) const noexcept { return static_cast<double>(i) * ds_; }
    [[nodiscard]] double cell_hi(std::size_t i) const noexcept {
        return i + 1 == n_cells_ ? s_max_ : static_cast<double>(i + 1) * ds_;
    }
    [[nodiscard]] double midpoint(std::size_t i) const noexcept {
        return (static_cast<double>(i) + 0.5) * ds_;
    }

    /// Index of the cell containing s (left-closed; s_max maps to the last cell).
    [[nodiscard]] std::size_t cell_of(double s) const;

    /// Number of whole steps of length ds needed to cover a time span.
    [[nodiscard]] std::size_t steps_for(double duration) const;

    /// True when `fine` refines this grid by an integer factor on the same domain.
    [[nodiscard]] bool is_refined_by(const Grid& fine) const noexcept;

    friend bool operator==(const Grid& a, const Grid& b) noexcept {
        return a.s_max_ == b.s_max_ && a.n_cells_ == b.n_cells_;
    }

private:
    double s_max_;
    std::size_t n_cells_;
    double ds_;
};

/// Finite signed measure on [0, +inf) stored as per-cell masses (not
/// densities) plus a lumped tail mass for (s_max, +inf).
class GridMeasure {
public:
    explicit GridMeasure(Grid grid);
    GridMeasure(Grid grid, std::vector<double> masses, double tail);

    /// Midpoint-rule cell integrals of a density; tail mass is zero.
    static GridMeasure from_density(const Grid& grid, const std::function<double(double)>& density);

    /// Unit mass in the cell containing s0.
    static GridMeasure dirac(const Grid& grid, double s0);

    [[nodiscard]] const Grid& grid() const noexcept { return grid_; }
    [[nodiscard]] std::span<const double> masses() const noexcept { return masses_; }
    [[nodiscard]] std::span<double> masses() noexcept { return masses_; }
    [[nodiscard]] double tail() const noexcept { return tail_; }
    [[nodiscard]] double& tail() noexcept { return tail_; }
    [[nodiscard]] std::size_t size() const noexcept { return masses_.size(); }

    [[nodiscard]] double mass() const noexcept;
    [[nodiscard]] double tv() const noexcept;

    /// Nonnegative up to rounding: every entry >= -1e-14 * tv.
    [[nodiscard]] bool is_nonnegative(double relative_slack = 1e-14) const noexcept;

    /// Copy with rounding-level negative entries set to zero.
    [[nodiscard]] GridMeasure clamped() const;

    GridMeasure& operator+=(const GridMeasure& other);
    GridMeasure& operator-=(const GridMeasure& other);
    GridMeasure& operator*=(double a) noexcept;

private:
    Grid grid_;
    std::vector<double> masses_;
    double tail_ = 0.0;
};

[[nodiscard]] inline double mass(const GridMeasure& m) noexcept { return m.mass(); }
[[nodiscard]] inline double tv(const GridMeasure& m) noexcept { return m.tv(); }

/// Translation by one cell; the last cell spills into the tail.
[[nodiscard]] GridMeasure shift_right(const GridMeasure& m);

/// a * x + y, including tails. Throws std::invalid_argument on grid mismatch.
[[nodiscard]] GridMeasure axpy(double a, const GridMeasure& x, const GridMeasure& y);

/// TV distance without materializing the difference.
[[nodiscard]] double tv_distance(const GridMeasure& x, const GridMeasure& y);

[[nodiscard]] GridMeasure operator+(GridMeasure x, const GridMeasure& y);
[[nodiscard]] GridMeasure operator-(GridMeasure x, const GridMeasure& y);
[[nodiscard]] GridMeasure operator*(double a, GridMeasure x);

/// Sum fine cells into the cells of `coarse`. `m.grid()` must refine `coarse`.
[[nodiscard]] GridMeasure coarsen(const GridMeasure& m, const Grid& coarse);

/// CSV with header `s_lo,s_hi,mass`, one row per cell and a final
/// `tail,,<mass>` row. Values use 17 significant digits.
void write_csv(std::ostream& os, const GridMeasure& m);
void write_csv(const std::string& path, const GridMeasure& m);
[[nodiscard]] GridMeasure read_csv(std::istream& is);
[[nodiscard]] GridMeasure read_csv(const std::string& path);

}  // namespace eflow
