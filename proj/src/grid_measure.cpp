#include "eflow/grid_measure.hpp"

#include "eflow/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace eflow {

namespace {

void require_same_grid(const Grid& a, const Grid& b) {
    if (!(a == b)) {
        throw std::invalid_argument("grid mismatch between measures");
    }
}

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

double parse_double(std::string_view field, std::size_t line_no) {
    double value = 0.0;
    const auto* first = field.data();
    const auto* last = field.data() + field.size();
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc{} || ptr != last) {
        throw ConfigError("measure CSV line " + std::to_string(line_no) + ": bad number '" +
                          std::string(field) + "'");
    }
    return value;
}

}  // namespace

Grid::Grid(double s_max, std::size_t n_cells)
    : s_max_(s_max), n_cells_(n_cells), ds_(s_max / static_cast<double>(n_cells)) {
    if (!(s_max > 0.0) || !std::isfinite(s_max)) {
        throw std::invalid_argument("grid: s_max must be positive and finite");
    }
    if (n_cells < 2) {
        throw std::invalid_argument("grid: n_cells must be at least 2");
    }
}

std::size_t Grid::cell_of(double s) const {
    if (!(s >= 0.0 && s <= s_max_)) {
        throw std::invalid_argument("grid: position " + format_double(s) + " outside [0, s_max]");
    }
    auto i = static_cast<std::size_t>(std::floor(s / ds_));
    return std::min(i, n_cells_ - 1);
}

std::size_t Grid::steps_for(double duration) const {
    if (!(duration >= 0.0)) {
        throw std::invalid_argument("grid: negative duration");
    }
    // Absorb representation error so that e.g. T = 1, ds = 0.005 gives 200.
    return static_cast<std::size_t>(std::ceil(duration / ds_ - 1e-9));
}

bool Grid::is_refined_by(const Grid& fine) const noexcept {
    return fine.s_max_ == s_max_ && fine.n_cells_ >= n_cells_ && fine.n_cells_ % n_cells_ == 0;
}

GridMeasure::GridMeasure(Grid grid) : grid_(grid), masses_(grid.n_cells(), 0.0) {}

GridMeasure::GridMeasure(Grid grid, std::vector<double> masses, double tail)
    : grid_(grid), masses_(std::move(masses)), tail_(tail) {
    if (masses_.size() != grid_.n_cells()) {
        throw std::invalid_argument("measure: mass vector length does not match grid");
    }
    for (double v : masses_) {
        if (!std::isfinite(v)) {
            throw std::invalid_argument("measure: non-finite cell mass");
        }
    }
    if (!std::isfinite(tail_)) {
        throw std::invalid_argument("measure: non-finite tail mass");
    }
}

GridMeasure GridMeasure::from_density(const Grid& grid, const std::function<double(double)>& density) {
    GridMeasure m(grid);
    for (std::size_t i = 0; i < grid.n_cells(); ++i) {
        const double s = grid.midpoint(i);
        const double f = density(s);
        if (!std::isfinite(f)) {
            throw std::domain_error("density is not finite at s = " + format_double(s));
        }
        m.masses_[i] = f * grid.ds();
    }
    return m;
}

GridMeasure GridMeasure::dirac(const Grid& grid, double s0) {
    GridMeasure m(grid);
    m.masses_[grid.cell_of(s0)] = 1.0;
    return m;
}

double GridMeasure::mass() const noexcept {
    double total = 0.0;
    for (double v : masses_) total += v;
    return total + tail_;
}

double GridMeasure::tv() const noexcept {
    double total = 0.0;
    for (double v : masses_) total += std::abs(v);
    return total + std::abs(tail_);
}

bool GridMeasure::is_nonnegative(double relative_slack) const noexcept {
    const double floor = -relative_slack * tv();
    return std::all_of(masses_.begin(), masses_.end(), [floor](double v) { return v >= floor; }) &&
           tail_ >= floor;
}

GridMeasure GridMeasure::clamped() const {
    GridMeasure out = *this;
    for (double& v : out.masses_) v = std::max(v, 0.0);
    out.tail_ = std::max(out.tail_, 0.0);
    return out;
}

GridMeasure& GridMeasure::operator+=(const GridMeasure& other) {
    require_same_grid(grid_, other.grid_);
    for (std::size_t i = 0; i < masses_.size(); ++i) masses_[i] += other.masses_[i];
    tail_ += other.tail_;
    return *this;
}

GridMeasure& GridMeasure::operator-=(const GridMeasure& other) {
    require_same_grid(grid_, other.grid_);
    for (std::size_t i = 0; i < masses_.size(); ++i) masses_[i] -= other.masses_[i];
    tail_ -= other.tail_;
    return *this;
}

GridMeasure& GridMeasure::operator*=(double a) noexcept {
    for (double& v : masses_) v *= a;
    tail_ *= a;
    return *this;
}

GridMeasure shift_right(const GridMeasure& m) {
    const auto in = m.masses();
    std::vector<double> out(in.size(), 0.0);
    std::copy(in.begin(), in.end() - 1, out.begin() + 1);
    return GridMeasure(m.grid(), std::move(out), m.tail() + in.back());
}

GridMeasure axpy(double a, const GridMeasure& x, const GridMeasure& y) {
    require_same_grid(x.grid(), y.grid());
    GridMeasure out = y;
    auto dst = out.masses();
    const auto src = x.masses();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += a * src[i];
    out.tail() += a * x.tail();
    return out;
}

double tv_distance(const GridMeasure& x, const GridMeasure& y) {
    require_same_grid(x.grid(), y.grid());
    const auto a = x.masses();
    const auto b = y.masses();
    double total = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) total += std::abs(a[i] - b[i]);
    return total + std::abs(x.tail() - y.tail());
}

GridMeasure operator+(GridMeasure x, const GridMeasure& y) { return x += y; }
GridMeasure operator-(GridMeasure x, const GridMeasure& y) { return x -= y; }
GridMeasure operator*(double a, GridMeasure x) { return x *= a; }

GridMeasure coarsen(const GridMeasure& m, const Grid& coarse) {
    if (!coarse.is_refined_by(m.grid())) {
        throw std::invalid_argument("coarsen: source grid does not refine the target grid");
    }
    const std::size_t factor = m.grid().n_cells() / coarse.n_cells();
    std::vector<double> out(coarse.n_cells(), 0.0);
    const auto src = m.masses();
    for (std::size_t i = 0; i < src.size(); ++i) out[i / factor] += src[i];
    return GridMeasure(coarse, std::move(out), m.tail());
}

void write_csv(std::ostream& os, const GridMeasure& m) {
    const Grid& g = m.grid();
    os << "s_lo,s_hi,mass\n";
    const auto masses = m.masses();
    for (std::size_t i = 0; i < masses.size(); ++i) {
        os << format_double(g.cell_lo(i)) << ',' << format_double(g.cell_hi(i)) << ','
           << format_double(masses[i]) << '\n';
    }
    os << "tail,," << format_double(m.tail()) << '\n';
}

void write_csv(const std::string& path, const GridMeasure& m) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    write_csv(os, m);
}

GridMeasure read_csv(std::istream& is) {
    std::string line;
    std::size_t line_no = 1;
    if (!std::getline(is, line) || line != "s_lo,s_hi,mass") {
        throw ConfigError("measure CSV: missing header 's_lo,s_hi,mass'");
    }
    std::vector<double> masses;
    double last_hi = 0.0;
    bool have_tail = false;
    double tail = 0.0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        if (have_tail) throw ConfigError("measure CSV: rows after the tail row");
        std::string_view view(line);
        const auto c1 = view.find(',');
        const auto c2 = view.find(',', c1 + 1);
        if (c1 == std::string_view::npos || c2 == std::string_view::npos) {
            throw ConfigError("measure CSV line " + std::to_string(line_no) + ": expected 3 fields");
        }
        const auto f0 = view.substr(0, c1);
        const auto f1 = view.substr(c1 + 1, c2 - c1 - 1);
        const auto f2 = view.substr(c2 + 1);
        if (f0 == "tail") {
            tail = parse_double(f2, line_no);
            have_tail = true;
            continue;
        }
        (void)parse_double(f0, line_no);
        last_hi = parse_double(f1, line_no);
        masses.push_back(parse_double(f2, line_no));
    }
    if (!have_tail) throw ConfigError("measure CSV: missing tail row");
    if (masses.size() < 2) throw ConfigError("measure CSV: fewer than 2 cells");
    const Grid grid(last_hi, masses.size());
    return GridMeasure(grid, std::move(masses), tail);
}

GridMeasure read_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open measure snapshot " + path);
    return read_csv(is);
}

}  // namespace eflow
