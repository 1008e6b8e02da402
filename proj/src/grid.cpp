#include "nlmarkov/grid.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

#include "nlmarkov/error.hpp"

namespace nlmarkov {

Grid::Grid(double lower, double upper, std::size_t n, int dim)
    : lower_(lower), upper_(upper), n_(n), dim_(dim) {
    if (!std::isfinite(lower) || !std::isfinite(upper) || !(upper > lower)) {
        throw InvariantViolation("Grid: need finite bounds with upper > lower");
    }
    if (n < 8) {
        throw InvariantViolation("Grid: need at least 8 nodes per axis, got " + std::to_string(n));
    }
    if (dim != 1 && dim != 2) {
        throw InvariantViolation("Grid: dim must be 1 or 2");
    }
}

std::array<double, 2> Grid::point(std::size_t flat) const noexcept {
    if (dim_ == 1) return {coordinate(flat), 0.0};
    return {coordinate(flat / n_), coordinate(flat % n_)};
}

Vector Grid::axis() const {
    Vector x(static_cast<Eigen::Index>(n_));
    for (std::size_t i = 0; i < n_; ++i) x[static_cast<Eigen::Index>(i)] = coordinate(i);
    return x;
}

Vector Grid::sample(const std::function<double(double, double)>& fn) const {
    Vector v(static_cast<Eigen::Index>(size()));
    for (std::size_t k = 0; k < size(); ++k) {
        const auto p = point(k);
        v[static_cast<Eigen::Index>(k)] = fn(p[0], p[1]);
    }
    return v;
}

Vector Grid::sample(const std::function<double(double)>& fn) const {
    return sample([&fn](double x, double) { return fn(x); });
}

void require_same_grid(const Grid& a, const Grid& b, const char* where) {
    if (!(a == b)) throw DimensionError(std::string(where) + ": operands live on different grids");
}

namespace {

void require_finite(const Vector& v, const char* what) {
    if (!v.allFinite()) throw InvariantViolation(std::string(what) + ": non-finite entries");
}

}  // namespace

TestFunction::TestFunction(Grid g, Vector v, int order)
    : grid(std::move(g)), values(std::move(v)), declared_order(order) {
    if (static_cast<std::size_t>(values.size()) != grid.size()) {
        throw DimensionError("TestFunction: value count does not match grid size");
    }
    if (order < 0 || order > 2) throw InvariantViolation("TestFunction: declared order must be 0, 1 or 2");
    require_finite(values, "TestFunction");
}

TestFunction TestFunction::constant(const Grid& g, double c, int order) {
    return {g, Vector::Constant(static_cast<Eigen::Index>(g.size()), c), order};
}

TestFunction TestFunction::from(const Grid& g, const std::function<double(double)>& fn, int order) {
    return {g, g.sample(fn), order};
}

TestFunction TestFunction::from(const Grid& g, const std::function<double(double, double)>& fn, int order) {
    return {g, g.sample(fn), order};
}

GridMeasure::GridMeasure(Grid g, Vector w) : grid(std::move(g)), weights(std::move(w)) {
    if (static_cast<std::size_t>(weights.size()) != grid.size()) {
        throw DimensionError("GridMeasure: weight count does not match grid size");
    }
    require_finite(weights, "GridMeasure");
}

GridMeasure GridMeasure::zero(const Grid& g) {
    return {g, Vector::Zero(static_cast<Eigen::Index>(g.size()))};
}

GridMeasure GridMeasure::gaussian(const Grid& g, double mean, double stddev) {
    if (!(stddev > 0)) throw InvariantViolation("gaussian: stddev must be positive");
    Vector w = g.sample([&](double x, double y) {
        const double zx = (x - mean) / stddev;
        const double zy = g.dim() == 2 ? (y - mean) / stddev : 0.0;
        return std::exp(-0.5 * (zx * zx + zy * zy));
    });
    w /= w.sum();
    return {g, std::move(w)};
}

GridMeasure GridMeasure::from_density(const Grid& g, const std::function<double(double)>& density) {
    Vector w = g.sample(density);
    if ((w.array() < 0).any()) throw InvariantViolation("from_density: negative density");
    const double total = w.sum();
    if (!(total > 0)) throw InvariantViolation("from_density: zero total mass");
    w /= total;
    return {g, std::move(w)};
}

GridMeasure GridMeasure::dirac(const Grid& g, double x) {
    if (g.dim() != 1) throw DimensionError("dirac: 1-d grids only");
    auto idx = static_cast<long>(std::lround((x - g.lower()) / g.spacing()));
    if (idx < 0 || idx >= static_cast<long>(g.n())) throw InvariantViolation("dirac: point outside the grid");
    GridMeasure mu = zero(g);
    mu.weights[idx] = 1.0;
    return mu;
}

bool GridMeasure::is_probability(double negative_tol, double mass_tol) const noexcept {
    return min_weight() >= -negative_tol && std::abs(mass() - 1.0) <= mass_tol;
}

void GridMeasure::check_probability(double negative_tol, double mass_tol) const {
    if (!is_probability(negative_tol, mass_tol)) {
        std::ostringstream os;
        os << "not a probability measure: mass=" << std::setprecision(17) << mass()
           << " min weight=" << min_weight();
        throw InvariantViolation(os.str());
    }
}

double GridMeasure::boundary_mass(std::size_t layers) const {
    const std::size_t n = grid.n();
    layers = std::min(layers, n / 2);
    double total = 0.0;
    for (std::size_t k = 0; k < grid.size(); ++k) {
        auto near = [&](std::size_t i) { return i < layers || i + layers >= n; };
        const bool edge = grid.dim() == 1 ? near(k) : (near(k / n) || near(k % n));
        if (edge) total += std::abs(weights[static_cast<Eigen::Index>(k)]);
    }
    return total;
}

GridMeasure& GridMeasure::operator+=(const GridMeasure& o) {
    require_same_grid(grid, o.grid, "GridMeasure::operator+=");
    weights += o.weights;
    return *this;
}

GridMeasure& GridMeasure::operator-=(const GridMeasure& o) {
    require_same_grid(grid, o.grid, "GridMeasure::operator-=");
    weights -= o.weights;
    return *this;
}

GridMeasure& GridMeasure::operator*=(double s) noexcept {
    weights *= s;
    return *this;
}

GridMeasure operator+(GridMeasure a, const GridMeasure& b) { return a += b; }
GridMeasure operator-(GridMeasure a, const GridMeasure& b) { return a -= b; }
GridMeasure operator*(double s, GridMeasure a) { return a *= s; }

Curve::Curve(std::vector<double> t, std::vector<GridMeasure> v) : times(std::move(t)), values(std::move(v)) {
    if (times.size() != values.size() || times.empty()) {
        throw InvariantViolation("Curve: need one measure per time and at least one node");
    }
    for (std::size_t i = 1; i < times.size(); ++i) {
        if (!(times[i] > times[i - 1])) throw InvariantViolation("Curve: times must be strictly increasing");
        require_same_grid(values[i].grid, values[0].grid, "Curve");
    }
}

std::size_t Curve::node_index(double t) const {
    const double tol = 1e-12 * std::max(1.0, std::abs(t));
    auto it = std::lower_bound(times.begin(), times.end(), t - tol);
    if (it != times.end() && std::abs(*it - t) <= tol) return static_cast<std::size_t>(it - times.begin());
    throw NodeError("Curve: time " + std::to_string(t) + " is not a mesh node");
}

void write_measure_csv(std::ostream& os, const GridMeasure& mu) {
    os << std::setprecision(17);
    const Grid& g = mu.grid;
    os << (g.dim() == 1 ? "x,weight\n" : "x,y,weight\n");
    for (std::size_t k = 0; k < g.size(); ++k) {
        const auto p = g.point(k);
        os << p[0] << ',';
        if (g.dim() == 2) os << p[1] << ',';
        os << mu.weights[static_cast<Eigen::Index>(k)] << '\n';
    }
}

void write_measure_csv(const std::string& path, const GridMeasure& mu) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot open " + path + " for writing");
    write_measure_csv(os, mu);
}

GridMeasure read_measure_csv(std::istream& is, const Grid& g) {
    std::string line;
    if (!std::getline(is, line)) throw InvariantViolation("measure CSV: missing header");
    Vector w(static_cast<Eigen::Index>(g.size()));
    std::size_t k = 0;
    const double tol = 1e-9 * g.spacing();
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        if (k >= g.size()) throw DimensionError("measure CSV: more rows than grid nodes");
        std::istringstream row(line);
        std::string field;
        std::vector<double> cols;
        while (std::getline(row, field, ',')) cols.push_back(std::stod(field));
        if (cols.size() != static_cast<std::size_t>(g.dim()) + 1) throw DimensionError("measure CSV: wrong column count");
        const auto p = g.point(k);
        for (int d = 0; d < g.dim(); ++d) {
            if (std::abs(cols[static_cast<std::size_t>(d)] - p[static_cast<std::size_t>(d)]) > tol) {
                throw DimensionError("measure CSV: coordinate mismatch at row " + std::to_string(k + 1));
            }
        }
        w[static_cast<Eigen::Index>(k++)] = cols.back();
    }
    if (k != g.size()) throw DimensionError("measure CSV: fewer rows than grid nodes");
    return {g, std::move(w)};
}

GridMeasure read_measure_csv(const std::string& path, const Grid& g) {
    std::ifstream is(path);
    if (!is) throw Error("cannot open " + path);
    return read_measure_csv(is, g);
}

void write_curve_csv(std::ostream& os, const Curve& curve, const std::string& value_name) {
    os << std::setprecision(17);
    os << "time,node," << value_name << '\n';
    for (std::size_t j = 0; j < curve.size(); ++j) {
        const GridMeasure& mu = curve.values[j];
        for (std::size_t k = 0; k < mu.grid.size(); ++k) {
            os << curve.times[j] << ',';
            if (mu.grid.dim() == 1) {
                os << mu.grid.coordinate(k);
            } else {
                os << k;
            }
            os << ',' << mu.weights[static_cast<Eigen::Index>(k)] << '\n';
        }
    }
}

void write_curve_csv(const std::string& path, const Curve& curve, const std::string& value_name) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot open " + path + " for writing");
    write_curve_csv(os, curve, value_name);
}

}  // namespace nlmarkov
