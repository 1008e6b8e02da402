#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace nlmarkov {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Uniform lattice on [lower, upper)^dim with n nodes per axis.
///
/// Node i sits at lower + i*h with h = (upper - lower)/n, so the upper end is
/// excluded; this is the periodic-padding convention the spectral engine relies on.
/// Flat indices in 2-d are row-major: flat = i0 * n + i1.
class Grid {
public:
    Grid(double lower, double upper, std::size_t n, int dim = 1);

    double lower() const noexcept { return lower_; }
    double upper() const noexcept { return upper_; }
    std::size_t n() const noexcept { return n_; }
    int dim() const noexcept { return dim_; }
    double spacing() const noexcept { return (upper_ - lower_) / static_cast<double>(n_); }
    /// Total node count n^dim.
    std::size_t size() const noexcept { return dim_ == 1 ? n_ : n_ * n_; }

    double coordinate(std::size_t i) const noexcept { return lower_ + spacing() * static_cast<double>(i); }
    std::array<double, 2> point(std::size_t flat) const noexcept;
    /// Node coordinates along one axis.
    Vector axis() const;

    /// Samples fn at every node; in 1-d the second argument is 0.
    Vector sample(const std::function<double(double, double)>& fn) const;
    Vector sample(const std::function<double(double)>& fn) const;

    bool operator==(const Grid& other) const noexcept = default;

private:
    double lower_;
    double upper_;
    std::size_t n_;
    int dim_;
};

void require_same_grid(const Grid& a, const Grid& b, const char* where);

/// Node values of a test function together with its declared smoothness class.
struct TestFunction {
    Grid grid;
    Vector values;
    int declared_order = 2;

    TestFunction(Grid g, Vector v, int order = 2);

    static TestFunction constant(const Grid& g, double c, int order = 2);
    static TestFunction from(const Grid& g, const std::function<double(double)>& fn, int order = 2);
    static TestFunction from(const Grid& g, const std::function<double(double, double)>& fn, int order = 2);
};

/// Quadrature-weighted node masses: w_i = density(x_i) * h^dim.
///
/// The same type holds probability measures and signed dual vectors; only
/// `check_probability` distinguishes the roles.
struct GridMeasure {
    Grid grid;
    Vector weights;

    GridMeasure(Grid g, Vector w);

    static GridMeasure zero(const Grid& g);
    /// Normalised discretised normal density (product density in 2-d).
    static GridMeasure gaussian(const Grid& g, double mean, double stddev);
    /// Normalised measure from density samples.
    static GridMeasure from_density(const Grid& g, const std::function<double(double)>& density);
    /// Unit mass at the node nearest x.
    static GridMeasure dirac(const Grid& g, double x);

    double mass() const noexcept { return weights.sum(); }
    double min_weight() const noexcept { return weights.minCoeff(); }
    bool is_probability(double negative_tol = 1e-12, double mass_tol = 1e-9) const noexcept;
    /// Throws InvariantViolation unless this is a probability measure within the tolerances.
    void check_probability(double negative_tol = 1e-12, double mass_tol = 1e-9) const;
    /// Mass on nodes within `layers` nodes of the lattice boundary.
    double boundary_mass(std::size_t layers = 5) const;

    GridMeasure& operator+=(const GridMeasure& o);
    GridMeasure& operator-=(const GridMeasure& o);
    GridMeasure& operator*=(double s) noexcept;
};

GridMeasure operator+(GridMeasure a, const GridMeasure& b);
GridMeasure operator-(GridMeasure a, const GridMeasure& b);
GridMeasure operator*(double s, GridMeasure a);

/// Measures on a strictly increasing time mesh, all on one grid.
struct Curve {
    std::vector<double> times;
    std::vector<GridMeasure> values;

    Curve() = default;
    Curve(std::vector<double> t, std::vector<GridMeasure> v);

    std::size_t size() const noexcept { return times.size(); }
    const Grid& grid() const { return values.front().grid; }
    /// Index of the mesh node equal to t (within 1e-12 relative), or throws NodeError.
    std::size_t node_index(double t) const;
    const GridMeasure& at(double t) const { return values[node_index(t)]; }
};

/// CSV with header `x,weight` (or `x,y,weight`), 17 significant digits, LF line ends.
void write_measure_csv(std::ostream& os, const GridMeasure& mu);
void write_measure_csv(const std::string& path, const GridMeasure& mu);
/// Reads a CSV written by write_measure_csv; coordinates must match the grid nodes.
GridMeasure read_measure_csv(std::istream& is, const Grid& g);
GridMeasure read_measure_csv(const std::string& path, const Grid& g);

/// Long-format curve CSV: `time,node,<value_name>` with node the coordinate (1-d) or flat index (2-d).
void write_curve_csv(std::ostream& os, const Curve& curve, const std::string& value_name = "weight");
void write_curve_csv(const std::string& path, const Curve& curve, const std::string& value_name = "weight");

}  // namespace nlmarkov
