#pragma once

#include <array>
#include <complex>
#include <functional>
#include <string>
#include <variant>
#include <vector>

#include "nlmarkov/grid.hpp"
#include "nlmarkov/operators.hpp"
#include "nlmarkov/spectral.hpp"

namespace nlmarkov {

/// Moment functional phi_j, evaluated at (x, y); y is 0 in 1-d.
using MomentFn = std::function<double(double, double)>;

/// Index passed to derivative callbacks to request d/dalpha instead of d/dc_j.
inline constexpr int kAlpha = -1;

/// Atom of a jump measure: displacement y (second entry 0 in 1-d) and rate.
struct Jump {
    std::array<double, 2> y{};
    double rate = 0.0;
};

/// Lévy–Khintchine triplet (G, b, nu) in dimension 1 or 2.
struct LevyCoefficients {
    Matrix G;
    Vector b;
    std::vector<Jump> nu;

    int dim() const noexcept { return static_cast<int>(b.size()); }
    static LevyCoefficients zero(int dim);
};

/// Checks G symmetric positive semidefinite, finite nonnegative rates, no atom at 0.
void validate(const LevyCoefficients& c);

/// Spatially homogeneous generator family whose triplet depends on mu only
/// through the moments c_j = pair(phi_j, mu).
struct LevyFamily {
    std::string name;
    int dim = 1;
    std::vector<MomentFn> moments;
    double alpha = 1.0;
    std::function<LevyCoefficients(const Vector& c, double alpha, double t)> coefficients;
    /// Partial derivative of the triplet in c_j, or in alpha for j == kAlpha. Optional.
    std::function<LevyCoefficients(const Vector& c, double alpha, double t, int j)> derivative;
};

/// Drift plus jump generator of order at most one on a 1-d grid:
/// (A f)(x) = b(x) f'(x) + sum_y [f(x + y) - f(x)] nu(x, y).
struct OrderOneFamily {
    std::string name;
    std::vector<MomentFn> moments;
    double alpha = 1.0;
    /// Radius of the displacement lattice; 0 means the grid width.
    double jump_radius = 0.0;
    std::function<double(double x, const Vector& c, double alpha, double t)> drift;
    std::function<std::vector<Jump>(double x, const Vector& c, double alpha, double t)> jumps;
    /// Partials in c_j (or alpha for kAlpha). The jump partial must list the same atoms as `jumps`.
    std::function<double(double x, const Vector& c, double alpha, double t, int j)> drift_derivative;
    std::function<std::vector<Jump>(double x, const Vector& c, double alpha, double t, int j)> jumps_derivative;
};

using Family = std::variant<LevyFamily, OrderOneFamily>;

const std::vector<MomentFn>& moment_functions(const Family& f);
double family_alpha(const Family& f);
void set_family_alpha(Family& f, double alpha);

/// Grid samples of the moment functionals, one column per functional.
Matrix sample_moments(const std::vector<MomentFn>& moments, const Grid& g);
/// c_j = pair(phi_j, mu).
Vector moment_values(const std::vector<MomentFn>& moments, const GridMeasure& mu);

LevyCoefficients levy_coefficients(const LevyFamily& f, const GridMeasure& mu, double t = 0.0);

/// eta(xi) = -1/2 (G xi, xi) + i (b, xi) + sum_y [e^{i(xi,y)} - 1 - i(xi,y) 1{|y|<1}] nu(y).
/// Validates the triplet first.
ComplexVector levy_symbol(const LevyCoefficients& c, const std::vector<std::array<double, 2>>& xi);
ComplexVector levy_symbol(const LevyCoefficients& c, const Vector& xi);
std::complex<double> levy_symbol(const LevyCoefficients& c, double xi);
/// Same formula without validation; the symbol is linear in the triplet, so this
/// evaluates derivative triplets (indefinite G, signed rates).
ComplexVector symbol_increment(const LevyCoefficients& c, const std::vector<std::array<double, 2>>& xi);

/// Apply a triplet as an operator on grid functions (or, with adjoint, on measures).
Vector apply_levy(const SpectralTransform& tr, const LevyCoefficients& c, const Vector& values, bool adjoint = false);

struct GeneratorMatrix {
    Matrix matrix;
    /// Rate of jumps and drift pushed off the grid and suppressed, weighted by mu.
    double lost_rate = 0.0;
};

/// Upwind drift plus nearest-node jump quadrature. Off-grid moves are suppressed
/// (their rate is logged), which keeps every row summing to zero.
GeneratorMatrix assemble_matrix(const OrderOneFamily& f, const GridMeasure& mu, double t = 0.0);
/// Assembly from given moments; `mu` (optional) weights the lost-rate diagnostic.
GeneratorMatrix assemble_matrix(const OrderOneFamily& f, const Grid& g, const Vector& c, double alpha, double t,
                                const GridMeasure* mu = nullptr);
/// dA/dc_j (or dA/dalpha), with the upwind orientation frozen at the base drift.
Matrix order_one_partial(const OrderOneFamily& f, const Grid& g, const Vector& c, double alpha, double t, int j);
/// d eta / dc_j (or d eta / dalpha) as a triplet.
LevyCoefficients levy_partial(const LevyFamily& f, const Vector& c, double alpha, double t, int j);

/// D_xi A[mu] = sum_j pair(phi_j, xi) dA/dc_j.
Matrix gateaux(const OrderOneFamily& f, const GridMeasure& mu, const GridMeasure& xi, double t = 0.0);
LevyCoefficients gateaux(const LevyFamily& f, const GridMeasure& mu, const GridMeasure& xi, double t = 0.0);

/// F[mu] g = sum_j phi_j pair(dA/dc_j g, mu), so that pair(D_xi A[mu] g, mu) = pair(F[mu] g, xi).
OperatorPtr dual_representation(const Family& f, const GridMeasure& mu, double t = 0.0);

/// Coefficient distance ||G1-G2|| + |b1-b2| + sum min(1,|y|^2) |nu1-nu2|.
double levy_coefficient_distance(const LevyCoefficients& a, const LevyCoefficients& b);

/// sup_x |b_a - b_b| + sum min(1,|y|) |nu_a - nu_b| at the moments of mu.
double order_one_distance(const OrderOneFamily& a, const OrderOneFamily& b, const GridMeasure& mu, double t = 0.0);

struct LipschitzEstimate {
    double kappa = 0.0;
    std::size_t argmax = 0;
    std::vector<double> ratios;  ///< one per evaluated pair; skipped pairs omitted
    std::size_t skipped = 0;
};

/// max over pairs of coefficient distance / dual_norm(mu, eta, 2). Coincident pairs are skipped.
LipschitzEstimate estimate_levy_lipschitz(const LevyFamily& f,
                                          const std::vector<std::pair<GridMeasure, GridMeasure>>& samples,
                                          double t = 0.0);

struct OrderOneCheckOptions {
    double t = 0.0;
    /// Lipschitz ratios above this fail the continuity flag.
    double lipschitz_cap = 1e3;
};

struct OrderOneReport {
    double boundedness = 0.0;           ///< sup sum min(1,|y|) nu
    double gradient_boundedness = 0.0;  ///< sup sum min(1,|y|) |d nu / dx|
    double jump_radius = 0.0;
    /// Smallest lattice K with both tails below eps, or a negative value if none.
    double tightness_k = -1.0;
    double tail_at_largest_k = 0.0;
    double gradient_tail_at_largest_k = 0.0;
    double small_ball = 0.0;  ///< sup int_{|y| < 1/K} |y| nu with K the jump radius
    double lipschitz_nu = 0.0;
    double lipschitz_b = 0.0;
    bool boundedness_pass = false;
    bool tightness_pass = false;
    bool lipschitz_pass = false;

    bool all_pass() const noexcept { return boundedness_pass && tightness_pass && lipschitz_pass; }
};

/// Numeric version of the boundedness / tightness / Lipschitz conditions over
/// the grid nodes and sample measures. Admissible cut radii K lie strictly
/// inside the displacement lattice; tightness is judged at the largest one.
OrderOneReport validate_order_one_conditions(const OrderOneFamily& f, double eps,
                                             const std::vector<GridMeasure>& samples,
                                             const OrderOneCheckOptions& options = {});

/// The x-independent Lévy family with G = 0 rewritten in order-one form
/// (compensator folded into the drift).
OrderOneFamily as_order_one(const LevyFamily& f);

}  // namespace nlmarkov
