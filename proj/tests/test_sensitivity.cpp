#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <sstream>

#include "nlmarkov/error.hpp"
#include "nlmarkov/expm.hpp"
#include "nlmarkov/measures.hpp"
#include "nlmarkov/oracles.hpp"
#include "nlmarkov/sensitivity.hpp"
#include "support.hpp"

using namespace nlmarkov;
using Catch::Approx;

namespace {

LevyCoefficients triplet(double g, double b) { return {Matrix::Constant(1, 1, g), Vector::Constant(1, b), {}}; }

// b(mu) = -alpha * mean(mu), G = 0.02.
LevyFamily meanfield() {
    LevyFamily f;
    f.name = "meanfield";
    f.moments = {[](double x, double) { return x; }};
    f.coefficients = [](const Vector& c, double alpha, double) { return triplet(0.02, -alpha * c[0]); };
    f.derivative = [](const Vector& c, double alpha, double, int j) {
        LevyCoefficients d = LevyCoefficients::zero(1);
        d.b[0] = j == 0 ? -alpha : -c[0];
        return d;
    };
    return f;
}

LevyFamily heat() {
    LevyFamily f;
    f.name = "heat";
    f.coefficients = [](const Vector&, double, double) { return triplet(0.5, 0.0); };
    f.derivative = [](const Vector&, double, double, int) { return LevyCoefficients::zero(1); };
    return f;
}

// Measure-independent order-one family: drift alpha, symmetric nearest-neighbour jumps.
OrderOneFamily alpha_drift(const Grid& g) {
    const double h = g.spacing();
    OrderOneFamily f;
    f.name = "alpha_drift";
    f.drift = [](double, const Vector&, double alpha, double) { return alpha; };
    f.drift_derivative = [](double, const Vector&, double, double, int j) { return j == kAlpha ? 1.0 : 0.0; };
    f.jumps = [h](double, const Vector&, double, double) { return std::vector<Jump>{{{h, 0}, 0.4}, {{-h, 0}, 0.4}}; };
    f.jumps_derivative = [h](double, const Vector&, double, double, int) {
        return std::vector<Jump>{{{h, 0}, 0.0}, {{-h, 0}, 0.0}};
    };
    return f;
}

double sup_curve(const Curve& c) {
    double m = 0.0;
    for (const GridMeasure& v : c.values) m = std::max(m, v.weights.cwiseAbs().maxCoeff());
    return m;
}

GridMeasure dipole(const Grid& g, double x, double width) {
    return (1.0 / width) * (GridMeasure::dirac(g, x + width) - GridMeasure::dirac(g, x));
}

}  // namespace

TEST_CASE("no parameter dependence and no initial tangent gives zero", "[sensitivity]") {
    const Grid g(-8, 8, 64);
    const GridMeasure mu0 = GridMeasure::gaussian(g, 0, 1);
    const SensitivityRun run = run_sensitivity(Family(heat()), mu0, GridMeasure::zero(g), 1.0, 0.5, 0.05);
    CHECK(sup_curve(run.xi) == 0.0);
    CHECK(sup_curve(initial_data_derivative(Family(heat()), run.base, GridMeasure::zero(g), 0.5)) == 0.0);
}

TEST_CASE("parameter derivative against the variation-of-constants oracle", "[sensitivity]") {
    const Grid g(-4, 4, 64);
    const OrderOneFamily f = alpha_drift(g);
    const GridMeasure mu0 = GridMeasure::gaussian(g, -1.0, 0.5);
    const SensitivityRun run = run_sensitivity(Family(f), mu0, GridMeasure::zero(g), 0.5, 1.0, 0.05);

    // [mu; xi]' = [[A^T, 0], [D^T, A^T]] [mu; xi] with D = dA/dalpha, integrated by the dense oracle.
    const Matrix a = assemble_matrix(f, g, Vector(), 0.5, 0).matrix;
    const Matrix d = order_one_partial(f, g, Vector(), 0.5, 0, kAlpha);
    Matrix block = Matrix::Zero(128, 128);
    block.topLeftCorner(64, 64) = a;
    block.bottomRightCorner(64, 64) = a;
    block.topRightCorner(64, 64) = d;  // transposed by the oracle
    const Grid wide(-4, 12, 128);
    Vector w0 = Vector::Zero(128);
    w0.head(64) = mu0.weights;
    const Partition p = Partition::with_step(0, 1.0, 0.05);
    const Curve dense = dense_evolve(std::vector<Matrix>(p.steps(), block), GridMeasure(wide, w0), p);
    double worst = 0.0;
    for (std::size_t j = 0; j < p.steps() + 1; ++j) {
        worst = std::max(worst, (run.xi.values[j].weights - dense.values[j].weights.tail(64)).cwiseAbs().maxCoeff());
    }
    CHECK(worst <= 1e-6);
    CHECK(run.max_mass <= 1e-12);
}

TEST_CASE("mean-field parameter derivative", "[sensitivity]") {
    const Grid g(-6, 6, 256);
    const GridMeasure mu0 = GridMeasure::gaussian(g, 1.0, 0.5);
    const SensitivityRun run = run_sensitivity(Family(meanfield()), mu0, GridMeasure::zero(g), 1.0, 1.0, 1e-3);
    // d/dalpha of m0 e^{-alpha t} at alpha = t = 1.
    const double m0 = test::mean(mu0);
    CHECK(test::mean(run.xi.values.back()) == Approx(-m0 * std::exp(-1.0)).margin(1e-3));
    CHECK(run.max_mass <= 1e-8);
}

TEST_CASE("initial-data derivative", "[sensitivity]") {
    const Grid g(-6, 6, 256);
    const GridMeasure mu0 = GridMeasure::gaussian(g, 1.0, 0.5);
    const Family f(meanfield());
    const KineticSolution base = solve_kinetic(f, mu0, 1.0, 1e-3);

    SECTION("a dipole shifting the mean decays like the linearised moment ODE") {
        // Smooth dipole: Dirac spikes ring under the spectral shift and leak mass into the padding.
        const GridMeasure xi = 4.0 * (GridMeasure::gaussian(g, 1.25, 0.5) - GridMeasure::gaussian(g, 1.0, 0.5));
        const double m = test::mean(xi);
        REQUIRE(xi.mass() == Approx(0.0).margin(1e-12));
        REQUIRE(m == Approx(1.0).margin(1e-6));
        const Curve c = initial_data_derivative(f, base, xi, 1.0);
        CHECK(test::mean(c.values.back()) == Approx(m * std::exp(-1.0)).margin(1e-3));
        CHECK(max_mass(c) <= 1e-8);
    }
    SECTION("superposition") {
        const GridMeasure a = dipole(g, 0.5, 0.25);
        const GridMeasure b = dipole(g, 1.5, 0.5);
        const Curve ca = initial_data_derivative(f, base, a, 1.0);
        const Curve cb = initial_data_derivative(f, base, b, 1.0);
        const Curve cab = initial_data_derivative(f, base, 3.0 * a - 2.0 * b, 1.0);
        double worst = 0.0;
        for (std::size_t j = 0; j < cab.size(); j += 50) {
            worst = std::max(worst, (cab.values[j].weights - 3.0 * ca.values[j].weights + 2.0 * cb.values[j].weights)
                                        .cwiseAbs()
                                        .maxCoeff());
        }
        CHECK(worst <= 1e-10 * sup_curve(cab));
    }
    SECTION("nonzero mass is rejected") {
        CHECK_THROWS_AS(initial_data_derivative(f, base, GridMeasure::dirac(g, 0.0), 1.0), InvariantViolation);
    }
}

TEST_CASE("linear families propagate the initial tangent by the dual propagator", "[sensitivity]") {
    const Grid g(-8, 8, 64);
    const GridMeasure mu0 = GridMeasure::gaussian(g, 0, 1);
    const KineticSolution base = solve_kinetic(Family(heat()), mu0, 0.5, 0.05);
    const GridMeasure xi = GridMeasure::gaussian(g, 1, 1) - mu0;
    const Curve c = initial_data_derivative(Family(heat()), base, xi, 0.5);
    const Partition p = Partition::with_step(0, 0.5, 0.05);
    const PropagatorHandle u = build_spectral(heat(), g, Curve(), p);
    // Step by step, the padded transform truncates the spill-over once per step.
    Vector stepped = xi.weights;
    for (std::size_t j = 0; j < p.steps(); ++j) stepped = u.apply_dual(stepped, j + 1, j);
    CHECK((c.values.back().weights - stepped).cwiseAbs().maxCoeff() <= 1e-15);
    const GridMeasure collapsed = dual_apply(u, xi, 0.5, 0.0);
    CHECK((c.values.back().weights - collapsed.weights).cwiseAbs().maxCoeff() <= 1e-9);
}

TEST_CASE("tangent consistency with the nonlinear flow", "[sensitivity][property]") {
    const Grid g(-6, 6, 96);
    const GridMeasure mu0 = GridMeasure::gaussian(g, 1.0, 0.5);
    const GridMeasure xi = GridMeasure::gaussian(g, 1.5, 0.5) - mu0;
    const Family f(meanfield());
    SolverOptions o;
    o.tol = 1e-13;
    const KineticSolution base = solve_kinetic(f, mu0, 1.0, 0.01, o);
    const GridMeasure tangent = initial_data_derivative(f, base, xi, 1.0).values.back();
    std::vector<double> rel;
    for (double eps : {1e-2, 1e-3}) {
        const GridMeasure moved = solve_kinetic(f, mu0 + eps * xi, 1.0, 0.01, o).curve.values.back();
        rel.push_back(dual_norm(moved - base.curve.values.back() - eps * tangent, 2) / eps);
    }
    CHECK(rel[0] / rel[1] >= 5.0);
}

TEST_CASE("tangent propagator composes on time nodes", "[sensitivity][property]") {
    const Grid g(-6, 6, 96);
    const GridMeasure mu0 = GridMeasure::gaussian(g, 1.0, 0.5);
    const GridMeasure xi = GridMeasure::gaussian(g, 1.5, 0.5) - mu0;
    const Family f(meanfield());
    SolverOptions o;
    o.tol = 1e-13;
    const KineticSolution base = solve_kinetic(f, mu0, 1.0, 0.01, o);
    const Curve whole = initial_data_derivative(f, base, xi, 1.0);
    // Restart the base flow and the tangent from t = 0.4 (the family is autonomous).
    const KineticSolution tail = solve_kinetic(f, base.curve.at(0.4), 0.6, 0.01, o);
    const Curve second = initial_data_derivative(f, tail, whole.at(0.4), 0.6);
    const double scale = whole.values.back().weights.cwiseAbs().maxCoeff();
    CHECK((second.values.back().weights - whole.values.back().weights).cwiseAbs().maxCoeff() <= 1e-8 * scale);
}

TEST_CASE("finite-difference validation", "[sensitivity]") {
    const Grid g(-6, 6, 96);
    const GridMeasure mu0 = GridMeasure::gaussian(g, 1.0, 0.5);
    SolverOptions o;
    o.tol = 1e-12;

    SECTION("parameter-free family with fixed initial law") {
        const FdReport r = fd_validate(Family(heat()), [&](double) { return mu0; }, 1.0, {1e-2, 1e-3}, 0.5, 0.05,
                                       {0.25, 0.5}, o);
        for (const FdRow& row : r.rows) CHECK(row.defect == 0.0);
        CHECK(r.passed);
    }
    SECTION("order-one family linear in alpha") {
        const Grid small(-4, 4, 64);
        const GridMeasure m = GridMeasure::gaussian(small, -1.0, 0.5);
        const FdReport r = fd_validate(Family(alpha_drift(small)), [&](double) { return m; }, 0.5, {1e-2, 1e-3}, 1.0,
                                       0.05, {0.5, 1.0}, o);
        CHECK(r.rows[1].defect <= 1e-4);
        CHECK(r.passed);
    }
    SECTION("mean-field family shrinks quadratically") {
        const FdReport r = fd_validate(Family(meanfield()), [&](double) { return mu0; }, 1.0, {1e-2, 1e-3}, 1.0, 0.01,
                                       {1.0}, o);
        CHECK(r.rows[0].defect / r.rows[1].defect >= 50.0);
        CHECK(r.fitted_order == Approx(2.0).margin(0.2));
        CHECK(r.integral_defect <= 1e-3 * r.integral_scale);
        CHECK(r.passed);
    }
    SECTION("h_list must decrease") {
        CHECK_THROWS_AS(fd_validate(Family(heat()), [&](double) { return mu0; }, 1.0, {1e-3, 1e-2}, 0.5, 0.05, {0.5}, o),
                        InvariantViolation);
    }
}

TEST_CASE("sensitivity CSV layout", "[sensitivity]") {
    const Grid g(0, 1, 8);
    const Curve c({0.0, 0.5}, {GridMeasure::zero(g), GridMeasure::zero(g)});
    std::ostringstream os;
    write_sensitivity_csv(os, c);
    CHECK(os.str().rfind("time,node,xi_weight\n", 0) == 0);
}
