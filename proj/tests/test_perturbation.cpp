#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "nlmarkov/error.hpp"
#include "nlmarkov/expm.hpp"
#include "nlmarkov/perturbation.hpp"
#include "support.hpp"

using namespace nlmarkov;
using Catch::Approx;

namespace {

double sup(const Vector& v) { return v.cwiseAbs().maxCoeff(); }

std::vector<OperatorPtr> constant_terms(const Matrix& f, std::size_t count) {
    return std::vector<OperatorPtr>(count, std::make_shared<DenseOperator>(f));
}

PropagatorHandle constant_base(const Matrix& a, std::size_t steps, double r = 1.0) {
    return PropagatorHandle::from_generators(std::vector<Matrix>(steps, a), Partition::uniform(0, r, steps));
}

}  // namespace

TEST_CASE("zero perturbation returns the base propagator", "[perturbation]") {
    test::Rng rng(12);
    const Matrix a = test::random_rate_matrix(8, rng);
    const PropagatorHandle u = constant_base(a, 10);
    const PerturbedHandle h(u, std::vector<OperatorPtr>(11, FiniteRankOperator::zero(8)));
    const Vector f = test::random_vector(8, rng);
    CHECK(sup(perturbed_propagate(h, f, 0, 1).value - u.apply(f, 0, 10)) == 0.0);
    CHECK(sup(dual_perturbed(h, f, 1, 0) - u.apply_dual(f, 10, 0)) == 0.0);
}

TEST_CASE("scalar sandbox", "[perturbation]") {
    const PropagatorHandle u = constant_base(Matrix::Constant(1, 1, 0.5), 1000);
    const PerturbedHandle h(u, constant_terms(Matrix::Constant(1, 1, 0.25), 1001));
    // Closed form of y' = (a + F) y: e^{0.75}.
    const double value = perturbed_propagate(h, Vector::Ones(1), 0, 1).value[0];
    CHECK(value == Approx(std::exp(0.75)).margin(1e-6));
    CHECK(value == Approx(2.11700).margin(1e-5));
    // 1x1 is self-adjoint: the dual matches the forward value.
    CHECK(dual_perturbed(h, Vector::Ones(1), 1, 0)[0] == Approx(value).margin(1e-12));
}

TEST_CASE("commuting perturbation matches the matrix exponential", "[perturbation]") {
    test::Rng rng(13);
    const Matrix a = 0.5 * test::random_rate_matrix(8, rng);
    const Matrix f = 0.2 * a + 0.05 * a * a + 0.1 * Matrix::Identity(8, 8);
    const PerturbedHandle h(constant_base(a, 2000), constant_terms(f, 2001));
    const Vector v = test::random_vector(8, rng);
    CHECK(sup(perturbed_propagate(h, v, 0, 1).value - expm(a + f) * v) <= 1e-8);
}

TEST_CASE("perturbed propagator is an exact transpose pair and composes", "[perturbation][property]") {
    test::Rng rng(14);
    const Matrix a = test::random_rate_matrix(8, rng);
    std::vector<OperatorPtr> terms;
    for (int m = 0; m <= 20; ++m) {
        terms.push_back(std::make_shared<FiniteRankOperator>(test::random_vector(8, rng), test::random_vector(8, rng, 0.3)));
    }
    for (Quadrature q : {Quadrature::trapezoid, Quadrature::left_endpoint}) {
        PerturbationOptions o;
        o.quadrature = q;
        const PerturbedHandle h(constant_base(a, 20), terms, o);
        for (int trial = 0; trial < 5; ++trial) {
            const Vector f = test::random_vector(8, rng);
            const Vector xi = test::random_vector(8, rng);
            const double lhs = perturbed_propagate(h, f, 0.2, 0.9).value.dot(xi);
            const double rhs = f.dot(dual_perturbed(h, xi, 0.9, 0.2));
            CHECK(std::abs(lhs - rhs) <= 1e-10 * std::max(1.0, std::abs(lhs)));
            const Vector whole = perturbed_propagate(h, f, 0.0, 1.0).value;
            const Vector split = perturbed_propagate(h, perturbed_propagate(h, f, 0.5, 1.0).value, 0.0, 0.5).value;
            CHECK(sup(whole - split) <= 1e-10 * sup(whole));
        }
    }
}

TEST_CASE("Picard fixed point and Dyson partial sums", "[perturbation][property]") {
    test::Rng rng(15);
    const Matrix a = test::random_rate_matrix(8, rng);
    const Matrix fm = 0.3 * test::random_vector(8, rng) * test::random_vector(8, rng).transpose();
    const auto op = std::make_shared<DenseOperator>(fm);
    const PerturbedHandle h(constant_base(a, 50), std::vector<OperatorPtr>(51, op));
    const Vector f = test::random_vector(8, rng);
    const PerturbedResult full = perturbed_propagate(h, f, 0, 1);
    CHECK(full.report.ratio < 1.0);
    for (int m = 1; m <= 8; ++m) {
        const double gap = sup(full.value - dyson_partial_sum(h, f, 0, 1, m));
        // Markov propagators have sup-norm 1.
        CHECK(gap <= series_tail_bound(1.0, op->norm_bound(), 1.0, m) * sup(f) + 1e-12);
    }
}

TEST_CASE("series tail bound", "[perturbation]") {
    CHECK(series_tail_bound(1, 1, 1, 5) == Approx(std::exp(1.0) / 720.0).epsilon(1e-14));
    CHECK(series_tail_bound(1, 1, 1, 200) < 1e-30);
    for (int m : {0, 3, 50}) CHECK(series_tail_bound(2, 3, 0, m) == 0.0);
    CHECK_THROWS_AS(series_tail_bound(1, 1, -1, 2), InvariantViolation);
}

TEST_CASE("non-contracting Picard iteration", "[perturbation]") {
    PerturbationOptions o;
    o.max_sweeps = 5;
    o.max_bisections = 0;
    const PerturbedHandle h(constant_base(Matrix::Zero(1, 1), 10), constant_terms(Matrix::Constant(1, 1, 50.0), 11), o);
    CHECK_THROWS_AS(perturbed_propagate(h, Vector::Ones(1), 0, 1), DivergenceError);

    o.max_sweeps = 200;
    o.max_bisections = 8;
    const PerturbedHandle b(constant_base(Matrix::Zero(1, 1), 64), constant_terms(Matrix::Constant(1, 1, 8.0), 65), o);
    const PerturbedResult r = perturbed_propagate(b, Vector::Ones(1), 0, 1);
    CHECK(std::isfinite(r.value[0]));
}

TEST_CASE("weak equation of the dual perturbed curve", "[perturbation]") {
    const Grid g(-4, 4, 32);
    const auto phi = [](double x, double) { return std::sin(x); };
    const OrderOneFamily fam = test::linear_drift_family(g, 0.5, 0.8, 0.3, phi);
    const GridMeasure mu = GridMeasure::gaussian(g, 0.2, 1.0);
    const Matrix a = assemble_matrix(fam, mu).matrix;
    const OperatorPtr fop = dual_representation(Family(fam), mu);
    const Vector test_fn = g.sample([](double x) { return std::exp(-0.5 * x * x); });
    const GridMeasure xi0 = GridMeasure::gaussian(g, 0.5, 0.7) - GridMeasure::gaussian(g, -0.5, 0.7);

    auto residual = [&](double delta) {
        const std::size_t steps = static_cast<std::size_t>(std::lround(1.0 / delta));
        const PerturbedHandle h(constant_base(a, steps), std::vector<OperatorPtr>(steps + 1, fop));
        const Curve c = dual_perturbed_curve(h, xi0, 0, 1);
        const Vector lg = a * test_fn + fop->apply(test_fn);
        double worst = 0.0;
        for (std::size_t j = 0; j + 1 < c.size(); ++j) {
            const double lhs = test_fn.dot(c.values[j + 1].weights - c.values[j].weights) / delta;
            worst = std::max(worst, std::abs(lhs - lg.dot(c.values[j].weights)));
        }
        return worst;
    };
    const double r3 = residual(1e-3);
    CHECK(r3 <= 10 * 1e-3);
    CHECK(residual(2e-3) / r3 == Approx(2.0).epsilon(0.2));
}
