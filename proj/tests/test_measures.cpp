#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <sstream>

#include "nlmarkov/error.hpp"
#include "nlmarkov/measures.hpp"
#include "support.hpp"

using namespace nlmarkov;
using Catch::Approx;

TEST_CASE("pair against constants", "[measures]") {
    const Grid g(-5, 5, 64);
    const GridMeasure mu = GridMeasure::gaussian(g, 0.3, 1.1);
    CHECK(pair(TestFunction::constant(g, 1.0), mu) == Approx(1.0).margin(1e-14));
    CHECK(pair(TestFunction::constant(g, 0.0), mu) == 0.0);
}

TEST_CASE("pair of x against a centred Gaussian", "[measures]") {
    const Grid g(-5, 5, 512);
    // Quadrature oracle: density samples times h, normalised, paired with x.
    const double h = g.spacing();
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < g.n(); ++i) {
        const double x = g.coordinate(i);
        const double w = std::exp(-0.5 * x * x) * h;
        num += x * w;
        den += w;
    }
    // The lattice excludes +5, so the oracle carries the same small asymmetry.
    const double value = pair(TestFunction::from(g, [](double x) { return x; }), GridMeasure::gaussian(g, 0.0, 1.0));
    CHECK(value == Approx(num / den).margin(1e-12));
    CHECK(std::abs(value) <= 1e-6);
}

TEST_CASE("pair is bilinear", "[measures][property]") {
    test::Rng rng(1);
    const Grid g(-3, 3, 40);
    for (int trial = 0; trial < 20; ++trial) {
        const TestFunction f(g, test::random_vector(40, rng));
        const TestFunction k(g, test::random_vector(40, rng));
        const GridMeasure mu = test::random_probability(g, rng);
        const double a = 1.7, b = -0.4;
        const double lhs = pair(TestFunction(g, a * f.values + b * k.values), mu);
        const double rhs = a * pair(f, mu) + b * pair(k, mu);
        CHECK(std::abs(lhs - rhs) <= 1e-12 * std::max(1.0, std::abs(rhs)));
    }
}

TEST_CASE("ck_norm of constants and smooth functions", "[measures]") {
    const Grid g(-2, 2, 32);
    for (int k = 0; k <= 2; ++k) CHECK(ck_norm(TestFunction::constant(g, -3.5), k) == Approx(3.5));

    const Grid fine(-M_PI, M_PI, 4096);
    CHECK(ck_norm(TestFunction::from(fine, [](double x) { return std::sin(x); }), 1) == Approx(2.0).margin(1e-3));

    const Grid unit(-1, 1, 4096);
    CHECK(ck_norm(TestFunction::from(unit, [](double x) { return 0.5 * x * x; }), 2) == Approx(2.5).margin(1e-3));
}

TEST_CASE("dual_norm of identical measures is zero", "[measures]") {
    const Grid g(-3, 3, 24);
    const GridMeasure mu = GridMeasure::gaussian(g, 0.0, 1.0);
    for (int k = 0; k <= 2; ++k) CHECK(dual_norm(mu, mu, k) == 0.0);
}

TEST_CASE("dual_norm k=1 between neighbouring Diracs", "[measures]") {
    const double h = 0.2;
    const Grid g(-1.0, 1.4, 12);
    REQUIRE(g.spacing() == Approx(h));
    const GridMeasure a = GridMeasure::dirac(g, 0.0);
    const GridMeasure b = GridMeasure::dirac(g, h);
    // Brute force over the budget split: for fixed a0 the two-point value is min(2 a0, h (1 - a0)).
    double best = 0.0;
    for (int i = 0; i <= 200000; ++i) {
        const double a0 = i / 200000.0;
        best = std::max(best, std::min(2 * a0, h * (1 - a0)));
    }
    CHECK(best == Approx(2 * h / (2 + h)).margin(1e-5));
    CHECK(dual_norm(a, b, 1) == Approx(best).margin(1e-5));
    CHECK(dual_norm(a, b, 1) == Approx(2 * h / (2 + h)).margin(1e-10));
}

TEST_CASE("dual_norm k=0 equals the best sign vector", "[measures]") {
    test::Rng rng(2);
    const Grid g(0, 1, 10);
    for (int trial = 0; trial < 5; ++trial) {
        const GridMeasure mu = test::random_probability(g, rng);
        const GridMeasure eta = test::random_probability(g, rng);
        const Vector d = mu.weights - eta.weights;
        double best = 0.0;
        for (unsigned s = 0; s < (1u << 10); ++s) {
            double v = 0.0;
            for (int i = 0; i < 10; ++i) v += ((s >> i) & 1u ? 1.0 : -1.0) * d[i];
            best = std::max(best, v);
        }
        CHECK(best <= 2.0);
        CHECK(dual_norm(mu, eta, 0) == Approx(best).margin(1e-12));
    }
}

TEST_CASE("dual_norm is a metric, monotone in k and dual to ck_norm", "[measures][property]") {
    test::Rng rng(3);
    const Grid g(-2, 2, 16);
    for (int trial = 0; trial < 6; ++trial) {
        const GridMeasure a = test::random_probability(g, rng);
        const GridMeasure b = test::random_probability(g, rng);
        const GridMeasure c = test::random_probability(g, rng);
        double previous = std::numeric_limits<double>::infinity();
        for (int k = 0; k <= 2; ++k) {
            const double ab = dual_norm(a, b, k);
            CHECK(ab == dual_norm(b, a, k));
            CHECK(ab > 0.0);
            CHECK(ab <= dual_norm(a, c, k) + dual_norm(c, b, k) + 1e-10);
            CHECK(ab <= previous + 1e-12);
            if (k == 0) CHECK(ab == Approx((a.weights - b.weights).lpNorm<1>()).epsilon(1e-9));
            else CHECK(ab <= dual_norm_bound(a, b) + 1e-12);
            previous = ab;
            for (int s = 0; s < 5; ++s) {
                const TestFunction f(g, test::random_vector(16, rng));
                CHECK(std::abs(pair(f, a - b)) <= ck_norm(f, k) * ab + 1e-12);
            }
        }
    }
}

TEST_CASE("dual_norm witness attains the value", "[measures]") {
    test::Rng rng(4);
    const Grid g(-2, 2, 16);
    const GridMeasure a = test::random_probability(g, rng);
    const GridMeasure b = test::random_probability(g, rng);
    const DualNormResult r = dual_norm_detail(a, b, 2);
    const TestFunction w(g, r.witness);
    CHECK(std::abs(pair(w, a - b)) == Approx(r.value).margin(1e-10));
    CHECK(ck_norm(w, 2) <= 1.0 + 1e-9);
}

TEST_CASE("grid and measure invariants", "[measures]") {
    CHECK_THROWS_AS(Grid(1, 0, 16), InvariantViolation);
    CHECK_THROWS_AS(Grid(0, 1, 4), InvariantViolation);
    const Grid g(0, 1, 16);
    CHECK_FALSE(GridMeasure(g, Vector::Constant(16, -0.1)).is_probability());
    CHECK_THROWS_AS(GridMeasure(g, Vector::Constant(16, 0.1)).check_probability(), InvariantViolation);
    CHECK_THROWS_AS(dual_norm(GridMeasure::zero(g), GridMeasure::zero(Grid(0, 2, 16)), 1), DimensionError);
    CHECK_THROWS_AS(dual_norm(GridMeasure::zero(g), GridMeasure::zero(g), 3), InvariantViolation);
}

TEST_CASE("measure CSV round trip", "[measures]") {
    const Grid g(-2, 2, 32);
    const GridMeasure mu = GridMeasure::gaussian(g, 0.1, 0.7);
    std::stringstream ss;
    write_measure_csv(ss, mu);
    CHECK(ss.str().rfind("x,weight\n", 0) == 0);
    const GridMeasure back = read_measure_csv(ss, g);
    CHECK((back.weights - mu.weights).cwiseAbs().maxCoeff() == 0.0);
}
