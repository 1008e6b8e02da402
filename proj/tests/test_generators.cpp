#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>

#include "nlmarkov/error.hpp"
#include "nlmarkov/generators.hpp"
#include "nlmarkov/measures.hpp"
#include "support.hpp"

using namespace nlmarkov;
using Catch::Approx;

namespace {

LevyCoefficients triplet(double g, double b, std::vector<Jump> nu = {}) {
    return {Matrix::Constant(1, 1, g), Vector::Constant(1, b), std::move(nu)};
}

// Drift 2 + sin(c) cos(x), jumps +-h at rate 0.3 + 0.1 c^2, with c the mean.
OrderOneFamily smooth_family(const Grid& g) {
    const double h = g.spacing();
    OrderOneFamily f;
    f.name = "smooth";
    f.moments = {[](double x, double) { return x; }};
    f.drift = [](double x, const Vector& c, double, double) { return 2.0 + std::sin(c[0]) * std::cos(x); };
    f.drift_derivative = [](double x, const Vector& c, double, double, int j) {
        return j == 0 ? std::cos(c[0]) * std::cos(x) : 0.0;
    };
    f.jumps = [h](double, const Vector& c, double, double) {
        const double r = 0.3 + 0.1 * c[0] * c[0];
        return std::vector<Jump>{{{h, 0}, r}, {{-h, 0}, r}};
    };
    f.jumps_derivative = [h](double, const Vector& c, double, double, int j) {
        const double r = j == 0 ? 0.2 * c[0] : 0.0;
        return std::vector<Jump>{{{h, 0}, r}, {{-h, 0}, r}};
    };
    return f;
}

// G = 0.5 + 0.1 c0^2, b = sin(c0), jumps +-1 at rate 0.2 + 0.05 c0^2; c0 the mean.
LevyFamily smooth_levy() {
    LevyFamily f;
    f.name = "smooth_levy";
    f.moments = {[](double x, double) { return x; }};
    f.coefficients = [](const Vector& c, double, double) {
        const double r = 0.2 + 0.05 * c[0] * c[0];
        return triplet(0.5 + 0.1 * c[0] * c[0], std::sin(c[0]), {{{1, 0}, r}, {{-1, 0}, r}});
    };
    f.derivative = [](const Vector& c, double, double, int j) {
        if (j != 0) return LevyCoefficients::zero(1);
        const double r = 0.1 * c[0];
        return triplet(0.2 * c[0], std::cos(c[0]), {{{1, 0}, r}, {{-1, 0}, r}});
    };
    return f;
}

}  // namespace

TEST_CASE("levy_symbol closed forms", "[generators]") {
    CHECK(std::abs(levy_symbol(triplet(1, 0), 2.0) - std::complex<double>(-2.0, 0.0)) < 1e-15);
    CHECK(std::abs(levy_symbol(triplet(0, 1), 3.0) - std::complex<double>(0.0, 3.0)) < 1e-15);
    // Compound Poisson exponent 0.5 (e^{i pi} - 1); |y| = 2 lies outside the compensated ball.
    const auto eta = levy_symbol(triplet(0, 0, {{{2, 0}, 0.5}}), M_PI / 2);
    const std::complex<double> direct = 0.5 * (std::exp(std::complex<double>(0, M_PI)) - 1.0);
    CHECK(std::abs(eta - direct) < 1e-15);
    CHECK(eta.real() == Approx(-1.0));
}

TEST_CASE("levy_symbol is dissipative and Hermitian", "[generators][property]") {
    test::Rng rng(5);
    std::uniform_real_distribution<double> u(0, 1);
    for (int trial = 0; trial < 50; ++trial) {
        const LevyCoefficients c =
            triplet(u(rng), 4 * u(rng) - 2, {{{3 * u(rng) - 1.5, 0}, u(rng)}, {{0.2 + u(rng), 0}, u(rng)}});
        CHECK(std::abs(levy_symbol(c, 0.0)) < 1e-15);
        for (double xi : {0.3, 1.0, 4.7, 17.0}) {
            const auto p = levy_symbol(c, xi);
            CHECK(p.real() <= 1e-14);
            CHECK(std::abs(levy_symbol(c, -xi) - std::conj(p)) < 1e-13);
        }
    }
}

TEST_CASE("validate rejects invalid triplets", "[generators]") {
    CHECK_THROWS_AS(validate(triplet(-1, 0)), InvariantViolation);
    CHECK_THROWS_AS(validate(triplet(1, 0, {{{0, 0}, 1.0}})), InvariantViolation);
    CHECK_THROWS_AS(validate(triplet(1, 0, {{{1, 0}, -1.0}})), InvariantViolation);
}

TEST_CASE("assemble_matrix stencils", "[generators]") {
    const Grid g(0, 1.6, 16);
    const double h = g.spacing();
    const Vector c;

    OrderOneFamily none;
    CHECK(assemble_matrix(none, g, c, 1, 0).matrix.cwiseAbs().maxCoeff() == 0.0);

    OrderOneFamily drift;
    drift.drift = [](double, const Vector&, double, double) { return 1.0; };
    const Vector ax = assemble_matrix(drift, g, c, 1, 0).matrix * g.sample([](double x) { return x; });
    for (Eigen::Index i = 1; i + 1 < 16; ++i) CHECK(ax[i] == Approx(1.0).margin(1e-12));

    OrderOneFamily shift;
    shift.jumps = [h](double, const Vector&, double, double) { return std::vector<Jump>{{{3 * h, 0}, 1.0}}; };
    const Vector f = g.sample([](double x) { return std::exp(-8 * (x - 0.8) * (x - 0.8)); });
    const Vector af = assemble_matrix(shift, g, c, 1, 0).matrix * f;
    for (Eigen::Index i = 0; i < 16; ++i) {
        const double expected = i + 3 < 16 ? f[i + 3] - f[i] : 0.0;  // off-grid moves are suppressed
        CHECK(af[i] == Approx(expected).margin(1e-15));
    }
}

TEST_CASE("assembled generators conserve mass and keep positive rates", "[generators][property]") {
    const Grid g(-4, 4, 48);
    const OrderOneFamily f = smooth_family(g);
    test::Rng rng(6);
    for (int trial = 0; trial < 5; ++trial) {
        const GridMeasure mu = test::random_probability(g, rng);
        const Matrix a = assemble_matrix(f, mu).matrix;
        CHECK(a.rowwise().sum().cwiseAbs().maxCoeff() <= 1e-10);
        CHECK(std::abs((a.transpose() * mu.weights).sum()) <= 1e-8);
        for (Eigen::Index i = 0; i < a.rows(); ++i) {
            for (Eigen::Index j = 0; j < a.cols(); ++j) {
                if (i != j) CHECK(a(i, j) >= -1e-12);
            }
        }
    }
}

TEST_CASE("gateaux derivative of order-one families", "[generators]") {
    const Grid g(-4, 4, 32);
    const GridMeasure mu = GridMeasure::gaussian(g, 0.5, 1.0);
    const GridMeasure xi = GridMeasure::gaussian(g, 1.0, 1.0) - GridMeasure::gaussian(g, -0.5, 0.8);

    SECTION("measure-independent family gives zero") {
        OrderOneFamily f;
        f.drift = [](double x, const Vector&, double, double) { return std::sin(x); };
        CHECK(gateaux(f, mu, xi).cwiseAbs().maxCoeff() == 0.0);
        CHECK(dual_representation(Family(f), mu)->apply(Vector::Ones(32)).cwiseAbs().maxCoeff() == 0.0);
    }
    SECTION("affine dependence is reproduced exactly") {
        const auto phi = [](double x, double) { return x; };
        const OrderOneFamily f = test::linear_drift_family(g, 1.0, 0.5, 0.2, phi);
        OrderOneFamily unit;
        unit.drift = [](double, const Vector&, double, double) { return 1.0; };
        const Matrix a1 = assemble_matrix(unit, g, Vector(), 1, 0).matrix;
        const double pxi = pair(TestFunction::from(g, [](double x) { return x; }), xi);
        CHECK((gateaux(f, mu, xi) - 0.5 * pxi * a1).cwiseAbs().maxCoeff() <= 1e-12);
    }
    SECTION("finite-difference oracle at first order") {
        const OrderOneFamily f = smooth_family(g);
        const Matrix d = gateaux(f, mu, xi);
        const Matrix a0 = assemble_matrix(f, mu).matrix;
        std::vector<double> err;
        for (double s : {1e-4, 1e-5}) {
            const Matrix fd = (assemble_matrix(f, mu + s * xi).matrix - a0) / s;
            err.push_back((fd - d).cwiseAbs().maxCoeff() / d.cwiseAbs().maxCoeff());
        }
        CHECK(err[1] <= 1e-5);
        const double slope = std::log10(err[0] / err[1]);
        CHECK(slope == Approx(1.0).margin(0.1));
    }
}

TEST_CASE("dual representation identity", "[generators][property]") {
    test::Rng rng(7);
    const Grid g(-4, 4, 32);
    SECTION("order-one") {
        const OrderOneFamily f = smooth_family(g);
        double worst = 0.0;
        for (int trial = 0; trial < 20; ++trial) {
            const GridMeasure mu = test::random_probability(g, rng);
            const GridMeasure xi(g, test::random_vector(32, rng));
            const Vector v = test::random_vector(32, rng);
            const double lhs = (gateaux(f, mu, xi) * v).dot(mu.weights);
            const double rhs = dual_representation(Family(f), mu)->apply(v).dot(xi.weights);
            worst = std::max(worst, std::abs(lhs - rhs));
        }
        CHECK(worst <= 1e-10);
    }
    SECTION("Levy") {
        const LevyFamily f = smooth_levy();
        const SpectralTransform tr(g);
        double worst = 0.0;
        for (int trial = 0; trial < 20; ++trial) {
            const GridMeasure mu = test::random_probability(g, rng);
            const GridMeasure xi(g, test::random_vector(32, rng));
            const Vector v = test::random_vector(32, rng);
            const double lhs = apply_levy(tr, gateaux(f, mu, xi), v).dot(mu.weights);
            const double rhs = dual_representation(Family(f), mu)->apply(v).dot(xi.weights);
            worst = std::max(worst, std::abs(lhs - rhs));
        }
        CHECK(worst <= 1e-10);
    }
    SECTION("rank-one form for affine families") {
        const auto phi = [](double x, double) { return std::cos(x); };
        const OrderOneFamily f = test::linear_drift_family(g, 1.0, 0.5, 0.2, phi);
        const GridMeasure mu = test::random_probability(g, rng);
        const Vector v = test::random_vector(32, rng);
        OrderOneFamily unit;
        unit.drift = [](double, const Vector&, double, double) { return 0.5; };
        const Matrix a1 = assemble_matrix(unit, g, Vector(), 1, 0).matrix;
        const Vector expected = g.sample([](double x) { return std::cos(x); }) * (a1 * v).dot(mu.weights);
        CHECK((dual_representation(Family(f), mu)->apply(v) - expected).cwiseAbs().maxCoeff() <= 1e-12);
    }
}

TEST_CASE("Levy Lipschitz estimate", "[generators]") {
    const Grid g(-4, 4, 32);
    std::vector<std::pair<GridMeasure, GridMeasure>> samples;
    for (double m : {-1.0, 0.0, 0.7}) {
        samples.emplace_back(GridMeasure::gaussian(g, m, 0.8), GridMeasure::gaussian(g, m + 0.5, 1.1));
    }
    const double norm = ck_norm(TestFunction::from(g, [](double x) { return std::sin(x); }), 2);
    auto family = [&](double scale) {
        LevyFamily f;
        f.moments = {[norm](double x, double) { return std::sin(x) / norm; }};
        f.coefficients = [scale](const Vector& c, double, double) { return triplet(0.1, scale * c[0], {{{1, 0}, 0.2}}); };
        return f;
    };
    LevyFamily constant;
    constant.coefficients = [](const Vector&, double, double) { return triplet(0.3, 1.0); };
    CHECK(estimate_levy_lipschitz(constant, samples).kappa == 0.0);

    const double k1 = estimate_levy_lipschitz(family(1), samples).kappa;
    CHECK(k1 > 0.0);
    CHECK(k1 <= 1.0 + 1e-9);
    CHECK(estimate_levy_lipschitz(family(2), samples).kappa == Approx(2 * k1).epsilon(1e-12));
    CHECK(estimate_levy_lipschitz(family(4), samples).kappa == Approx(4 * k1).epsilon(1e-12));

    const auto same = estimate_levy_lipschitz(family(1), {{samples[0].first, samples[0].first}});
    CHECK(same.skipped == 1);
}

TEST_CASE("order-one hypothesis checker", "[generators]") {
    const Grid g(-8, 8, 128);
    const std::vector<GridMeasure> samples{GridMeasure::gaussian(g, 0, 1), GridMeasure::gaussian(g, 2, 0.7)};
    OrderOneFamily f;
    f.jump_radius = 2.0;
    f.drift = [](double x, const Vector&, double, double) { return std::sin(x); };
    f.jumps = [](double, const Vector&, double, double) {
        return std::vector<Jump>{{{0.5, 0}, 0.2}, {{-0.5, 0}, 0.2}, {{1, 0}, 0.1}, {{-1, 0}, 0.1}};
    };
    const OrderOneReport pass = validate_order_one_conditions(f, 1e-3, samples);
    CHECK(pass.all_pass());
    // Direct quadrature: sum min(1, |y|) rho(y).
    CHECK(pass.boundedness == Approx(2 * 0.5 * 0.2 + 2 * 1.0 * 0.1).margin(1e-14));
    CHECK(pass.lipschitz_b == 0.0);

    const double eps = 1e-3;
    OrderOneFamily tail = f;
    tail.jumps = [eps](double, const Vector&, double, double) {
        return std::vector<Jump>{{{0.5, 0}, 0.2}, {{-0.5, 0}, 0.2}, {{2.5, 0}, eps}, {{-2.5, 0}, eps}};
    };
    const OrderOneReport fail = validate_order_one_conditions(tail, eps, samples);
    CHECK(fail.boundedness_pass);
    CHECK_FALSE(fail.tightness_pass);
    CHECK(fail.tail_at_largest_k == Approx(2 * eps));
}

TEST_CASE("Levy families in order-one form", "[generators]") {
    const Grid g(-6, 6, 96);
    LevyFamily f;
    f.coefficients = [](const Vector&, double, double) { return triplet(0, 0.3, {{{0.5, 0}, 0.4}, {{2.0, 0}, 0.1}}); };
    const OrderOneFamily o = as_order_one(f);
    // Compensator of the small jump folds into the drift: 0.3 - 0.5 * 0.4.
    CHECK(o.drift(0.0, Vector(), 1.0, 0.0) == Approx(0.1));
    CHECK(o.jumps(0.0, Vector(), 1.0, 0.0).size() == 2);
}
