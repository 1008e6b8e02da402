#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <sstream>

#include "nlmarkov/error.hpp"
#include "nlmarkov/expm.hpp"
#include "nlmarkov/oracles.hpp"
#include "nlmarkov/scenario.hpp"
#include "support.hpp"

using namespace nlmarkov;
using Catch::Approx;

namespace {

double sup(const Vector& v) { return v.cwiseAbs().maxCoeff(); }

LevyFamily drift_only(double g) {
    LevyFamily f;
    f.name = "meanfield";
    f.moments = {[](double x, double) { return x; }};
    f.coefficients = [g](const Vector& c, double alpha, double) {
        return LevyCoefficients{Matrix::Constant(1, 1, g), Vector::Constant(1, -alpha * c[0]), {}};
    };
    return f;
}

}  // namespace

TEST_CASE("dense evolution against closed forms", "[oracles]") {
    test::Rng rng(16);
    const Grid g(-2, 2, 16);
    const GridMeasure mu0 = test::random_probability(g, rng);
    const Partition p = Partition::uniform(0, 1, 4);

    const Curve still = dense_evolve(std::vector<Matrix>(4, Matrix::Zero(16, 16)), mu0, p);
    for (const GridMeasure& m : still.values) CHECK(sup(m.weights - mu0.weights) == 0.0);

    const Matrix a = test::random_rate_matrix(16, rng);
    const Curve c = dense_evolve(std::vector<Matrix>(4, a), mu0, p);
    CHECK(sup(c.values.back().weights - expm(a.transpose()) * mu0.weights) <= 1e-10);

    // A(t) = (1 + cos t) A0 commutes with itself: the exponent integrates to t + sin t.
    const Curve tv = dense_evolve([&](double t) -> Matrix { return (1 + std::cos(t)) * a; }, mu0, p);
    for (std::size_t j = 0; j < p.nodes().size(); ++j) {
        const double t = p.node(j);
        CHECK(sup(tv.values[j].weights - expm((t + std::sin(t)) * a.transpose()) * mu0.weights) <= 1e-9);
    }

    const Vector f = test::random_vector(16, rng);
    CHECK(sup(dense_backward(std::vector<Matrix>(4, a), f, p) - expm(a) * f) <= 1e-10);
    CHECK_THROWS_AS(dense_evolve(std::vector<Matrix>(3, a), mu0, p), DimensionError);
}

TEST_CASE("dense oracle agrees with the matrix engine on shipped families", "[oracles][property]") {
    for (const char* name : {"interacting_poisson", "checker_pass", "heavy_tail"}) {
        const Scenario sc = load_scenario(std::string(NLMARKOV_TEST_SCENARIOS) + "/" + name + ".json");
        const Grid g = sc.grid.build();
        const OrderOneFamily f = std::get<OrderOneFamily>(build_family(sc.family, g));
        const GridMeasure mu0 = build_initial(sc.initial, g);
        const Partition p = Partition::uniform(0, 0.5, 5);
        const Curve frozen = constant_curve(mu0, p);
        const PropagatorHandle u = build_matrix(f, g, frozen, p);
        std::vector<Matrix> gens;
        for (std::size_t j = 0; j < p.steps(); ++j) gens.push_back(assemble_matrix(f, mu0, p.node(j)).matrix);
        const Curve dense = dense_evolve(gens, mu0, p);
        INFO(name);
        for (std::size_t j = 1; j <= p.steps(); ++j) {
            CHECK(sup(u.apply_dual(mu0.weights, j, 0) - dense.values[j].weights) <= 1e-8);
        }
    }
}

TEST_CASE("dense kinetic integration matches the fixed-point solver", "[oracles]") {
    const Scenario sc = load_scenario(std::string(NLMARKOV_TEST_SCENARIOS) + "/interacting_poisson.json");
    const Grid g = sc.grid.build();
    const Family fam = build_family(sc.family, g);
    const GridMeasure mu0 = build_initial(sc.initial, g);
    const Partition p = Partition::uniform(0, 1, 4);
    const Curve dense = dense_kinetic(std::get<OrderOneFamily>(fam), mu0, p);
    const KineticSolution sol = solve_kinetic(fam, mu0, 1.0, 1e-3);
    // The solver is first order in the mesh; the oracle is the continuous-time limit.
    for (std::size_t j = 0; j < p.nodes().size(); ++j) {
        CHECK(sup(sol.curve.at(p.node(j)).weights - dense.values[j].weights) <= 1e-4);
    }
}

TEST_CASE("scalar ODE and moment oracles", "[oracles]") {
    const std::vector<double> times{0.0, 0.5, 1.0};
    const auto y = scalar_ode([](double t, double v) { return std::cos(t) * v; }, 2.0, times);
    for (std::size_t i = 0; i < times.size(); ++i) CHECK(y[i] == Approx(2.0 * std::exp(std::sin(times[i]))).epsilon(1e-10));

    CHECK(moment_oracle("meanfield_drift", {{"m0", 1.0}, {"alpha", 1.0}}, {1.0})[0] == Approx(0.367879).margin(1e-6));
    CHECK(moment_oracle("heat", {{"var0", 1.0}, {"G", 1.0}}, {0.5})[0] == 1.5);
    CHECK(moment_oracle("compound_poisson", {{"lambda", 0.5}, {"mean_jump", 2.0}}, {3.0})[0] == Approx(3.0));
    CHECK(moment_oracle("interacting_poisson", {{"c0", 16.0}, {"lambda", 0.01}, {"y0", 2.0}}, {1.0})[0] ==
          Approx(16.0 * std::exp(-0.02)));
    CHECK_THROWS_AS(moment_oracle("unknown", {}, {1.0}), InvariantViolation);
    CHECK_THROWS_AS(moment_oracle("heat", {{"G", 1.0}}, {1.0}), InvariantViolation);
}

TEST_CASE("identical particles follow the mean-field ODE", "[oracles]") {
    const Grid g(-2, 3, 64);
    ParticleEnsemble e;
    e.positions.assign(200, 1.0);
    ParticleOptions o;
    o.r = 1.0;
    o.delta = 1e-3;
    const ParticleResult r = particle_simulate(Family(drift_only(0.0)), e, g, o);
    for (double x : r.final.positions) {
        CHECK(x == Approx(std::pow(1 - o.delta, 1000)).margin(1e-12));
        CHECK(x == Approx(std::exp(-1.0)).margin(o.delta));
    }
}

TEST_CASE("compound Poisson jump counts", "[oracles]") {
    const Scenario sc = load_scenario(std::string(NLMARKOV_TEST_SCENARIOS) + "/compound_poisson.json");
    const Grid g = sc.grid.build();
    ParticleOptions o;
    o.r = 2.0;
    o.delta = 0.01;
    o.record_every = 50;
    const std::size_t n = 4000;
    const ParticleResult r = particle_simulate(build_family(sc.family, g), build_initial(sc.initial, g), n, 3, o);
    CHECK(std::abs(r.mean_jumps - 1.0) <= 3 * std::sqrt(1.0 / n));
    // Mean displacement: lambda t E[y] on top of the initial mean; y = 1 sits outside the open compensation ball.
    const double shift = test::mean(r.histogram.values.back()) - test::mean(r.histogram.values.front());
    CHECK(shift == Approx(moment_oracle("compound_poisson", {{"lambda", 0.5}, {"mean_jump", 1.0}}, {2.0})[0]).margin(0.1));
    CHECK(r.histogram.size() == 5);
}

TEST_CASE("particle runs are reproducible", "[oracles][property]") {
    const Grid g(-6, 6, 128);
    const GridMeasure mu0 = GridMeasure::gaussian(g, 1.0, 0.5);
    ParticleOptions o;
    o.r = 0.5;
    o.delta = 0.01;
    std::ostringstream s1, s2;
    o.snapshots = &s1;
    const ParticleResult a = particle_simulate(Family(drift_only(0.02)), mu0, 500, 42, o);
    o.snapshots = &s2;
    const ParticleResult b = particle_simulate(Family(drift_only(0.02)), mu0, 500, 42, o);
    o.snapshots = nullptr;
    const ParticleResult c = particle_simulate(Family(drift_only(0.02)), mu0, 500, 43, o);
    CHECK(a.final.positions == b.final.positions);
    CHECK(a.final.positions != c.final.positions);
    CHECK(s1.str() == s2.str());
    CHECK(s1.str().rfind("time,particle_id,position\n", 0) == 0);
}

TEST_CASE("ensemble sampling and binning", "[oracles]") {
    const Grid g(-6, 6, 128);
    const GridMeasure mu0 = GridMeasure::gaussian(g, 1.0, 0.5);
    const std::size_t n = 20000;
    const ParticleEnsemble e = sample_ensemble(mu0, n, 9);
    double m = 0.0;
    for (double x : e.positions) m += x / n;
    CHECK(std::abs(m - 1.0) <= 4 * 0.5 / std::sqrt(static_cast<double>(n)));

    const GridMeasure hist = cic_histogram(g, e.positions);
    CHECK(hist.mass() == Approx(1.0).margin(1e-12));
    CHECK(hist.min_weight() >= 0.0);
    // Linear splitting preserves the first moment of interior particles.
    CHECK(test::mean(hist) == Approx(m).margin(1e-10));
}

TEST_CASE("particle step guard", "[oracles]") {
    const Grid g(-4, 4, 32);
    LevyFamily f;
    f.coefficients = [](const Vector&, double, double) {
        return LevyCoefficients{Matrix::Zero(1, 1), Vector::Zero(1), {{{2.0, 0}, 50.0}}};
    };
    ParticleOptions o;
    o.delta = 0.01;
    CHECK_THROWS_AS(particle_simulate(Family(f), GridMeasure::gaussian(g, 0, 1), 10, 1, o), NumericalError);
}
