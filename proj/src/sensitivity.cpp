#include "nlmarkov/sensitivity.hpp"

#include <cmath>
#include <ostream>

#include <json.hpp>

#include "nlmarkov/error.hpp"
#include "nlmarkov/expm.hpp"
#include "nlmarkov/measures.hpp"
#include "nlmarkov/perturbation.hpp"

namespace nlmarkov {

namespace {

using Eigen::Index;

// Step derivatives of the left-endpoint scheme along a base curve.
struct Tangent {
    PerturbedHandle handle;
    std::vector<Vector> source;  // empty without a parameter source
};

Tangent build_tangent(const Family& family, const Curve& curve, const Partition& part, bool with_source) {
    const Grid& grid = curve.grid();
    const auto n = static_cast<Index>(grid.size());
    const auto& moments = moment_functions(family);
    const Matrix phi = sample_moments(moments, grid);
    const double alpha = family_alpha(family);
    std::vector<OperatorPtr> k;
    std::vector<Vector> source;
    k.reserve(part.steps());

    if (const auto* lf = std::get_if<LevyFamily>(&family)) {
        const SpectralTransform tr(grid);
        const auto& freqs = tr.frequencies();
        for (std::size_t j = 0; j < part.steps(); ++j) {
            const double dt = part.step(j);
            const double t = part.node(j);
            const Vector& mu = curve.values[j].weights;
            const Vector c = phi.transpose() * mu;
            const ComplexVector m = (dt * levy_symbol(lf->coefficients(c, alpha, t), freqs)).array().exp().matrix();
            // d/dc exp(dt eta) = exp(dt eta) dt d eta / dc; measures see the conjugate multiplier.
            auto derivative = [&](int i) {
                const ComplexVector d = symbol_increment(levy_partial(*lf, c, alpha, t, i), freqs);
                return tr.apply_multiplier(mu, (dt * m.cwiseProduct(d)).conjugate());
            };
            Matrix rho(n, phi.cols());
            for (Index i = 0; i < phi.cols(); ++i) rho.col(i) = derivative(static_cast<int>(i));
            k.push_back(std::make_shared<FiniteRankOperator>(phi, std::move(rho)));
            if (with_source) source.push_back(derivative(kAlpha));
        }
        PropagatorHandle base = build_spectral(*lf, grid, curve, part, Freeze::left);
        return {PerturbedHandle(std::move(base), std::move(k), {.quadrature = Quadrature::step_operators}),
                std::move(source)};
    }

    const auto& of = std::get<OrderOneFamily>(family);
    std::vector<Matrix> factors;
    factors.reserve(part.steps());
    for (std::size_t j = 0; j < part.steps(); ++j) {
        const double dt = part.step(j);
        const double t = part.node(j);
        const GridMeasure& mu = curve.values[j];
        const Vector c = phi.transpose() * mu.weights;
        const Matrix a = dt * assemble_matrix(of, grid, c, alpha, t, &mu).matrix;
        factors.push_back(expm(a));
        auto derivative = [&](int i) -> Vector {
            const Matrix l = expm_frechet(a, dt * order_one_partial(of, grid, c, alpha, t, i));
            return l.transpose() * mu.weights;
        };
        Matrix rho(n, phi.cols());
        for (Index i = 0; i < phi.cols(); ++i) rho.col(i) = derivative(static_cast<int>(i));
        k.push_back(std::make_shared<FiniteRankOperator>(phi, std::move(rho)));
        if (with_source) source.push_back(derivative(kAlpha));
    }
    PropagatorHandle base = PropagatorHandle::from_factors(std::move(factors), part, Engine::matrix, grid);
    return {PerturbedHandle(std::move(base), std::move(k), {.quadrature = Quadrature::step_operators}),
            std::move(source)};
}

// Base curve restricted to the nodes of [0, r].
Curve restrict(const KineticSolution& base, double r) {
    const std::size_t k = base.curve.node_index(r);
    if (k == 0) throw InvariantViolation("sensitivity: horizon must be positive");
    std::vector<double> times(base.curve.times.begin(), base.curve.times.begin() + static_cast<std::ptrdiff_t>(k) + 1);
    std::vector<GridMeasure> values(base.curve.values.begin(),
                                    base.curve.values.begin() + static_cast<std::ptrdiff_t>(k) + 1);
    return Curve(std::move(times), std::move(values));
}

Curve propagate(const Family& family, const KineticSolution& base, const GridMeasure& xi0, double r,
                bool with_source) {
    const Curve curve = restrict(base, r);
    require_same_grid(curve.grid(), xi0.grid, "sensitivity");
    const Partition part(curve.times);
    const Tangent tangent = build_tangent(family, curve, part, with_source);
    std::vector<GridMeasure> values{xi0};
    values.reserve(curve.size());
    Vector x = xi0.weights;
    for (std::size_t j = 0; j < part.steps(); ++j) {
        x = dual_perturbed(tangent.handle, x, part.node(j + 1), part.node(j));
        if (with_source) x += tangent.source[j];
        if (!x.allFinite()) throw NumericalError("sensitivity: non-finite tangent");
        values.emplace_back(xi0.grid, x);
    }
    return Curve(curve.times, std::move(values));
}

Family with_alpha(const Family& family, double alpha) {
    Family f = family;
    set_family_alpha(f, alpha);
    return f;
}

GridMeasure initial_derivative(const InitialFamily& mu0_of_alpha, double alpha) {
    constexpr double eps = 1e-5;
    const GridMeasure plus = mu0_of_alpha(alpha + eps);
    const GridMeasure minus = mu0_of_alpha(alpha - eps);
    return {plus.grid, (plus.weights - minus.weights) / (2.0 * eps)};
}

double fitted_slope(const std::vector<FdRow>& rows) {
    std::vector<std::pair<double, double>> pts;
    for (const FdRow& r : rows) {
        if (r.defect > 0) pts.emplace_back(std::log(r.h), std::log(r.defect));
    }
    if (pts.size() < 2) return 0.0;
    double mx = 0, my = 0;
    for (const auto& [x, y] : pts) {
        mx += x;
        my += y;
    }
    mx /= static_cast<double>(pts.size());
    my /= static_cast<double>(pts.size());
    double sxy = 0, sxx = 0;
    for (const auto& [x, y] : pts) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    return sxx > 0 ? sxy / sxx : 0.0;
}

}  // namespace

Curve linearized_propagate(const Family& family, const KineticSolution& base, double alpha, const GridMeasure& xi0,
                           double r) {
    return propagate(with_alpha(family, alpha), base, xi0, r, true);
}

Curve initial_data_derivative(const Family& family, const KineticSolution& base, const GridMeasure& xi, double r) {
    const double scale = std::max(1.0, xi.weights.lpNorm<1>());
    if (std::abs(xi.mass()) > 1e-10 * scale) {
        throw InvariantViolation("initial_data_derivative: pair(1, xi) = " + std::to_string(xi.mass()) +
                                 "; directions inside probability measures carry zero mass");
    }
    return propagate(family, base, xi, r, false);
}

SensitivityRun run_sensitivity(const Family& family, const GridMeasure& mu0, const GridMeasure& xi0, double alpha,
                               double r, double delta, const SolverOptions& options) {
    const Family f = with_alpha(family, alpha);
    SensitivityRun run{solve_kinetic(f, mu0, r, delta, options), {}, 0.0};
    run.xi = linearized_propagate(f, run.base, alpha, xi0, r);
    run.max_mass = max_mass(run.xi);
    return run;
}

double max_mass(const Curve& xi) {
    double m = 0.0;
    for (const GridMeasure& v : xi.values) m = std::max(m, std::abs(v.mass()));
    return m;
}

FdReport fd_validate(const Family& family, const InitialFamily& mu0_of_alpha, double alpha,
                     const std::vector<double>& h_list, double r, double delta,
                     const std::vector<double>& sample_times, const SolverOptions& options) {
    if (h_list.empty()) throw InvariantViolation("fd_validate: h_list is empty");
    for (std::size_t i = 0; i < h_list.size(); ++i) {
        if (!(h_list[i] > 0) || (i > 0 && !(h_list[i] < h_list[i - 1]))) {
            throw InvariantViolation("fd_validate: h_list must be positive and decreasing");
        }
    }
    auto solve_at = [&](double a) { return solve_kinetic(with_alpha(family, a), mu0_of_alpha(a), r, delta, options); };
    auto tangent_at = [&](double a) {
        const KineticSolution base = solve_at(a);
        return linearized_propagate(family, base, a, initial_derivative(mu0_of_alpha, a), r);
    };

    FdReport rep;
    const Curve xi = tangent_at(alpha);
    for (double h : h_list) {
        const KineticSolution plus = solve_at(alpha + h);
        const KineticSolution minus = solve_at(alpha - h);
        double defect = 0.0;
        for (double t : sample_times) {
            const Vector d = (plus.curve.at(t).weights - minus.curve.at(t).weights) / (2.0 * h);
            defect = std::max(defect, dual_norm(GridMeasure(xi.grid(), d - xi.at(t).weights), 2));
        }
        rep.rows.push_back({h, defect});
    }
    rep.fitted_order = fitted_slope(rep.rows);
    constexpr double floor = 1e-12;
    bool all_floor = true;
    for (std::size_t i = 0; i < rep.rows.size(); ++i) {
        all_floor = all_floor && rep.rows[i].defect <= floor;
        if (i > 0 && rep.rows[i].defect < rep.rows[i - 1].defect) rep.passed = true;
    }
    rep.passed = rep.passed || all_floor;

    const double big = h_list.front();
    const KineticSolution top = solve_at(alpha);
    const KineticSolution bottom = solve_at(alpha - big);
    const Curve mid = tangent_at(alpha - 0.5 * big);
    for (double t : sample_times) {
        const Vector diff = top.curve.at(t).weights - bottom.curve.at(t).weights;
        rep.integral_scale = std::max(rep.integral_scale, dual_norm(GridMeasure(xi.grid(), diff), 2));
        rep.integral_defect =
            std::max(rep.integral_defect, dual_norm(GridMeasure(xi.grid(), diff - big * mid.at(t).weights), 2));
    }
    return rep;
}

void write_sensitivity_csv(std::ostream& os, const Curve& xi, std::size_t stride) {
    write_solution_csv(os, xi, stride, "xi_weight");
}

std::string fd_report_json(const FdReport& report) {
    nlohmann::json rows = nlohmann::json::array();
    for (const FdRow& r : report.rows) rows.push_back({{"h", r.h}, {"defect", r.defect}});
    const nlohmann::json j = {{"rows", rows},
                              {"fitted_order", report.fitted_order},
                              {"integral_defect", report.integral_defect},
                              {"integral_scale", report.integral_scale},
                              {"passed", report.passed}};
    return j.dump(2);
}

}  // namespace nlmarkov
