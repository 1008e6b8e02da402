#include "nlmarkov/nonlinear.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include <json.hpp>
#include <spdlog/spdlog.h>

#include "nlmarkov/error.hpp"
#include "nlmarkov/measures.hpp"

namespace nlmarkov {

namespace {

bool is_levy(const Family& f) { return std::holds_alternative<LevyFamily>(f); }

struct WindowAttempt {
    bool accepted = false;
    std::vector<GridMeasure> values;  // nodes of the window, start included
    WindowLog log;
};

class Solver {
public:
    Solver(const Family& family, const Grid& grid, const SolverOptions& options)
        : family_(family), grid_(grid), options_(options), spectral_(is_levy(family)) {}

    WindowAttempt run(const Partition& part, const GridMeasure& start) const {
        const std::size_t steps = part.steps();
        WindowAttempt out;
        out.log.start = part.front();
        out.log.length = part.back() - part.front();
        std::vector<GridMeasure> cur = guess(part, start);
        for (int sweep = 1; sweep <= options_.max_sweeps; ++sweep) {
            const PropagatorHandle handle =
                build_propagator(family_, grid_, Curve(part.nodes(), cur), part, options_.freeze);
            std::vector<GridMeasure> next{start};
            next.reserve(steps + 1);
            double dist = 0.0;
            for (std::size_t m = 1; m <= steps; ++m) {
                // The spectral engine carries cumulative exponents, so it maps from the
                // window start in one shot; the matrix engine steps.
                Vector w = spectral_ ? handle.apply_dual(start.weights, m, 0)
                                     : handle.apply_dual(next.back().weights, m, m - 1);
                if (!w.allFinite()) throw WellPosednessFailure("solve_kinetic: non-finite iterate");
                GridMeasure mu(grid_, std::move(w));
                if (options_.project) project_probability(mu);
                dist = std::max(dist, dual_norm_bound(mu, cur[m]));
                next.push_back(std::move(mu));
            }
            if (!out.log.distances.empty()) out.log.ratios.push_back(dist / out.log.distances.back());
            out.log.distances.push_back(dist);
            out.log.sweeps = sweep;
            cur = std::move(next);
            if (sweep == 2 && out.log.ratios.back() > options_.accept_ratio) {
                out.values = std::move(cur);
                return out;
            }
            if (dist < options_.tol) {
                out.accepted = true;
                out.values = std::move(cur);
                return out;
            }
        }
        throw WellPosednessFailure("solve_kinetic: no convergence within " + std::to_string(options_.max_sweeps) +
                                   " sweeps on the window starting at t=" + std::to_string(part.front()));
    }

private:
    std::vector<GridMeasure> guess(const Partition& part, const GridMeasure& start) const {
        std::vector<GridMeasure> g;
        g.reserve(part.steps() + 1);
        const bool interp = options_.guess == InitialGuess::interpolate && options_.guess_target.has_value();
        const double span = part.back() - part.front();
        for (double t : part.nodes()) {
            if (interp) {
                const double a = (t - part.front()) / span;
                g.emplace_back(grid_, (1.0 - a) * start.weights + a * options_.guess_target->weights);
            } else {
                g.push_back(start);
            }
        }
        return g;
    }

    const Family& family_;
    const Grid& grid_;
    const SolverOptions& options_;
    bool spectral_;
};

}  // namespace

double KineticSolution::max_ratio() const {
    double m = 0.0;
    for (const WindowLog& w : windows) {
        for (double r : w.ratios) m = std::max(m, r);
    }
    return m;
}

void project_probability(GridMeasure& mu) {
    for (Eigen::Index i = 0; i < mu.weights.size(); ++i) {
        if (mu.weights[i] < 0.0 && mu.weights[i] >= -1e-12) mu.weights[i] = 0.0;
    }
    const double err = std::abs(mu.mass() - 1.0);
    if (err > 1e-12 && err < 1e-8) mu.weights /= mu.mass();
}

KineticSolution solve_kinetic(const Family& family, const GridMeasure& mu0, double r, double delta,
                              const SolverOptions& options) {
    if (!(r > 0)) throw InvariantViolation("solve_kinetic: horizon must be positive");
    if (!(delta > 0)) throw InvariantViolation("solve_kinetic: mesh must be positive");
    if (!(options.tol > 0) || options.max_sweeps < 2 || !(options.accept_ratio > 0 && options.accept_ratio < 1)) {
        throw InvariantViolation("solve_kinetic: invalid solver options");
    }
    if (options.guess_target) require_same_grid(options.guess_target->grid, mu0.grid, "solve_kinetic");
    mu0.check_probability(1e-10, 1e-8);

    const Grid& grid = mu0.grid;
    const Partition full = Partition::with_step(0.0, r, delta);
    const std::size_t total = full.steps();
    const Solver solver(family, grid, options);

    KineticSolution sol;
    sol.engine = is_levy(family) ? Engine::spectral : Engine::matrix;
    std::vector<GridMeasure> values{mu0};
    values.reserve(total + 1);
    std::size_t len = total;
    std::size_t s = 0;
    while (s < total) {
        std::size_t steps = std::min(len, total - s);
        int halvings = 0;
        WindowAttempt attempt;
        for (;;) {
            attempt = solver.run(full.slice(s, s + steps), values.back());
            if (attempt.accepted) break;
            if (steps == 1) {
                throw WellPosednessFailure("solve_kinetic: fixed-point map does not contract on a single mesh step at t=" +
                                           std::to_string(full.node(s)) + " (hypotheses likely violated)");
            }
            spdlog::debug("solve_kinetic: ratio {:.3g} on [{}, {}], halving", attempt.log.ratios.back(), full.node(s),
                          full.node(s + steps));
            steps /= 2;
            ++halvings;
        }
        len = steps;
        attempt.log.halvings = halvings;
        sol.windows.push_back(std::move(attempt.log));
        for (std::size_t m = 1; m < attempt.values.size(); ++m) values.push_back(std::move(attempt.values[m]));
        s += steps;
    }
    sol.window_length = full.node(len) - full.node(0);

    sol.min_weight = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < values.size(); ++j) {
        const GridMeasure& mu = values[j];
        sol.max_mass_drift = std::max(sol.max_mass_drift, std::abs(mu.mass() - 1.0));
        sol.min_weight = std::min(sol.min_weight, mu.min_weight());
        sol.max_boundary_mass = std::max(sol.max_boundary_mass, mu.boundary_mass());
        if (j > 0) {
            sol.continuity_constant =
                std::max(sol.continuity_constant, dual_norm_bound(mu, values[j - 1]) / full.step(j - 1));
        }
    }
    if (sol.max_mass_drift > 1e-8) spdlog::warn("solve_kinetic: mass drift {:.3g} exceeds 1e-8", sol.max_mass_drift);
    if (sol.max_boundary_mass > 1e-8) {
        spdlog::warn("solve_kinetic: {:.3g} of the mass reached the grid boundary layer", sol.max_boundary_mass);
    }
    sol.curve = Curve(full.nodes(), std::move(values));
    return sol;
}

std::vector<SemigroupRow> semigroup_check(const Family& family, const GridMeasure& mu,
                                          const std::vector<std::pair<double, double>>& pairs, double delta,
                                          const SolverOptions& options) {
    std::vector<SemigroupRow> rows;
    for (const auto& [t, s] : pairs) {
        if (t < 0 || s < 0) throw InvariantViolation("semigroup_check: times must be >= 0");
        SemigroupRow row{t, s, 0.0};
        if (t > 0 && s > 0) {
            const GridMeasure direct = solve_kinetic(family, mu, t + s, delta, options).curve.values.back();
            const GridMeasure mid = solve_kinetic(family, mu, t, delta, options).curve.values.back();
            const GridMeasure composed = solve_kinetic(family, mid, s, delta, options).curve.values.back();
            row.defect = dual_norm(composed, direct, 2);
        }
        rows.push_back(row);
    }
    return rows;
}

LipschitzReport lipschitz_probe(const Family& family, const GridMeasure& mu, const GridMeasure& eta, double r,
                                double delta, const std::vector<double>& sample_times, const SolverOptions& options) {
    require_same_grid(mu.grid, eta.grid, "lipschitz_probe");
    LipschitzReport rep;
    const double d0 = dual_norm(mu, eta, 2);
    const bool same = d0 == 0.0;
    rep.skipped = same;
    const KineticSolution a = solve_kinetic(family, mu, r, delta, options);
    std::optional<KineticSolution> b;
    if (!same) b = solve_kinetic(family, eta, r, delta, options);
    rep.min_time_ratio = std::numeric_limits<double>::infinity();
    for (double t : sample_times) {
        const GridMeasure& at = a.curve.at(t);
        LipschitzRow row{t, 0.0, 0.0};
        if (!same) row.data_ratio = dual_norm(at, b->curve.at(t), 2) / d0;
        if (t > 0) {
            row.time_ratio = dual_norm(at, mu, 2) / t;
            rep.max_time_ratio = std::max(rep.max_time_ratio, row.time_ratio);
            rep.min_time_ratio = std::min(rep.min_time_ratio, row.time_ratio);
        }
        rep.max_data_ratio = std::max(rep.max_data_ratio, row.data_ratio);
        rep.rows.push_back(row);
    }
    if (!std::isfinite(rep.min_time_ratio)) rep.min_time_ratio = 0.0;
    return rep;
}

double generator_distance(const Family& a, const Family& b, const GridMeasure& mu, double t) {
    if (is_levy(a) && is_levy(b)) {
        return levy_coefficient_distance(levy_coefficients(std::get<LevyFamily>(a), mu, t),
                                         levy_coefficients(std::get<LevyFamily>(b), mu, t));
    }
    if (!is_levy(a) && !is_levy(b)) {
        return order_one_distance(std::get<OrderOneFamily>(a), std::get<OrderOneFamily>(b), mu, t);
    }
    throw UnsupportedFamily("generator_distance: families must be of the same kind");
}

StabilityReport stability_compare(const Family& family_a, const Family& family_b, const GridMeasure& mu,
                                  const GridMeasure& eta, double r, double delta,
                                  const std::vector<double>& sample_times, const SolverOptions& options) {
    require_same_grid(mu.grid, eta.grid, "stability_compare");
    StabilityReport rep;
    const KineticSolution a = solve_kinetic(family_a, mu, r, delta, options);
    const KineticSolution b = solve_kinetic(family_b, eta, r, delta, options);
    rep.initial_distance = dual_norm(mu, eta, 2);
    for (double t : sample_times) {
        const GridMeasure& at = a.curve.at(t);
        const GridMeasure& bt = b.curve.at(t);
        const double d = dual_norm(bt, at, 2);
        rep.distances.push_back(d);
        rep.sup_distance = std::max(rep.sup_distance, d);
        rep.kappa_hat = std::max({rep.kappa_hat, generator_distance(family_a, family_b, at, t),
                                  generator_distance(family_a, family_b, bt, t)});
    }
    const double denom = rep.kappa_hat + rep.initial_distance;
    rep.ratio = denom > 0 ? rep.sup_distance / denom : 0.0;
    return rep;
}

void write_solution_csv(std::ostream& os, const Curve& curve, std::size_t stride, const std::string& value_name) {
    if (curve.size() == 0) throw InvariantViolation("write_solution_csv: empty curve");
    stride = std::max<std::size_t>(stride, 1);
    std::vector<double> times;
    std::vector<GridMeasure> values;
    for (std::size_t j = 0; j < curve.size(); ++j) {
        if (j % stride == 0 || j + 1 == curve.size()) {
            times.push_back(curve.times[j]);
            values.push_back(curve.values[j]);
        }
    }
    write_curve_csv(os, Curve(std::move(times), std::move(values)), value_name);
}

std::string run_report_json(const KineticSolution& sol, const std::string& scenario_name) {
    nlohmann::json windows = nlohmann::json::array();
    for (const WindowLog& w : sol.windows) {
        windows.push_back({{"start", w.start},
                           {"length", w.length},
                           {"sweeps", w.sweeps},
                           {"halvings", w.halvings},
                           {"distances", w.distances},
                           {"ratios", w.ratios}});
    }
    const nlohmann::json j = {{"scenario", scenario_name},
                              {"engine", to_string(sol.engine)},
                              {"window_length", sol.window_length},
                              {"max_contraction_ratio", sol.max_ratio()},
                              {"continuity_constant", sol.continuity_constant},
                              {"max_mass_drift", sol.max_mass_drift},
                              {"min_weight", sol.min_weight},
                              {"max_boundary_mass", sol.max_boundary_mass},
                              {"windows", windows}};
    return j.dump(2);
}

}  // namespace nlmarkov
