#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "nlmarkov/generators.hpp"
#include "nlmarkov/linear_prop.hpp"

namespace nlmarkov {

enum class InitialGuess {
    /// xi_s = mu at the window start.
    constant,
    /// Linear interpolation from the window-start measure to `guess_target`.
    interpolate,
};

struct SolverOptions {
    /// Sweeps stop once sup_t of the distance bound between successive curves is below tol.
    double tol = 1e-10;
    int max_sweeps = 200;
    /// A window is accepted when the second sweep shrinks the change by at least this factor.
    double accept_ratio = 0.5;
    Freeze freeze = Freeze::left;
    InitialGuess guess = InitialGuess::constant;
    std::optional<GridMeasure> guess_target;
    /// Clip ripples and renormalise after every sweep.
    bool project = true;
};

struct WindowLog {
    double start = 0.0;
    double length = 0.0;
    int sweeps = 0;
    int halvings = 0;               ///< window halvings before acceptance
    std::vector<double> distances;  ///< sup_t change per sweep
    std::vector<double> ratios;     ///< successive distance ratios
};

/// mu_t on the time mesh plus the fixed-point log.
struct KineticSolution {
    Curve curve;
    std::vector<WindowLog> windows;
    double window_length = 0.0;
    double continuity_constant = 0.0;  ///< max_j bound(mu_{j+1}, mu_j) / dt
    double max_mass_drift = 0.0;
    double min_weight = 0.0;
    double max_boundary_mass = 0.0;
    Engine engine = Engine::spectral;

    /// Largest sweep ratio over all windows (the contraction diagnostic).
    double max_ratio() const;
};

/// Fixed-point solution of d/dt (g, mu_t) = (A[mu_t] g, mu_t) on [0, r].
///
/// Each window [s, s + t0] iterates curve -> { V^{t,s}[curve] mu_s }, building a
/// frozen-curve propagator (spectral for Lévy families, matrix for order-one) on
/// every sweep. t0 starts at r and is halved until the first sweeps contract by
/// accept_ratio. Throws WellPosednessFailure when even a one-step window fails.
KineticSolution solve_kinetic(const Family& family, const GridMeasure& mu0, double r, double delta,
                              const SolverOptions& options = {});

/// Clip weights below -1e-12 to zero and renormalise when the mass error is in (1e-12, 1e-8).
void project_probability(GridMeasure& mu);

struct SemigroupRow {
    double t = 0.0;
    double s = 0.0;
    double defect = 0.0;  ///< dual_norm(T_s T_t mu, T_{t+s} mu, 2)
};

/// Semigroup defects for the given (t, s) pairs; times must be multiples of delta.
std::vector<SemigroupRow> semigroup_check(const Family& family, const GridMeasure& mu,
                                          const std::vector<std::pair<double, double>>& pairs, double delta,
                                          const SolverOptions& options = {});

struct LipschitzRow {
    double t = 0.0;
    double data_ratio = 0.0;  ///< dual_norm(T_t mu, T_t eta, 2) / dual_norm(mu, eta, 2)
    double time_ratio = 0.0;  ///< dual_norm(T_t mu, mu, 2) / t
};

struct LipschitzReport {
    std::vector<LipschitzRow> rows;
    bool skipped = false;  ///< mu and eta coincide
    double max_data_ratio = 0.0;
    double max_time_ratio = 0.0;
    double min_time_ratio = 0.0;
};

/// Ratios at the sample times (mesh nodes of [0, r]).
LipschitzReport lipschitz_probe(const Family& family, const GridMeasure& mu, const GridMeasure& eta, double r,
                                double delta, const std::vector<double>& sample_times,
                                const SolverOptions& options = {});

struct StabilityReport {
    double sup_distance = 0.0;  ///< sup_t dual_norm(T~_t eta, T_t mu, 2) over the sample times
    double kappa_hat = 0.0;     ///< sup over the sampled tube of the generator distance
    double initial_distance = 0.0;
    double ratio = 0.0;         ///< sup_distance / (kappa_hat + initial_distance)
    std::vector<double> distances;
};

/// Generator distance between two families at one measure: coefficient distance
/// for Lévy families, sup_x |b - b~| + sum min(1,|y|) |nu - nu~| for order-one.
double generator_distance(const Family& a, const Family& b, const GridMeasure& mu, double t);

StabilityReport stability_compare(const Family& family_a, const Family& family_b, const GridMeasure& mu,
                                  const GridMeasure& eta, double r, double delta,
                                  const std::vector<double>& sample_times, const SolverOptions& options = {});

/// Long-format CSV of every `stride`-th time node (the last node always included).
void write_solution_csv(std::ostream& os, const Curve& curve, std::size_t stride = 1,
                        const std::string& value_name = "weight");
/// JSON run report: windows, ratios, mass drift, continuity constant.
std::string run_report_json(const KineticSolution& sol, const std::string& scenario_name);

}  // namespace nlmarkov
