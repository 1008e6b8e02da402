#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "nlmarkov/nonlinear.hpp"

namespace nlmarkov {

/// xi_t = d mu_t / d alpha along `base`, from xi_0 = xi0, on the base nodes of [0, r].
///
/// This is the exact tangent of the left-endpoint scheme the solver converges to,
///   xi_{j+1} = V_j xi_j + K_j^T xi_j + s_j,
/// where V_j is the frozen step, K_j^T xi = sum_i pair(phi_i, xi) dV_j/dc_i mu_j carries
/// the Gateaux term and s_j = dV_j/dalpha mu_j is the parameter source. The step
/// derivatives are exact (Fourier multipliers for Lévy families, Fréchet derivatives of
/// the matrix exponential for order-one families). Signed measures, no projection.
Curve linearized_propagate(const Family& family, const KineticSolution& base, double alpha, const GridMeasure& xi0,
                           double r);

/// Derivative of mu_t in the direction xi of the initial data (no parameter source).
/// Rejects xi with nonzero mass.
Curve initial_data_derivative(const Family& family, const KineticSolution& base, const GridMeasure& xi, double r);

struct SensitivityRun {
    KineticSolution base;
    Curve xi;
    double max_mass = 0.0;  ///< sup_t |pair(1, xi_t)|
};

/// Solves the base trajectory at alpha and the tangent from xi0.
SensitivityRun run_sensitivity(const Family& family, const GridMeasure& mu0, const GridMeasure& xi0, double alpha,
                               double r, double delta, const SolverOptions& options = {});

/// sup_t |pair(1, xi_t)|.
double max_mass(const Curve& xi);

using InitialFamily = std::function<GridMeasure(double alpha)>;

struct FdRow {
    double h = 0.0;
    double defect = 0.0;  ///< max over sample times of dual_norm(D_h - xi_t, 2)
};

struct FdReport {
    std::vector<FdRow> rows;
    double fitted_order = 0.0;    ///< least-squares slope of log defect against log h
    double integral_defect = 0.0; ///< max_t dual_norm(mu^a - mu^{a-H} - H xi[a - H/2], 2)
    double integral_scale = 0.0;  ///< max_t dual_norm(mu^a - mu^{a-H}, 2)
    /// The defect drops between some pair of successive h, or every defect is at the noise floor.
    bool passed = false;
};

/// Central-difference validation of the tangent: D_h = (mu^{a+h} - mu^{a-h}) / (2h)
/// against xi_t at the sample times, plus the midpoint check of the integral
/// identity with H = h_list.front(). h_list must be positive and decreasing.
FdReport fd_validate(const Family& family, const InitialFamily& mu0_of_alpha, double alpha,
                     const std::vector<double>& h_list, double r, double delta,
                     const std::vector<double>& sample_times, const SolverOptions& options = {});

/// CSV `time,node,xi_weight` of every `stride`-th node.
void write_sensitivity_csv(std::ostream& os, const Curve& xi, std::size_t stride = 1);
std::string fd_report_json(const FdReport& report);

}  // namespace nlmarkov
