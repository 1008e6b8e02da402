#pragma once

#include <iosfwd>
#include <vector>

#include "nlmarkov/linear_prop.hpp"
#include "nlmarkov/operators.hpp"

namespace nlmarkov {

/// Quadrature of the Duhamel integral over one partition interval.
enum class Quadrature {
    /// dt/2 (F_m g_m + U_m F_{m+1} g_{m+1}); needs F at every node.
    trapezoid,
    /// dt F_m U_m g_{m+1}; needs F at every node (the last one is unused).
    left_endpoint,
    /// K_m g_{m+1} with caller-supplied step operators K_m, one per interval.
    step_operators,
};

struct PerturbationOptions {
    double tol = 1e-12;
    int max_sweeps = 50;
    Quadrature quadrature = Quadrature::trapezoid;
    int max_bisections = 8;
};

/// Base propagator U plus a perturbation family: F at partition nodes, or the
/// step operators K_m for Quadrature::step_operators.
struct PerturbedHandle {
    PropagatorHandle base;
    std::vector<OperatorPtr> terms;
    PerturbationOptions options;

    PerturbedHandle(PropagatorHandle b, std::vector<OperatorPtr> t, PerturbationOptions o = {});
};

struct PicardReport {
    int sweeps = 0;
    int bisections = 0;
    std::vector<double> residuals;  ///< sup-norm change per sweep (last segment solved)
    double ratio = 0.0;             ///< largest successive residual ratio observed
};

struct PerturbedResult {
    Vector value;
    PicardReport report;
};

/// Phi^{t,r} f from the mild equation f_t = U^{t,r} f + int_t^r U^{t,s} F_s f_s ds,
/// solved by Picard iteration over the whole node set of [t, r]. Without
/// contraction after max_sweeps the interval is bisected at a node and the
/// halves are composed; DivergenceError once bisection is exhausted.
PerturbedResult perturbed_propagate(const PerturbedHandle& handle, const Vector& f, double t, double r);
TestFunction perturbed_propagate(const PerturbedHandle& handle, const TestFunction& f, double t, double r,
                                 PicardReport* report = nullptr);

/// Psi^{r,t} xi, the exact transpose of the discrete Phi^{t,r}: stepped forward
/// node by node (with an inner Neumann solve for the trapezoid rule).
Vector dual_perturbed(const PerturbedHandle& handle, const Vector& xi, double r, double t);
GridMeasure dual_perturbed(const PerturbedHandle& handle, const GridMeasure& xi, double r, double t);
/// The curve s -> Psi^{s,t} xi on the nodes of [t, r].
Curve dual_perturbed_curve(const PerturbedHandle& handle, const GridMeasure& xi, double t, double r);

/// Order-m Dyson partial sum: m Picard sweeps started from U f.
Vector dyson_partial_sum(const PerturbedHandle& handle, const Vector& f, double t, double r, int m);

/// c_U (c_U c_F (r-t))^{m+1} / (m+1)! exp(c_U c_F (r-t)).
double series_tail_bound(double norm_u, double norm_f, double r_minus_t, int m);

void write_picard_csv(std::ostream& os, const PicardReport& report);

}  // namespace nlmarkov
