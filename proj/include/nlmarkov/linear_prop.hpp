#pragma once

#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "nlmarkov/generators.hpp"
#include "nlmarkov/grid.hpp"

namespace nlmarkov {

/// Time mesh t_0 < t_1 < ... < t_N.
class Partition {
public:
    explicit Partition(std::vector<double> nodes);
    /// N equal steps on [t, r].
    static Partition uniform(double t, double r, std::size_t steps);
    /// Equal steps of length as close to delta as possible without exceeding it.
    static Partition with_step(double t, double r, double delta);

    const std::vector<double>& nodes() const noexcept { return nodes_; }
    std::size_t steps() const noexcept { return nodes_.size() - 1; }
    double front() const noexcept { return nodes_.front(); }
    double back() const noexcept { return nodes_.back(); }
    double node(std::size_t j) const { return nodes_[j]; }
    double step(std::size_t j) const { return nodes_[j + 1] - nodes_[j]; }
    /// Largest step.
    double mesh() const;
    /// Index of node t (relative tolerance 1e-12) or NodeError.
    std::size_t index_of(double t) const;
    /// Every interval split in two.
    Partition refined() const;
    /// Nodes i..k as a partition of their own.
    Partition slice(std::size_t i, std::size_t k) const;

private:
    std::vector<double> nodes_;
};

enum class Engine { spectral, matrix, dense_oracle };
const char* to_string(Engine e);

/// Where coefficients are frozen on [t_j, t_{j+1}].
enum class Freeze { left, midpoint };

namespace detail {
struct PropagatorImpl;
}

/// Frozen-curve propagator on a partition: U^{t_i,t_k} acts on test functions
/// (backwards in time), V^{t_k,t_i} = (U^{t_i,t_k})^T on measures (forwards).
/// Immutable and cheap to copy.
class PropagatorHandle {
public:
    explicit PropagatorHandle(std::shared_ptr<const detail::PropagatorImpl> impl);

    /// Matrix engine from per-step generator matrices (no grid needed).
    static PropagatorHandle from_generators(std::vector<Matrix> generators, Partition partition,
                                            std::optional<Grid> grid = std::nullopt);
    /// Propagator from precomputed one-step factors U^{t_j,t_{j+1}}.
    static PropagatorHandle from_factors(std::vector<Matrix> factors, Partition partition, Engine tag,
                                         std::optional<Grid> grid = std::nullopt);

    Engine engine() const;
    const Partition& partition() const;
    const std::optional<Grid>& grid() const;
    Eigen::Index state_size() const;

    /// U^{t_i,t_k} f, i <= k.
    Vector apply(const Vector& f, std::size_t i, std::size_t k) const;
    /// V^{t_k,t_i} w, i <= k.
    Vector apply_dual(const Vector& w, std::size_t k, std::size_t i) const;
    /// Frozen generator of step j applied to f (or its transpose to a measure).
    Vector apply_generator(const Vector& f, std::size_t j, bool adjoint = false) const;

    /// Node-time versions; times must be partition nodes.
    TestFunction apply(const TestFunction& f, double t, double s) const;

private:
    std::shared_ptr<const detail::PropagatorImpl> impl_;
};

/// Fourier-multiplier propagator: the step-j symbol is eta of the triplet frozen
/// at t_j (or the midpoint); the multiplier of U^{t_i,t_k} is exp(sum_{i<=j<k} eta_j dt_j).
/// The curve supplies the measure argument at partition nodes; it may be empty
/// when the family has no moment functionals.
PropagatorHandle build_spectral(const LevyFamily& family, const Grid& grid, const Curve& curve,
                                const Partition& partition, Freeze freeze = Freeze::left);
/// Matrix propagator: step factor exp(dt_j A[mu_{t_j}]).
PropagatorHandle build_matrix(const OrderOneFamily& family, const Grid& grid, const Curve& curve,
                              const Partition& partition, Freeze freeze = Freeze::left);
/// Dispatch on the family kind.
PropagatorHandle build_propagator(const Family& family, const Grid& grid, const Curve& curve,
                                  const Partition& partition, Freeze freeze = Freeze::left);

/// Curve that is mu at every partition node.
Curve constant_curve(const GridMeasure& mu, const Partition& partition);

/// V^{s,t} mu for partition nodes t <= s.
GridMeasure dual_apply(const PropagatorHandle& handle, const GridMeasure& mu, double s, double t);

struct ConvergenceRow {
    int level = 0;
    double delta = 0.0;
    double residual = 0.0;
    double observed_order = 0.0;  ///< NaN where undefined
};

struct TProductResult {
    TestFunction value;
    std::vector<ConvergenceRow> rows;
    double observed_order = 0.0;  ///< last finite order
};

using HandleFactory = std::function<PropagatorHandle(const Partition&)>;

/// U(t, r) f over refining partitions (each step halving the mesh) until two
/// successive results differ by less than tol in sup norm. Throws NoConvergence
/// with the residual history after max_refinements.
TProductResult t_product(const HandleFactory& factory, const Partition& initial, const TestFunction& f, double tol,
                         int max_refinements = 12);

void write_convergence_csv(std::ostream& os, const std::vector<ConvergenceRow>& rows);

struct PropagatorComparison {
    double function_distance = 0.0;  ///< sup_f ||(U_a - U_b) f||_inf over the whole interval
    double measure_distance = 0.0;   ///< sup_mu dual_norm(V_a mu, V_b mu, 2)
    double generator_distance = 0.0; ///< sup_{j,f} ||(A_a,j - A_b,j) f||_inf / ck_norm(f, 2)
    double function_ratio = 0.0;     ///< function_distance / generator_distance (0 if undefined)
    double measure_ratio = 0.0;
};

/// Compares two handles on the same grid and partition over the full interval.
PropagatorComparison compare_propagators(const PropagatorHandle& a, const PropagatorHandle& b,
                                         const std::vector<TestFunction>& f_set,
                                         const std::vector<GridMeasure>& mu_set);

}  // namespace nlmarkov
