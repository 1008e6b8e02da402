#include "nlmarkov/linear_prop.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>

#include <spdlog/spdlog.h>

#include "nlmarkov/error.hpp"
#include "nlmarkov/expm.hpp"
#include "nlmarkov/measures.hpp"
#include "nlmarkov/spectral.hpp"

namespace nlmarkov {

using Eigen::Index;

Partition::Partition(std::vector<double> nodes) : nodes_(std::move(nodes)) {
    if (nodes_.size() < 2) throw InvariantViolation("Partition: need at least two nodes");
    for (std::size_t i = 1; i < nodes_.size(); ++i) {
        if (!(nodes_[i] > nodes_[i - 1])) throw InvariantViolation("Partition: nodes must be strictly increasing");
    }
}

Partition Partition::uniform(double t, double r, std::size_t steps) {
    if (steps == 0) throw InvariantViolation("Partition: need at least one step");
    if (!(r > t)) throw InvariantViolation("Partition: need r > t");
    std::vector<double> nodes(steps + 1);
    for (std::size_t j = 0; j <= steps; ++j) {
        nodes[j] = t + (r - t) * static_cast<double>(j) / static_cast<double>(steps);
    }
    nodes.back() = r;
    return Partition(std::move(nodes));
}

Partition Partition::with_step(double t, double r, double delta) {
    if (!(delta > 0)) throw InvariantViolation("Partition: step must be positive");
    const auto steps = static_cast<std::size_t>(std::ceil((r - t) / delta - 1e-9));
    return uniform(t, r, std::max<std::size_t>(steps, 1));
}

double Partition::mesh() const {
    double m = 0.0;
    for (std::size_t j = 0; j + 1 < nodes_.size(); ++j) m = std::max(m, step(j));
    return m;
}

std::size_t Partition::index_of(double t) const {
    const double tol = 1e-12 * std::max(1.0, std::abs(t));
    auto it = std::lower_bound(nodes_.begin(), nodes_.end(), t - tol);
    if (it != nodes_.end() && std::abs(*it - t) <= tol) return static_cast<std::size_t>(it - nodes_.begin());
    throw NodeError("time " + std::to_string(t) + " is not a partition node");
}

Partition Partition::refined() const {
    std::vector<double> nodes;
    nodes.reserve(2 * nodes_.size() - 1);
    for (std::size_t j = 0; j + 1 < nodes_.size(); ++j) {
        nodes.push_back(nodes_[j]);
        nodes.push_back(0.5 * (nodes_[j] + nodes_[j + 1]));
    }
    nodes.push_back(nodes_.back());
    return Partition(std::move(nodes));
}

Partition Partition::slice(std::size_t i, std::size_t k) const {
    if (!(i < k && k < nodes_.size())) throw InvariantViolation("Partition::slice: need i < k <= N");
    return Partition(std::vector<double>(nodes_.begin() + static_cast<std::ptrdiff_t>(i),
                                         nodes_.begin() + static_cast<std::ptrdiff_t>(k) + 1));
}

const char* to_string(Engine e) {
    switch (e) {
        case Engine::spectral: return "spectral";
        case Engine::matrix: return "matrix";
        case Engine::dense_oracle: return "dense-oracle";
    }
    return "unknown";
}

namespace detail {

struct PropagatorImpl {
    Partition partition;
    std::optional<Grid> grid;
    Engine engine;
    Index n;

    PropagatorImpl(Partition p, std::optional<Grid> g, Engine e, Index size)
        : partition(std::move(p)), grid(std::move(g)), engine(e), n(size) {}
    virtual ~PropagatorImpl() = default;

    virtual Vector apply(const Vector& f, std::size_t i, std::size_t k) const = 0;
    virtual Vector apply_dual(const Vector& w, std::size_t k, std::size_t i) const = 0;
    virtual Vector apply_generator(const Vector& f, std::size_t j, bool adjoint) const = 0;
};

}  // namespace detail

namespace {

struct SpectralImpl final : detail::PropagatorImpl {
    std::shared_ptr<const SpectralTransform> transform;
    std::vector<ComplexVector> symbols;     // eta_j, one per step
    std::vector<ComplexVector> cumulative;  // S_j = sum_{l<j} eta_l dt_l

    using detail::PropagatorImpl::PropagatorImpl;

    ComplexVector multiplier(std::size_t i, std::size_t k) const {
        return (cumulative[k] - cumulative[i]).array().exp().matrix();
    }
    Vector apply(const Vector& f, std::size_t i, std::size_t k) const override {
        if (i == k) return f;
        return transform->apply_multiplier(f, multiplier(i, k));
    }
    Vector apply_dual(const Vector& w, std::size_t k, std::size_t i) const override {
        if (i == k) return w;
        return transform->apply_multiplier(w, multiplier(i, k).conjugate());
    }
    Vector apply_generator(const Vector& f, std::size_t j, bool adjoint) const override {
        return transform->apply_multiplier(f, adjoint ? ComplexVector(symbols[j].conjugate()) : symbols[j]);
    }
};

struct MatrixImpl final : detail::PropagatorImpl {
    std::vector<Matrix> generators;  // may be empty for factor-only handles
    std::vector<Matrix> factors;

    using detail::PropagatorImpl::PropagatorImpl;

    Vector apply(const Vector& f, std::size_t i, std::size_t k) const override {
        Vector v = f;
        for (std::size_t j = k; j > i; --j) v = factors[j - 1] * v;
        return v;
    }
    Vector apply_dual(const Vector& w, std::size_t k, std::size_t i) const override {
        Vector v = w;
        for (std::size_t j = i; j < k; ++j) v = factors[j].transpose() * v;
        return v;
    }
    Vector apply_generator(const Vector& f, std::size_t j, bool adjoint) const override {
        if (generators.empty()) throw Error("propagator handle carries no generator matrices");
        return adjoint ? Vector(generators[j].transpose() * f) : Vector(generators[j] * f);
    }
};

void check_range(const detail::PropagatorImpl& impl, std::size_t i, std::size_t k) {
    if (i > k || k > impl.partition.steps()) throw InvariantViolation("propagator: need node indices i <= k <= N");
}

void check_size(const detail::PropagatorImpl& impl, const Vector& v) {
    if (v.size() != impl.n) throw DimensionError("propagator: vector size does not match the state size");
}

// Moments and time at which step j is frozen.
struct FreezePoint {
    Vector c;
    double t;
    const GridMeasure* mu;
};

class FreezeSchedule {
public:
    FreezeSchedule(const std::vector<MomentFn>& moments, const Grid& grid, const Curve& curve,
                   const Partition& partition, Freeze freeze)
        : curve_(curve), partition_(partition), freeze_(freeze), has_moments_(!moments.empty()) {
        if (has_moments_) {
            if (curve.size() == 0) throw InvariantViolation("build: family depends on mu but the curve is empty");
            require_same_grid(curve.grid(), grid, "build");
            phi_ = sample_moments(moments, grid);
        }
    }

    FreezePoint at(std::size_t j) const {
        const double t0 = partition_.node(j);
        const double t1 = partition_.node(j + 1);
        FreezePoint p{Vector(0), freeze_ == Freeze::left ? t0 : 0.5 * (t0 + t1), nullptr};
        if (!has_moments_) return p;
        const GridMeasure& mu0 = curve_.at(t0);
        p.mu = &mu0;
        p.c = phi_.transpose() * mu0.weights;
        if (freeze_ == Freeze::midpoint) p.c = 0.5 * (p.c + phi_.transpose() * curve_.at(t1).weights);
        return p;
    }

private:
    const Curve& curve_;
    const Partition& partition_;
    Freeze freeze_;
    bool has_moments_;
    Matrix phi_;
};

Matrix step_exponential(const Matrix& a, double dt) {
    try {
        return expm(dt * a);
    } catch (const NumericalError&) {
        // Retry with an explicit extra halving before giving up.
        for (int s = 1; s <= 4; ++s) {
            try {
                Matrix e = expm(std::ldexp(dt, -s) * a);
                for (int k = 0; k < s; ++k) e = e * e;
                if (e.allFinite()) return e;
            } catch (const NumericalError&) {
            }
        }
        throw;
    }
}

}  // namespace

PropagatorHandle::PropagatorHandle(std::shared_ptr<const detail::PropagatorImpl> impl) : impl_(std::move(impl)) {}

PropagatorHandle PropagatorHandle::from_generators(std::vector<Matrix> generators, Partition partition,
                                                   std::optional<Grid> grid) {
    if (generators.size() != partition.steps()) throw DimensionError("from_generators: one matrix per step required");
    const Index n = generators.empty() ? 0 : generators.front().rows();
    auto impl = std::make_shared<MatrixImpl>(partition, std::move(grid), Engine::matrix, n);
    impl->factors.reserve(generators.size());
    for (std::size_t j = 0; j < generators.size(); ++j) {
        if (generators[j].rows() != n || generators[j].cols() != n) throw DimensionError("from_generators: size mismatch");
        impl->factors.push_back(step_exponential(generators[j], partition.step(j)));
    }
    impl->generators = std::move(generators);
    return PropagatorHandle(std::move(impl));
}

PropagatorHandle PropagatorHandle::from_factors(std::vector<Matrix> factors, Partition partition, Engine tag,
                                                std::optional<Grid> grid) {
    if (factors.size() != partition.steps()) throw DimensionError("from_factors: one matrix per step required");
    const Index n = factors.empty() ? 0 : factors.front().rows();
    auto impl = std::make_shared<MatrixImpl>(partition, std::move(grid), tag, n);
    impl->factors = std::move(factors);
    return PropagatorHandle(std::move(impl));
}

Engine PropagatorHandle::engine() const { return impl_->engine; }
const Partition& PropagatorHandle::partition() const { return impl_->partition; }
const std::optional<Grid>& PropagatorHandle::grid() const { return impl_->grid; }
Eigen::Index PropagatorHandle::state_size() const { return impl_->n; }

Vector PropagatorHandle::apply(const Vector& f, std::size_t i, std::size_t k) const {
    check_range(*impl_, i, k);
    check_size(*impl_, f);
    return impl_->apply(f, i, k);
}

Vector PropagatorHandle::apply_dual(const Vector& w, std::size_t k, std::size_t i) const {
    check_range(*impl_, i, k);
    check_size(*impl_, w);
    return impl_->apply_dual(w, k, i);
}

Vector PropagatorHandle::apply_generator(const Vector& f, std::size_t j, bool adjoint) const {
    if (j >= impl_->partition.steps()) throw InvariantViolation("apply_generator: step index out of range");
    check_size(*impl_, f);
    return impl_->apply_generator(f, j, adjoint);
}

TestFunction PropagatorHandle::apply(const TestFunction& f, double t, double s) const {
    if (!impl_->grid) throw DimensionError("propagator has no grid attached");
    require_same_grid(f.grid, *impl_->grid, "PropagatorHandle::apply");
    const std::size_t i = impl_->partition.index_of(t);
    const std::size_t k = impl_->partition.index_of(s);
    return {f.grid, apply(f.values, i, k), f.declared_order};
}

PropagatorHandle build_spectral(const LevyFamily& family, const Grid& grid, const Curve& curve,
                                const Partition& partition, Freeze freeze) {
    if (grid.dim() != family.dim) throw DimensionError("build_spectral: family and grid dimensions differ");
    auto impl = std::make_shared<SpectralImpl>(partition, grid, Engine::spectral, static_cast<Index>(grid.size()));
    impl->transform = std::make_shared<SpectralTransform>(grid);
    const FreezeSchedule schedule(family.moments, grid, curve, partition, freeze);
    const auto& freqs = impl->transform->frequencies();
    impl->symbols.reserve(partition.steps());
    impl->cumulative.reserve(partition.steps() + 1);
    impl->cumulative.push_back(ComplexVector::Zero(static_cast<Index>(freqs.size())));
    for (std::size_t j = 0; j < partition.steps(); ++j) {
        const FreezePoint p = schedule.at(j);
        impl->symbols.push_back(levy_symbol(family.coefficients(p.c, family.alpha, p.t), freqs));
        impl->cumulative.push_back(impl->cumulative.back() + partition.step(j) * impl->symbols.back());
    }
    return PropagatorHandle(std::move(impl));
}

PropagatorHandle build_matrix(const OrderOneFamily& family, const Grid& grid, const Curve& curve,
                              const Partition& partition, Freeze freeze) {
    if (grid.dim() != 1) throw DimensionError("build_matrix: 1-d grids only");
    const FreezeSchedule schedule(family.moments, grid, curve, partition, freeze);
    std::vector<Matrix> generators;
    generators.reserve(partition.steps());
    for (std::size_t j = 0; j < partition.steps(); ++j) {
        const FreezePoint p = schedule.at(j);
        generators.push_back(assemble_matrix(family, grid, p.c, family.alpha, p.t, p.mu).matrix);
    }
    return PropagatorHandle::from_generators(std::move(generators), partition, grid);
}

PropagatorHandle build_propagator(const Family& family, const Grid& grid, const Curve& curve,
                                  const Partition& partition, Freeze freeze) {
    if (const auto* lf = std::get_if<LevyFamily>(&family)) return build_spectral(*lf, grid, curve, partition, freeze);
    return build_matrix(std::get<OrderOneFamily>(family), grid, curve, partition, freeze);
}

Curve constant_curve(const GridMeasure& mu, const Partition& partition) {
    return Curve(partition.nodes(), std::vector<GridMeasure>(partition.nodes().size(), mu));
}

GridMeasure dual_apply(const PropagatorHandle& handle, const GridMeasure& mu, double s, double t) {
    if (!handle.grid()) throw DimensionError("dual_apply: propagator has no grid attached");
    require_same_grid(mu.grid, *handle.grid(), "dual_apply");
    if (s < t) throw InvariantViolation("dual_apply: need s >= t");
    const std::size_t k = handle.partition().index_of(s);
    const std::size_t i = handle.partition().index_of(t);
    return {mu.grid, handle.apply_dual(mu.weights, k, i)};
}

TProductResult t_product(const HandleFactory& factory, const Partition& initial, const TestFunction& f, double tol,
                         int max_refinements) {
    if (!(tol > 0)) throw InvariantViolation("t_product: tol must be positive");
    Partition part = initial;
    auto evaluate = [&](const Partition& p) { return factory(p).apply(f.values, 0, p.steps()); };
    Vector previous = evaluate(part);
    TProductResult out{TestFunction(f.grid, previous, f.declared_order), {}, std::numeric_limits<double>::quiet_NaN()};
    out.rows.push_back({0, part.mesh(), std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()});
    std::vector<double> history;
    for (int level = 1; level <= max_refinements; ++level) {
        part = part.refined();
        Vector current = evaluate(part);
        const double residual = (current - previous).cwiseAbs().maxCoeff();
        double order = std::numeric_limits<double>::quiet_NaN();
        if (!history.empty() && history.back() > 0 && residual > 0) order = std::log2(history.back() / residual);
        history.push_back(residual);
        out.rows.push_back({level, part.mesh(), residual, order});
        if (std::isfinite(order)) out.observed_order = order;
        spdlog::debug("t_product level {} delta {:.3e} residual {:.3e} order {:.3f}", level, part.mesh(), residual, order);
        out.value.values = current;
        if (residual < tol) return out;
        previous = std::move(current);
    }
    throw NoConvergence("t_product: residual still above tolerance after " + std::to_string(max_refinements) +
                            " refinements",
                        history);
}

void write_convergence_csv(std::ostream& os, const std::vector<ConvergenceRow>& rows) {
    os << std::setprecision(17) << "refinement_level,delta,residual,observed_order\n";
    for (const auto& r : rows) os << r.level << ',' << r.delta << ',' << r.residual << ',' << r.observed_order << '\n';
}

PropagatorComparison compare_propagators(const PropagatorHandle& a, const PropagatorHandle& b,
                                         const std::vector<TestFunction>& f_set,
                                         const std::vector<GridMeasure>& mu_set) {
    if (a.partition().nodes() != b.partition().nodes()) throw InvariantViolation("compare_propagators: partitions differ");
    if (!a.grid() || !b.grid()) throw DimensionError("compare_propagators: handles need grids");
    require_same_grid(*a.grid(), *b.grid(), "compare_propagators");
    const std::size_t n_steps = a.partition().steps();
    PropagatorComparison out;
    for (const TestFunction& f : f_set) {
        out.function_distance = std::max(
            out.function_distance, (a.apply(f.values, 0, n_steps) - b.apply(f.values, 0, n_steps)).cwiseAbs().maxCoeff());
        const double norm = ck_norm(f, std::min(2, f.declared_order));
        if (norm == 0.0) continue;
        for (std::size_t j = 0; j < n_steps; ++j) {
            try {
                const double d = (a.apply_generator(f.values, j) - b.apply_generator(f.values, j)).cwiseAbs().maxCoeff();
                out.generator_distance = std::max(out.generator_distance, d / norm);
            } catch (const Error&) {
                break;  // factor-only handle
            }
        }
    }
    for (const GridMeasure& mu : mu_set) {
        const GridMeasure va(mu.grid, a.apply_dual(mu.weights, n_steps, 0));
        const GridMeasure vb(mu.grid, b.apply_dual(mu.weights, n_steps, 0));
        out.measure_distance = std::max(out.measure_distance, dual_norm(va, vb, 2));
    }
    if (out.generator_distance > 0) {
        out.function_ratio = out.function_distance / out.generator_distance;
        out.measure_ratio = out.measure_distance / out.generator_distance;
    }
    return out;
}

}  // namespace nlmarkov
