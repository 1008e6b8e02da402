#include "nlmarkov/perturbation.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>

#include <spdlog/spdlog.h>

#include "nlmarkov/error.hpp"

namespace nlmarkov {

namespace {

double sup(const Vector& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

class Picard {
public:
    explicit Picard(const PerturbedHandle& h) : h_(h), part_(h.base.partition()) {}

    Vector step_u(const Vector& v, std::size_t m) const { return h_.base.apply(v, m, m + 1); }

    // One sweep over nodes i..k (local index m - i), given the previous iterate.
    std::vector<Vector> sweep(const std::vector<Vector>& old, const Vector& f, std::size_t i, std::size_t k) const {
        std::vector<Vector> next(old.size());
        next[k - i] = f;
        for (std::size_t m = k; m-- > i;) {
            const std::size_t l = m - i;
            const double dt = part_.step(m);
            switch (h_.options.quadrature) {
                case Quadrature::trapezoid:
                    next[l] = step_u(next[l + 1] + 0.5 * dt * h_.terms[m + 1]->apply(old[l + 1]), m) +
                              0.5 * dt * h_.terms[m]->apply(old[l]);
                    break;
                case Quadrature::left_endpoint:
                    next[l] = step_u(next[l + 1], m) + dt * h_.terms[m]->apply(step_u(old[l + 1], m));
                    break;
                case Quadrature::step_operators:
                    next[l] = step_u(next[l + 1], m) + h_.terms[m]->apply(old[l + 1]);
                    break;
            }
        }
        return next;
    }

    std::vector<Vector> unperturbed(const Vector& f, std::size_t i, std::size_t k) const {
        std::vector<Vector> g(k - i + 1);
        g[k - i] = f;
        for (std::size_t m = k; m-- > i;) g[m - i] = step_u(g[m - i + 1], m);
        return g;
    }

    // Returns the value at node i, or throws DivergenceError.
    Vector solve(const Vector& f, std::size_t i, std::size_t k, PicardReport& rep) const {
        std::vector<Vector> g = unperturbed(f, i, k);
        std::vector<double> residuals;
        double ratio = 0.0;
        for (int s = 1; s <= h_.options.max_sweeps; ++s) {
            std::vector<Vector> next = sweep(g, f, i, k);
            double res = 0.0;
            for (std::size_t l = 0; l < g.size(); ++l) res = std::max(res, sup(next[l] - g[l]));
            if (!std::isfinite(res)) break;
            if (!residuals.empty() && residuals.back() > 0) ratio = std::max(ratio, res / residuals.back());
            residuals.push_back(res);
            g = std::move(next);
            if (res < h_.options.tol) {
                rep.sweeps += s;
                rep.residuals = residuals;
                rep.ratio = std::max(rep.ratio, ratio);
                return g.front();
            }
        }
        throw DivergenceError("perturbed_propagate: Picard iteration did not contract within " +
                                  std::to_string(h_.options.max_sweeps) + " sweeps",
                              residuals);
    }

    Vector solve_bisecting(const Vector& f, std::size_t i, std::size_t k, int depth, PicardReport& rep) const {
        try {
            return solve(f, i, k, rep);
        } catch (const DivergenceError& e) {
            if (depth >= h_.options.max_bisections || k - i < 2) throw;
            const std::size_t mid = (i + k) / 2;
            spdlog::debug("perturbed_propagate: bisecting [{}, {}] at {}", part_.node(i), part_.node(k), part_.node(mid));
            ++rep.bisections;
            const Vector right = solve_bisecting(f, mid, k, depth + 1, rep);
            return solve_bisecting(right, i, mid, depth + 1, rep);
        }
    }

private:
    const PerturbedHandle& h_;
    const Partition& part_;
};

// x = (I - a F^T)^{-1} xi by Neumann iteration.
Vector neumann_solve(const LinearOperator& f, double a, const Vector& xi) {
    Vector x = xi;
    for (int it = 0; it < 200; ++it) {
        Vector next = xi + a * f.apply_adjoint(x);
        const double change = sup(next - x);
        x = std::move(next);
        if (change <= 1e-16 * std::max(1.0, sup(x))) return x;
        if (!std::isfinite(change)) break;
    }
    throw DivergenceError("dual_perturbed: inner solve (I - dt/2 F^T) x = xi did not converge", {});
}

}  // namespace

PerturbedHandle::PerturbedHandle(PropagatorHandle b, std::vector<OperatorPtr> t, PerturbationOptions o)
    : base(std::move(b)), terms(std::move(t)), options(o) {
    const std::size_t steps = base.partition().steps();
    const std::size_t expected = options.quadrature == Quadrature::step_operators ? steps : steps + 1;
    if (terms.size() != expected) {
        throw DimensionError("PerturbedHandle: expected " + std::to_string(expected) + " perturbation operators, got " +
                             std::to_string(terms.size()));
    }
    for (const auto& op : terms) {
        if (!op || op->size() != base.state_size()) throw DimensionError("PerturbedHandle: operator size mismatch");
    }
    if (!(options.tol > 0) || options.max_sweeps < 1) throw InvariantViolation("PerturbedHandle: invalid options");
}

PerturbedResult perturbed_propagate(const PerturbedHandle& handle, const Vector& f, double t, double r) {
    const Partition& part = handle.base.partition();
    const std::size_t i = part.index_of(t);
    const std::size_t k = part.index_of(r);
    if (i > k) throw InvariantViolation("perturbed_propagate: need t <= r");
    PerturbedResult out;
    if (i == k) {
        out.value = f;
        return out;
    }
    out.value = Picard(handle).solve_bisecting(f, i, k, 0, out.report);
    return out;
}

TestFunction perturbed_propagate(const PerturbedHandle& handle, const TestFunction& f, double t, double r,
                                 PicardReport* report) {
    PerturbedResult res = perturbed_propagate(handle, f.values, t, r);
    if (report != nullptr) *report = res.report;
    return {f.grid, std::move(res.value), f.declared_order};
}

namespace {

Vector dual_step(const PerturbedHandle& h, const Vector& xi, std::size_t m) {
    const double dt = h.base.partition().step(m);
    switch (h.options.quadrature) {
        case Quadrature::trapezoid: {
            const Vector x = neumann_solve(*h.terms[m], 0.5 * dt, xi);
            const Vector v = h.base.apply_dual(x, m + 1, m);
            return v + 0.5 * dt * h.terms[m + 1]->apply_adjoint(v);
        }
        case Quadrature::left_endpoint:
            return h.base.apply_dual(xi + dt * h.terms[m]->apply_adjoint(xi), m + 1, m);
        case Quadrature::step_operators:
            return h.base.apply_dual(xi, m + 1, m) + h.terms[m]->apply_adjoint(xi);
    }
    return xi;
}

}  // namespace

Vector dual_perturbed(const PerturbedHandle& handle, const Vector& xi, double r, double t) {
    const Partition& part = handle.base.partition();
    const std::size_t i = part.index_of(t);
    const std::size_t k = part.index_of(r);
    if (i > k) throw InvariantViolation("dual_perturbed: need r >= t");
    if (xi.size() != handle.base.state_size()) throw DimensionError("dual_perturbed: size mismatch");
    Vector x = xi;
    for (std::size_t m = i; m < k; ++m) x = dual_step(handle, x, m);
    return x;
}

GridMeasure dual_perturbed(const PerturbedHandle& handle, const GridMeasure& xi, double r, double t) {
    return {xi.grid, dual_perturbed(handle, xi.weights, r, t)};
}

Curve dual_perturbed_curve(const PerturbedHandle& handle, const GridMeasure& xi, double t, double r) {
    const Partition& part = handle.base.partition();
    const std::size_t i = part.index_of(t);
    const std::size_t k = part.index_of(r);
    if (i > k) throw InvariantViolation("dual_perturbed_curve: need r >= t");
    std::vector<double> times{part.node(i)};
    std::vector<GridMeasure> values{xi};
    Vector x = xi.weights;
    for (std::size_t m = i; m < k; ++m) {
        x = dual_step(handle, x, m);
        times.push_back(part.node(m + 1));
        values.emplace_back(xi.grid, x);
    }
    return Curve(std::move(times), std::move(values));
}

Vector dyson_partial_sum(const PerturbedHandle& handle, const Vector& f, double t, double r, int m) {
    const Partition& part = handle.base.partition();
    const std::size_t i = part.index_of(t);
    const std::size_t k = part.index_of(r);
    if (i > k || m < 0) throw InvariantViolation("dyson_partial_sum: need t <= r and m >= 0");
    const Picard picard(handle);
    std::vector<Vector> g = picard.unperturbed(f, i, k);
    for (int s = 0; s < m; ++s) g = picard.sweep(g, f, i, k);
    return g.front();
}

double series_tail_bound(double norm_u, double norm_f, double r_minus_t, int m) {
    if (norm_u < 0 || norm_f < 0 || r_minus_t < 0 || m < 0) throw InvariantViolation("series_tail_bound: inputs must be >= 0");
    const double x = norm_u * norm_f * r_minus_t;
    if (x == 0.0 || norm_u == 0.0) return 0.0;
    const double k = static_cast<double>(m) + 1.0;
    return norm_u * std::exp(k * std::log(x) - std::lgamma(k + 1.0) + x);
}

void write_picard_csv(std::ostream& os, const PicardReport& report) {
    os << std::setprecision(17) << "iteration,residual\n";
    for (std::size_t i = 0; i < report.residuals.size(); ++i) os << i + 1 << ',' << report.residuals[i] << '\n';
}

}  // namespace nlmarkov
