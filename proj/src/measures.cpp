#include "nlmarkov/measures.hpp"

#include <cmath>
#include <sstream>

#include "nlmarkov/error.hpp"
#include "nlmarkov/simplex.hpp"

namespace nlmarkov {

namespace {

using Eigen::Index;

Index flat(const Grid& g, std::size_t i, std::size_t j) { return static_cast<Index>(i * g.n() + j); }

void require_order(int k) {
    if (k < 0 || k > 2) throw InvariantViolation("smoothness order must be 0, 1 or 2");
}

}  // namespace

std::vector<StencilRow> difference_rows(const Grid& g, int order) {
    require_order(order);
    const std::size_t n = g.n();
    const double h = g.spacing();
    std::vector<StencilRow> rows;
    if (order == 0) {
        rows.reserve(g.size());
        for (std::size_t k = 0; k < g.size(); ++k) rows.push_back({{static_cast<Index>(k), 1.0}});
        return rows;
    }
    if (g.dim() == 1) {
        if (order == 1) {
            for (std::size_t i = 0; i + 1 < n; ++i) {
                rows.push_back({{static_cast<Index>(i), -1.0 / h}, {static_cast<Index>(i + 1), 1.0 / h}});
            }
        } else {
            const double c = 1.0 / (h * h);
            for (std::size_t i = 1; i + 1 < n; ++i) {
                rows.push_back({{static_cast<Index>(i - 1), c}, {static_cast<Index>(i), -2.0 * c}, {static_cast<Index>(i + 1), c}});
            }
        }
        return rows;
    }
    if (order == 1) {
        for (std::size_t i = 0; i + 1 < n; ++i)
            for (std::size_t j = 0; j < n; ++j) rows.push_back({{flat(g, i, j), -1.0 / h}, {flat(g, i + 1, j), 1.0 / h}});
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j + 1 < n; ++j) rows.push_back({{flat(g, i, j), -1.0 / h}, {flat(g, i, j + 1), 1.0 / h}});
        return rows;
    }
    const double c = 1.0 / (h * h);
    for (std::size_t i = 1; i + 1 < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            rows.push_back({{flat(g, i - 1, j), c}, {flat(g, i, j), -2.0 * c}, {flat(g, i + 1, j), c}});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 1; j + 1 < n; ++j)
            rows.push_back({{flat(g, i, j - 1), c}, {flat(g, i, j), -2.0 * c}, {flat(g, i, j + 1), c}});
    for (std::size_t i = 0; i + 1 < n; ++i)
        for (std::size_t j = 0; j + 1 < n; ++j)
            rows.push_back({{flat(g, i, j), c}, {flat(g, i + 1, j), -c}, {flat(g, i, j + 1), -c}, {flat(g, i + 1, j + 1), c}});
    return rows;
}

double pair(const TestFunction& f, const GridMeasure& mu) {
    require_same_grid(f.grid, mu.grid, "pair");
    return f.values.dot(mu.weights);
}

double ck_norm(const TestFunction& f, int k) {
    require_order(k);
    if (k > f.declared_order) throw InvariantViolation("ck_norm: order exceeds the declared smoothness class");
    double total = 0.0;
    for (int l = 0; l <= k; ++l) {
        double sup = 0.0;
        for (const auto& row : difference_rows(f.grid, l)) {
            double v = 0.0;
            for (const auto& [idx, c] : row) v += c * f.values[idx];
            sup = std::max(sup, std::abs(v));
        }
        total += sup;
    }
    return total;
}

namespace {

// LP in the dual form: min t s.t. sum_l D_l' y_l = c, ||y_l||_1 <= t.
// Columns: (p_l, q_l) per stencil row of each order, then t, then slacks s_l.
DualNormResult solve_dual_norm_lp(const Grid& g, const Vector& c, int k) {
    const auto n = static_cast<Index>(g.size());
    std::vector<std::vector<StencilRow>> ops;
    for (int l = 0; l <= k; ++l) ops.push_back(difference_rows(g, l));

    lp::StandardFormLp problem;
    problem.rows = n + k + 1;
    std::vector<double> cost;
    for (int l = 0; l <= k; ++l) {
        const Index norm_row = n + l;
        for (const auto& row : ops[static_cast<std::size_t>(l)]) {
            lp::SparseColumn p;
            lp::SparseColumn q;
            for (const auto& [idx, coef] : row) {
                p.emplace_back(idx, coef);
                q.emplace_back(idx, -coef);
            }
            p.emplace_back(norm_row, 1.0);
            q.emplace_back(norm_row, 1.0);
            problem.columns.push_back(std::move(p));
            problem.columns.push_back(std::move(q));
            cost.push_back(0.0);
            cost.push_back(0.0);
        }
    }
    const auto t_col = static_cast<Index>(problem.columns.size());
    lp::SparseColumn tcol;
    for (int l = 0; l <= k; ++l) tcol.emplace_back(n + l, -1.0);
    problem.columns.push_back(std::move(tcol));
    cost.push_back(1.0);
    const Index slack0 = t_col + 1;
    for (int l = 0; l <= k; ++l) {
        problem.columns.push_back({{n + l, 1.0}});
        cost.push_back(0.0);
    }
    problem.cost = Eigen::Map<Vector>(cost.data(), static_cast<Index>(cost.size()));
    problem.rhs = Vector::Zero(problem.rows);
    problem.rhs.head(n) = c;

    // Start from y_0 = c, t = ||c||_1: order-0 columns come first, one (p, q) pair per node.
    std::vector<Index> basis;
    basis.reserve(static_cast<std::size_t>(problem.rows));
    for (Index i = 0; i < n; ++i) basis.push_back(c[i] >= 0 ? 2 * i : 2 * i + 1);
    basis.push_back(t_col);
    for (int l = 1; l <= k; ++l) basis.push_back(slack0 + l);

    double coef_scale = 1.0;
    for (const auto& op : ops)
        for (const auto& row : op)
            for (const auto& [idx, coef] : row) coef_scale = std::max(coef_scale, std::abs(coef));

    const lp::SimplexResult res = lp::solve(problem, std::move(basis));
    // Residuals are judged relative to the largest stencil coefficient (up to 4/h^2).
    if (res.primal_residual > 1e-9 * coef_scale || res.dual_infeasibility > 1e-9) {
        std::ostringstream os;
        os << "primal residual " << res.primal_residual << ", dual infeasibility " << res.dual_infeasibility
           << ", iterations " << res.iterations;
        throw NumericalError("dual_norm: LP did not reach a clean optimum", os.str());
    }
    DualNormResult out;
    out.value = res.objective;
    out.witness = res.duals.head(n);
    for (int l = 0; l <= k; ++l) out.budget[static_cast<std::size_t>(l)] = -res.duals[n + l];
    out.iterations = res.iterations;
    out.duality_gap = std::abs(res.objective - c.dot(out.witness));
    return out;
}

// Sign canonicalisation: the first nonzero entry of the solved vector is positive.
bool flip_sign(const Vector& c) {
    for (Index i = 0; i < c.size(); ++i) {
        if (c[i] != 0.0) return c[i] < 0.0;
    }
    return false;
}

}  // namespace

DualNormResult dual_norm_detail(const GridMeasure& mu, const GridMeasure& eta, int k) {
    require_same_grid(mu.grid, eta.grid, "dual_norm");
    require_order(k);
    Vector c = mu.weights - eta.weights;
    const bool flipped = flip_sign(c);
    if (flipped) c = -c;
    const double scale = c.lpNorm<1>();
    DualNormResult out;
    if (scale == 0.0) {
        out.witness = Vector::Zero(c.size());
        return out;
    }
    out = solve_dual_norm_lp(mu.grid, c / scale, k);
    out.value *= scale;
    out.duality_gap *= scale;
    if (flipped) out.witness = -out.witness;
    return out;
}

double dual_norm(const GridMeasure& mu, const GridMeasure& eta, int k) { return dual_norm_detail(mu, eta, k).value; }

double dual_norm(const GridMeasure& xi, int k) { return dual_norm(xi, GridMeasure::zero(xi.grid), k); }

double dual_norm_bound(const Grid& g, const Vector& d) {
    const double tv = d.lpNorm<1>();
    if (g.dim() != 1) return tv;
    const double mass = d.sum();
    // Any split d = y0 + D1' y1 is LP-feasible with t = max(||y0||_1, ||y1||_1):
    // park the net mass on the last node, transport the rest with the running sum.
    double running = 0.0;
    double transport = 0.0;
    for (Index i = 0; i + 1 < d.size(); ++i) {
        running += d[i];
        transport += std::abs(running);
    }
    transport *= g.spacing();
    return std::min(tv, std::max(std::abs(mass), transport));
}

double dual_norm_bound(const GridMeasure& mu, const GridMeasure& eta) {
    require_same_grid(mu.grid, eta.grid, "dual_norm_bound");
    return dual_norm_bound(mu.grid, mu.weights - eta.weights);
}

}  // namespace nlmarkov
