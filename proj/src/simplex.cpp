#include "nlmarkov/simplex.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "nlmarkov/error.hpp"

namespace nlmarkov::lp {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

struct State {
    const StandardFormLp& lp;
    std::vector<Index> basis;
    std::vector<char> is_basic;
    MatrixXd binv;
    VectorXd xb;
    VectorXd pi;
    VectorXd column_norm;

    explicit State(const StandardFormLp& problem) : lp(problem) {}

    double reduced_cost(Index j) const {
        double d = lp.cost[j];
        for (const auto& [r, a] : lp.columns[static_cast<std::size_t>(j)]) d -= pi[r] * a;
        return d;
    }

    void refactor() {
        const Index m = lp.rows;
        MatrixXd b = MatrixXd::Zero(m, m);
        for (Index k = 0; k < m; ++k) {
            for (const auto& [r, a] : lp.columns[static_cast<std::size_t>(basis[static_cast<std::size_t>(k)])]) b(r, k) = a;
        }
        Eigen::PartialPivLU<MatrixXd> lu(b);
        const double rcond = lu.rcond();
        if (!(rcond > 1e-14)) {
            std::ostringstream os;
            os << "reciprocal condition " << rcond;
            throw NumericalError("simplex: basis matrix is singular", os.str());
        }
        binv = lu.inverse();
        // One step of iterative refinement on both solves.
        xb = lu.solve(lp.rhs);
        xb += lu.solve(lp.rhs - b * xb);
        VectorXd cb(m);
        for (Index k = 0; k < m; ++k) cb[k] = lp.cost[basis[static_cast<std::size_t>(k)]];
        pi = binv.transpose() * cb;
        const VectorXd pres = cb - b.transpose() * pi;
        pi += binv.transpose() * pres;
    }
};

}  // namespace

SimplexResult solve(const StandardFormLp& lp, std::vector<Index> initial_basis, const SimplexOptions& options) {
    const Index m = lp.rows;
    const auto ncols = static_cast<Index>(lp.columns.size());
    if (static_cast<Index>(initial_basis.size()) != m) throw DimensionError("simplex: basis size must equal row count");
    if (lp.cost.size() != ncols || lp.rhs.size() != m) throw DimensionError("simplex: cost/rhs size mismatch");

    State s(lp);
    s.basis = std::move(initial_basis);
    s.is_basic.assign(static_cast<std::size_t>(ncols), 0);
    for (Index j : s.basis) s.is_basic[static_cast<std::size_t>(j)] = 1;
    s.column_norm.resize(ncols);
    for (Index j = 0; j < ncols; ++j) {
        double nrm = 0.0;
        for (const auto& [r, a] : lp.columns[static_cast<std::size_t>(j)]) nrm += a * a;
        s.column_norm[j] = std::sqrt(std::max(nrm, 1e-300));
    }
    s.refactor();
    if (s.xb.minCoeff() < -1e-9) throw NumericalError("simplex: initial basis is not primal feasible");

    const int max_iter = options.max_iterations > 0 ? options.max_iterations : static_cast<int>(50 * m + 1000);
    int iter = 0;
    int since_refactor = 0;
    int degenerate_run = 0;
    bool bland = false;
    VectorXd u(m);

    for (;; ++iter) {
        if (iter >= max_iter) {
            std::ostringstream os;
            os << "iterations=" << iter << " rows=" << m << " cols=" << ncols;
            throw NumericalError("simplex: iteration limit reached", os.str());
        }
        if (since_refactor >= options.refactor_every) {
            s.refactor();
            since_refactor = 0;
        }

        // Pricing.
        Index entering = -1;
        double best = -options.optimality_tol;
        double entering_d = 0.0;
        for (Index j = 0; j < ncols; ++j) {
            if (s.is_basic[static_cast<std::size_t>(j)]) continue;
            const double d = s.reduced_cost(j);
            const double scaled = d / s.column_norm[j];
            if (bland) {
                if (scaled < -options.optimality_tol) {
                    entering = j;
                    entering_d = d;
                    break;
                }
            } else if (scaled < best) {
                best = scaled;
                entering = j;
                entering_d = d;
            }
        }
        if (entering < 0) {
            if (since_refactor == 0) break;
            // Confirm optimality on a fresh factorisation before stopping.
            s.refactor();
            since_refactor = 0;
            --iter;
            continue;
        }

        u.setZero();
        for (const auto& [r, a] : lp.columns[static_cast<std::size_t>(entering)]) u += a * s.binv.col(r);

        // Harris two-pass ratio test.
        const double ptol = options.pivot_tol;
        double theta_max = std::numeric_limits<double>::infinity();
        for (Index r = 0; r < m; ++r) {
            if (u[r] > ptol) theta_max = std::min(theta_max, (std::max(s.xb[r], 0.0) + 1e-12) / u[r]);
        }
        if (!std::isfinite(theta_max)) throw NumericalError("simplex: problem is unbounded");
        Index leave = -1;
        double best_pivot = 0.0;
        for (Index r = 0; r < m; ++r) {
            if (u[r] > ptol && std::max(s.xb[r], 0.0) / u[r] <= theta_max) {
                const bool better = bland ? (leave < 0 || s.basis[static_cast<std::size_t>(r)] < s.basis[static_cast<std::size_t>(leave)])
                                          : u[r] > best_pivot;
                if (better) {
                    best_pivot = u[r];
                    leave = r;
                }
            }
        }
        const double theta = std::max(s.xb[leave], 0.0) / u[leave];

        if (theta <= 1e-14) {
            if (++degenerate_run > 2 * m) bland = true;
        } else {
            degenerate_run = 0;
            bland = false;
        }

        // Basis update.
        s.xb -= theta * u;
        s.xb[leave] = theta;
        const double pivot = u[leave];
        VectorXd prow = s.binv.row(leave) / pivot;
        u[leave] = 0.0;
        s.binv.noalias() -= u * prow.transpose();
        s.binv.row(leave) = prow;
        s.pi += entering_d * prow;

        s.is_basic[static_cast<std::size_t>(s.basis[static_cast<std::size_t>(leave)])] = 0;
        s.is_basic[static_cast<std::size_t>(entering)] = 1;
        s.basis[static_cast<std::size_t>(leave)] = entering;
        ++since_refactor;
    }

    SimplexResult out;
    out.x = VectorXd::Zero(ncols);
    for (Index k = 0; k < m; ++k) out.x[s.basis[static_cast<std::size_t>(k)]] = std::max(s.xb[k], 0.0);
    out.duals = s.pi;
    out.objective = lp.cost.dot(out.x);
    out.iterations = iter;
    VectorXd ax = VectorXd::Zero(m);
    for (Index j = 0; j < ncols; ++j) {
        if (out.x[j] == 0.0) continue;
        for (const auto& [r, a] : lp.columns[static_cast<std::size_t>(j)]) ax[r] += a * out.x[j];
    }
    out.primal_residual = (ax - lp.rhs).cwiseAbs().maxCoeff();
    for (Index j = 0; j < ncols; ++j) out.dual_infeasibility = std::max(out.dual_infeasibility, -s.reduced_cost(j));
    return out;
}

}  // namespace nlmarkov::lp
