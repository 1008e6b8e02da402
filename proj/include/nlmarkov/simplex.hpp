#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace nlmarkov::lp {

/// Nonzeros of one constraint column: (row, value).
using SparseColumn = std::vector<std::pair<Eigen::Index, double>>;

/// min cost'x  s.t.  A x = rhs,  x >= 0.
struct StandardFormLp {
    Eigen::Index rows = 0;
    std::vector<SparseColumn> columns;
    Eigen::VectorXd cost;
    Eigen::VectorXd rhs;
};

struct SimplexOptions {
    int refactor_every = 64;
    int max_iterations = 0;  ///< 0 means 50 * rows
    double optimality_tol = 1e-12;
    double pivot_tol = 1e-10;
};

struct SimplexResult {
    Eigen::VectorXd x;      ///< full primal vector
    Eigen::VectorXd duals;  ///< row prices, cost_B' B^{-1}
    double objective = 0.0;
    int iterations = 0;
    double primal_residual = 0.0;   ///< max |A x - rhs|
    double dual_infeasibility = 0.0;  ///< max over columns of max(0, -reduced cost)
};

/// Revised primal simplex with a dense explicit basis inverse.
///
/// `initial_basis` must index `rows` columns forming a nonsingular, primal
/// feasible basis. Dantzig pricing normalised by column norm, Harris ratio test,
/// Bland's rule after long degenerate stretches, periodic refactorisation.
/// Throws NumericalError on iteration overflow, unboundedness or a singular basis.
SimplexResult solve(const StandardFormLp& lp, std::vector<Eigen::Index> initial_basis,
                    const SimplexOptions& options = {});

}  // namespace nlmarkov::lp
