#pragma once

#include <array>
#include <utility>
#include <vector>

#include "nlmarkov/grid.hpp"

namespace nlmarkov {

/// One row of a difference operator: (flat node index, coefficient).
using StencilRow = std::vector<std::pair<Eigen::Index, double>>;

/// Rows of the discrete order-l derivative used by ck_norm and dual_norm.
///
/// l = 0: identity; l = 1: forward differences (f[i+1]-f[i])/h along each axis;
/// l = 2: 3-point second differences along each axis plus, in 2-d, the
/// forward mixed difference. Compact stencils keep checkerboard modes visible.
std::vector<StencilRow> difference_rows(const Grid& g, int order);

/// Integral of f against mu: sum_i f_i w_i.
double pair(const TestFunction& f, const GridMeasure& mu);
/// Same pairing for raw node vectors on a grid already known to match.
inline double pair(const Vector& f, const Vector& w) { return f.dot(w); }

/// sum_{l<=k} max_i |D^l f|_i.
double ck_norm(const TestFunction& f, int k);

struct DualNormResult {
    double value = 0.0;
    Vector witness;               ///< maximising test function (node values)
    std::array<double, 3> budget{};  ///< a_l: sup-norm bound of D^l witness
    int iterations = 0;
    double duality_gap = 0.0;
};

/// Grid surrogate of ||mu - eta|| in the dual of C^k: the value of
///   max sum_i f_i (w^mu_i - w^eta_i)  s.t.  |D^l f| <= a_l (l <= k), sum a_l <= 1.
/// Symmetric bit-for-bit in (mu, eta).
double dual_norm(const GridMeasure& mu, const GridMeasure& eta, int k);
/// Norm of a single signed measure.
double dual_norm(const GridMeasure& xi, int k);
DualNormResult dual_norm_detail(const GridMeasure& mu, const GridMeasure& eta, int k);

/// Cheap upper bound of dual_norm(mu, eta, k) for k >= 1:
/// min(total variation, first-moment transport cost) in 1-d, total variation in 2-d.
double dual_norm_bound(const GridMeasure& mu, const GridMeasure& eta);
double dual_norm_bound(const Grid& g, const Vector& difference);

}  // namespace nlmarkov
