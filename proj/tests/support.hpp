#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "nlmarkov/generators.hpp"
#include "nlmarkov/grid.hpp"

namespace nlmarkov::test {

using Rng = std::mt19937_64;

inline Vector random_vector(Eigen::Index n, Rng& rng, double scale = 1.0) {
    std::uniform_real_distribution<double> u(-scale, scale);
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = u(rng);
    return v;
}

inline GridMeasure random_probability(const Grid& g, Rng& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Vector w(static_cast<Eigen::Index>(g.size()));
    for (Eigen::Index i = 0; i < w.size(); ++i) w[i] = u(rng);
    return GridMeasure(g, w / w.sum());
}

/// Random conservative generator: rates between all node pairs up to two apart.
inline Matrix random_rate_matrix(Eigen::Index n, Rng& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Matrix a = Matrix::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = std::max<Eigen::Index>(0, i - 2); j < std::min(n, i + 3); ++j) {
            if (j != i) a(i, j) = u(rng);
        }
        a(i, i) = -a.row(i).sum();
    }
    return a;
}

/// Order-one family with drift d0 + d1 * c_0 and lattice jumps of +-h at rate r0.
inline OrderOneFamily linear_drift_family(const Grid& g, double d0, double d1, double r0, MomentFn phi) {
    const double h = g.spacing();
    OrderOneFamily f;
    f.name = "linear_drift";
    f.moments = {std::move(phi)};
    f.drift = [=](double, const Vector& c, double, double) { return d0 + d1 * c[0]; };
    f.drift_derivative = [=](double, const Vector&, double, double, int j) { return j == 0 ? d1 : 0.0; };
    f.jumps = [=](double, const Vector&, double, double) {
        return std::vector<Jump>{{{h, 0}, r0}, {{-h, 0}, r0}};
    };
    f.jumps_derivative = [=](double, const Vector&, double, double, int) {
        return std::vector<Jump>{{{h, 0}, 0.0}, {{-h, 0}, 0.0}};
    };
    return f;
}

inline double mean(const GridMeasure& mu) { return mu.grid.sample([](double x) { return x; }).dot(mu.weights); }

inline double variance(const GridMeasure& mu) {
    const double m = mean(mu);
    return mu.grid.sample([m](double x) { return (x - m) * (x - m); }).dot(mu.weights);
}

}  // namespace nlmarkov::test
