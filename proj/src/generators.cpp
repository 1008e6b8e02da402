#include "nlmarkov/generators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <spdlog/spdlog.h>

#include "nlmarkov/error.hpp"
#include "nlmarkov/measures.hpp"

namespace nlmarkov {

namespace {

using Eigen::Index;
using cd = std::complex<double>;

double norm2(const std::array<double, 2>& y) { return std::hypot(y[0], y[1]); }

bool same_point(const std::array<double, 2>& a, const std::array<double, 2>& b) {
    return std::abs(a[0] - b[0]) <= 1e-12 * std::max(1.0, std::abs(a[0])) &&
           std::abs(a[1] - b[1]) <= 1e-12 * std::max(1.0, std::abs(a[1]));
}

void require_1d(const Grid& g, const char* where) {
    if (g.dim() != 1) throw DimensionError(std::string(where) + ": order-one families live on 1-d grids");
}

// Signed atom-by-atom difference of two jump measures.
std::vector<Jump> jump_difference(const std::vector<Jump>& a, const std::vector<Jump>& b) {
    std::vector<Jump> out = a;
    for (const Jump& j : b) {
        auto it = std::find_if(out.begin(), out.end(), [&](const Jump& o) { return same_point(o.y, j.y); });
        if (it == out.end()) {
            out.push_back({j.y, -j.rate});
        } else {
            it->rate -= j.rate;
        }
    }
    return out;
}

// Adds rate * (delta_target - delta_i) to row i; returns the suppressed rate.
double add_jump(Matrix& a, Index i, double shift_nodes, double rate) {
    const auto j = i + static_cast<Index>(std::lround(shift_nodes));
    if (j == i) return 0.0;
    if (j < 0 || j >= a.rows()) return rate;
    a(i, j) += rate;
    a(i, i) -= rate;
    return 0.0;
}

// Upwind first difference scaled by `coef`; forward if `forward`. Returns the suppressed rate.
double add_drift(Matrix& a, Index i, bool forward, double coef, double h) {
    const Index j = forward ? i + 1 : i - 1;
    if (j < 0 || j >= a.rows()) return std::abs(coef) / h;
    const double s = forward ? coef / h : -coef / h;
    a(i, j) += s;
    a(i, i) -= s;
    return 0.0;
}

void require_derivatives(const OrderOneFamily& f) {
    if (!f.drift_derivative || !f.jumps_derivative) {
        throw UnsupportedFamily("family '" + f.name + "' does not provide derivative maps");
    }
}

}  // namespace

LevyCoefficients LevyCoefficients::zero(int dim) {
    return {Matrix::Zero(dim, dim), Vector::Zero(dim), {}};
}

void validate(const LevyCoefficients& c) {
    const int d = c.dim();
    if (d != 1 && d != 2) throw DimensionError("LevyCoefficients: dimension must be 1 or 2");
    if (c.G.rows() != d || c.G.cols() != d) throw DimensionError("LevyCoefficients: G must be d x d");
    if (!c.G.allFinite() || !c.b.allFinite()) throw InvariantViolation("LevyCoefficients: non-finite G or b");
    const double scale = std::max(1.0, c.G.cwiseAbs().maxCoeff());
    if ((c.G - c.G.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
        throw InvariantViolation("LevyCoefficients: G is not symmetric");
    }
    Eigen::SelfAdjointEigenSolver<Matrix> eig(c.G, Eigen::EigenvaluesOnly);
    if (eig.eigenvalues().minCoeff() < -1e-12 * scale) {
        throw InvariantViolation("LevyCoefficients: G is indefinite");
    }
    for (const Jump& j : c.nu) {
        if (!std::isfinite(j.rate) || j.rate < 0) throw InvariantViolation("LevyCoefficients: jump rates must be finite and >= 0");
        if (norm2(j.y) == 0.0) throw InvariantViolation("LevyCoefficients: jump measure has an atom at 0");
        if (d == 1 && j.y[1] != 0.0) throw DimensionError("LevyCoefficients: 2-d atom in a 1-d triplet");
    }
}

const std::vector<MomentFn>& moment_functions(const Family& f) {
    return std::visit([](const auto& fam) -> const std::vector<MomentFn>& { return fam.moments; }, f);
}

double family_alpha(const Family& f) {
    return std::visit([](const auto& fam) { return fam.alpha; }, f);
}

void set_family_alpha(Family& f, double alpha) {
    std::visit([alpha](auto& fam) { fam.alpha = alpha; }, f);
}

Matrix sample_moments(const std::vector<MomentFn>& moments, const Grid& g) {
    Matrix phi(static_cast<Index>(g.size()), static_cast<Index>(moments.size()));
    for (std::size_t j = 0; j < moments.size(); ++j) phi.col(static_cast<Index>(j)) = g.sample(moments[j]);
    return phi;
}

Vector moment_values(const std::vector<MomentFn>& moments, const GridMeasure& mu) {
    return sample_moments(moments, mu.grid).transpose() * mu.weights;
}

LevyCoefficients levy_coefficients(const LevyFamily& f, const GridMeasure& mu, double t) {
    if (mu.grid.dim() != f.dim) throw DimensionError("levy_coefficients: family and grid dimensions differ");
    LevyCoefficients c = f.coefficients(moment_values(f.moments, mu), f.alpha, t);
    if (c.dim() != f.dim) throw DimensionError("levy_coefficients: triplet dimension differs from the family's");
    return c;
}

ComplexVector symbol_increment(const LevyCoefficients& c, const std::vector<std::array<double, 2>>& xi) {
    const int d = c.dim();
    ComplexVector eta(static_cast<Index>(xi.size()));
    for (std::size_t k = 0; k < xi.size(); ++k) {
        const double x0 = xi[k][0];
        const double x1 = d == 2 ? xi[k][1] : 0.0;
        double quad = c.G(0, 0) * x0 * x0;
        double lin = c.b[0] * x0;
        if (d == 2) {
            quad += 2.0 * c.G(0, 1) * x0 * x1 + c.G(1, 1) * x1 * x1;
            lin += c.b[1] * x1;
        }
        cd value(-0.5 * quad, lin);
        for (const Jump& j : c.nu) {
            const double dot = x0 * j.y[0] + x1 * j.y[1];
            const double comp = norm2(j.y) < 1.0 ? dot : 0.0;
            value += j.rate * cd(std::cos(dot) - 1.0, std::sin(dot) - comp);
        }
        eta[static_cast<Index>(k)] = value;
    }
    return eta;
}

ComplexVector levy_symbol(const LevyCoefficients& c, const std::vector<std::array<double, 2>>& xi) {
    validate(c);
    return symbol_increment(c, xi);
}

ComplexVector levy_symbol(const LevyCoefficients& c, const Vector& xi) {
    std::vector<std::array<double, 2>> pts;
    pts.reserve(static_cast<std::size_t>(xi.size()));
    for (Index k = 0; k < xi.size(); ++k) pts.push_back({xi[k], 0.0});
    return levy_symbol(c, pts);
}

std::complex<double> levy_symbol(const LevyCoefficients& c, double xi) {
    return levy_symbol(c, std::vector<std::array<double, 2>>{{xi, 0.0}})[0];
}

Vector apply_levy(const SpectralTransform& tr, const LevyCoefficients& c, const Vector& values, bool adjoint) {
    ComplexVector m = symbol_increment(c, tr.frequencies());
    if (adjoint) m = m.conjugate();
    return tr.apply_multiplier(values, m);
}

GeneratorMatrix assemble_matrix(const OrderOneFamily& f, const Grid& g, const Vector& c, double alpha, double t,
                                const GridMeasure* mu) {
    require_1d(g, "assemble_matrix");
    const auto n = static_cast<Index>(g.n());
    const double h = g.spacing();
    GeneratorMatrix out{Matrix::Zero(n, n), 0.0};
    for (Index i = 0; i < n; ++i) {
        const double x = g.coordinate(static_cast<std::size_t>(i));
        double lost = 0.0;
        const double b = f.drift ? f.drift(x, c, alpha, t) : 0.0;
        if (!std::isfinite(b)) throw InvariantViolation("assemble_matrix: non-finite drift");
        if (b != 0.0) lost += add_drift(out.matrix, i, b > 0.0, b, h);
        if (f.jumps) {
            for (const Jump& j : f.jumps(x, c, alpha, t)) {
                if (!std::isfinite(j.rate) || j.rate < 0) throw InvariantViolation("assemble_matrix: jump rates must be finite and >= 0");
                lost += add_jump(out.matrix, i, j.y[0] / h, j.rate);
            }
        }
        if (mu != nullptr) out.lost_rate += lost * std::abs(mu->weights[i]);
    }
    if (mu != nullptr && out.lost_rate > 1e-6) {
        spdlog::warn("domain escape: family '{}' pushes rate {:.3e} off the grid at t={}", f.name, out.lost_rate, t);
    }
    return out;
}

GeneratorMatrix assemble_matrix(const OrderOneFamily& f, const GridMeasure& mu, double t) {
    return assemble_matrix(f, mu.grid, moment_values(f.moments, mu), f.alpha, t, &mu);
}

Matrix order_one_partial(const OrderOneFamily& f, const Grid& g, const Vector& c, double alpha, double t, int j) {
    require_1d(g, "order_one_partial");
    require_derivatives(f);
    const auto n = static_cast<Index>(g.n());
    const double h = g.spacing();
    Matrix a = Matrix::Zero(n, n);
    for (Index i = 0; i < n; ++i) {
        const double x = g.coordinate(static_cast<std::size_t>(i));
        const double b = f.drift ? f.drift(x, c, alpha, t) : 0.0;
        const double db = f.drift_derivative(x, c, alpha, t, j);
        if (db != 0.0) add_drift(a, i, b != 0.0 ? b > 0.0 : db > 0.0, db, h);
        for (const Jump& jump : f.jumps_derivative(x, c, alpha, t, j)) add_jump(a, i, jump.y[0] / h, jump.rate);
    }
    return a;
}

LevyCoefficients levy_partial(const LevyFamily& f, const Vector& c, double alpha, double t, int j) {
    if (!f.derivative) throw UnsupportedFamily("family '" + f.name + "' does not provide derivative maps");
    LevyCoefficients d = f.derivative(c, alpha, t, j);
    if (d.dim() != f.dim) throw DimensionError("levy_partial: derivative triplet has the wrong dimension");
    return d;
}

Matrix gateaux(const OrderOneFamily& f, const GridMeasure& mu, const GridMeasure& xi, double t) {
    require_same_grid(mu.grid, xi.grid, "gateaux");
    const auto n = static_cast<Index>(mu.grid.size());
    Matrix out = Matrix::Zero(n, n);
    if (f.moments.empty()) return out;
    const Vector c = moment_values(f.moments, mu);
    const Vector a = moment_values(f.moments, xi);
    for (Index j = 0; j < c.size(); ++j) {
        if (a[j] != 0.0) out += a[j] * order_one_partial(f, mu.grid, c, f.alpha, t, static_cast<int>(j));
    }
    return out;
}

LevyCoefficients gateaux(const LevyFamily& f, const GridMeasure& mu, const GridMeasure& xi, double t) {
    require_same_grid(mu.grid, xi.grid, "gateaux");
    LevyCoefficients out = LevyCoefficients::zero(f.dim);
    if (f.moments.empty()) return out;
    const Vector c = moment_values(f.moments, mu);
    const Vector a = moment_values(f.moments, xi);
    for (Index j = 0; j < c.size(); ++j) {
        const LevyCoefficients d = levy_partial(f, c, f.alpha, t, static_cast<int>(j));
        out.G += a[j] * d.G;
        out.b += a[j] * d.b;
        for (const Jump& jump : d.nu) out.nu.push_back({jump.y, a[j] * jump.rate});
    }
    return out;
}

OperatorPtr dual_representation(const Family& f, const GridMeasure& mu, double t) {
    const auto& moments = moment_functions(f);
    const auto n = static_cast<Index>(mu.grid.size());
    if (moments.empty()) return FiniteRankOperator::zero(n);
    const Matrix phi = sample_moments(moments, mu.grid);
    const Vector c = phi.transpose() * mu.weights;
    Matrix psi(n, phi.cols());
    if (const auto* lf = std::get_if<LevyFamily>(&f)) {
        const SpectralTransform tr(mu.grid);
        for (Index j = 0; j < phi.cols(); ++j) {
            psi.col(j) = apply_levy(tr, levy_partial(*lf, c, lf->alpha, t, static_cast<int>(j)), mu.weights, true);
        }
    } else {
        const auto& of = std::get<OrderOneFamily>(f);
        for (Index j = 0; j < phi.cols(); ++j) {
            psi.col(j) = order_one_partial(of, mu.grid, c, of.alpha, t, static_cast<int>(j)).transpose() * mu.weights;
        }
    }
    return std::make_shared<FiniteRankOperator>(phi, psi);
}

double levy_coefficient_distance(const LevyCoefficients& a, const LevyCoefficients& b) {
    if (a.dim() != b.dim()) throw DimensionError("levy_coefficient_distance: dimensions differ");
    Eigen::SelfAdjointEigenSolver<Matrix> eig(a.G - b.G, Eigen::EigenvaluesOnly);
    double total = eig.eigenvalues().cwiseAbs().maxCoeff() + (a.b - b.b).norm();
    for (const Jump& j : jump_difference(a.nu, b.nu)) {
        const double r = norm2(j.y);
        total += std::min(1.0, r * r) * std::abs(j.rate);
    }
    return total;
}

double order_one_distance(const OrderOneFamily& a, const OrderOneFamily& b, const GridMeasure& mu, double t) {
    const Grid& g = mu.grid;
    require_1d(g, "order_one_distance");
    const Vector ca = moment_values(a.moments, mu);
    const Vector cb = moment_values(b.moments, mu);
    double out = 0.0;
    for (std::size_t i = 0; i < g.n(); ++i) {
        const double x = g.coordinate(i);
        double d = std::abs((a.drift ? a.drift(x, ca, a.alpha, t) : 0.0) - (b.drift ? b.drift(x, cb, b.alpha, t) : 0.0));
        const std::vector<Jump> na = a.jumps ? a.jumps(x, ca, a.alpha, t) : std::vector<Jump>{};
        const std::vector<Jump> nb = b.jumps ? b.jumps(x, cb, b.alpha, t) : std::vector<Jump>{};
        for (const Jump& j : jump_difference(na, nb)) d += std::min(1.0, norm2(j.y)) * std::abs(j.rate);
        out = std::max(out, d);
    }
    return out;
}

LipschitzEstimate estimate_levy_lipschitz(const LevyFamily& f,
                                          const std::vector<std::pair<GridMeasure, GridMeasure>>& samples,
                                          double t) {
    if (samples.empty()) throw InvariantViolation("estimate_levy_lipschitz: empty sample list");
    LipschitzEstimate out;
    for (const auto& [mu, eta] : samples) {
        const double d = dual_norm(mu, eta, 2);
        if (d <= 1e-14) {
            spdlog::warn("estimate_levy_lipschitz: skipping a coincident pair");
            ++out.skipped;
            continue;
        }
        const double ratio = levy_coefficient_distance(levy_coefficients(f, mu, t), levy_coefficients(f, eta, t)) / d;
        if (ratio > out.kappa || out.ratios.empty()) {
            out.kappa = std::max(out.kappa, ratio);
            out.argmax = out.ratios.size();
        }
        out.ratios.push_back(ratio);
    }
    return out;
}

OrderOneReport validate_order_one_conditions(const OrderOneFamily& f, double eps, const std::vector<GridMeasure>& samples,
                                             const OrderOneCheckOptions& options) {
    if (!(eps > 0)) throw InvariantViolation("validate_order_one_conditions: eps must be positive");
    if (samples.empty()) throw InvariantViolation("validate_order_one_conditions: need at least one sample measure");
    const Grid& g = samples.front().grid;
    require_1d(g, "validate_order_one_conditions");
    const double h = g.spacing();
    OrderOneReport rep;
    rep.jump_radius = f.jump_radius > 0 ? f.jump_radius : g.upper() - g.lower();

    // Per (x, mu): atoms and their x-gradient, collected once.
    struct Cell {
        std::vector<Jump> nu;
        std::vector<Jump> grad;
    };
    std::vector<Cell> cells;
    std::vector<Vector> moments;
    for (const GridMeasure& mu : samples) {
        require_same_grid(mu.grid, g, "validate_order_one_conditions");
        const Vector c = moment_values(f.moments, mu);
        moments.push_back(c);
        for (std::size_t i = 0; i < g.n(); ++i) {
            const double x = g.coordinate(i);
            Cell cell;
            if (f.jumps) cell.nu = f.jumps(x, c, f.alpha, options.t);
            if (f.jumps && i + 1 < g.n()) {
                for (Jump& d : jump_difference(f.jumps(g.coordinate(i + 1), c, f.alpha, options.t), cell.nu)) {
                    d.rate /= h;
                    cell.grad.push_back(d);
                }
            }
            cells.push_back(std::move(cell));
        }
    }

    std::vector<double> radii{0.0};
    for (const Cell& cell : cells) {
        double bound = 0.0;
        double gbound = 0.0;
        for (const Jump& j : cell.nu) {
            bound += std::min(1.0, norm2(j.y)) * j.rate;
            radii.push_back(norm2(j.y));
        }
        for (const Jump& j : cell.grad) gbound += std::min(1.0, norm2(j.y)) * std::abs(j.rate);
        rep.boundedness = std::max(rep.boundedness, bound);
        rep.gradient_boundedness = std::max(rep.gradient_boundedness, gbound);
    }
    rep.boundedness_pass = std::isfinite(rep.boundedness) && std::isfinite(rep.gradient_boundedness);

    auto tails = [&](double k) {
        double tail = 0.0;
        double gtail = 0.0;
        for (const Cell& cell : cells) {
            double s = 0.0;
            double gs = 0.0;
            for (const Jump& j : cell.nu) s += norm2(j.y) > k ? j.rate : 0.0;
            for (const Jump& j : cell.grad) gs += norm2(j.y) > k ? std::abs(j.rate) : 0.0;
            tail = std::max(tail, s);
            gtail = std::max(gtail, gs);
        }
        return std::pair{tail, gtail};
    };
    std::sort(radii.begin(), radii.end());
    radii.erase(std::unique(radii.begin(), radii.end()), radii.end());
    for (double k : radii) {
        if (k >= rep.jump_radius) break;
        const auto [tail, gtail] = tails(k);
        if (tail < eps && gtail < eps) {
            rep.tightness_k = k;
            break;
        }
    }
    const double k_max = rep.jump_radius * (1.0 - 1e-9);
    std::tie(rep.tail_at_largest_k, rep.gradient_tail_at_largest_k) = tails(k_max);
    for (const Cell& cell : cells) {
        double s = 0.0;
        for (const Jump& j : cell.nu) s += norm2(j.y) < 1.0 / rep.jump_radius ? norm2(j.y) * j.rate : 0.0;
        rep.small_ball = std::max(rep.small_ball, s);
    }
    rep.tightness_pass = rep.tail_at_largest_k < eps && rep.gradient_tail_at_largest_k < eps && rep.small_ball < eps;

    for (std::size_t a = 0; a < samples.size(); ++a) {
        for (std::size_t b = a + 1; b < samples.size(); ++b) {
            const double d = dual_norm(samples[a], samples[b], 1);
            if (d <= 1e-14) continue;
            double dnu = 0.0;
            double db = 0.0;
            for (std::size_t i = 0; i < g.n(); ++i) {
                const double x = g.coordinate(i);
                if (f.drift) {
                    db = std::max(db, std::abs(f.drift(x, moments[a], f.alpha, options.t) -
                                               f.drift(x, moments[b], f.alpha, options.t)));
                }
                double s = 0.0;
                for (const Jump& j : jump_difference(cells[a * g.n() + i].nu, cells[b * g.n() + i].nu)) {
                    s += std::min(1.0, norm2(j.y)) * std::abs(j.rate);
                }
                dnu = std::max(dnu, s);
            }
            rep.lipschitz_nu = std::max(rep.lipschitz_nu, dnu / d);
            rep.lipschitz_b = std::max(rep.lipschitz_b, db / d);
        }
    }
    rep.lipschitz_pass = rep.lipschitz_nu <= options.lipschitz_cap && rep.lipschitz_b <= options.lipschitz_cap;
    return rep;
}

OrderOneFamily as_order_one(const LevyFamily& f) {
    if (f.dim != 1) throw DimensionError("as_order_one: 1-d families only");
    auto compensated = [](const LevyCoefficients& c) {
        if (c.G.cwiseAbs().maxCoeff() != 0.0) throw InvariantViolation("as_order_one: diffusion part must vanish");
        double b = c.b[0];
        for (const Jump& j : c.nu) {
            if (std::abs(j.y[0]) < 1.0) b -= j.y[0] * j.rate;
        }
        return b;
    };
    OrderOneFamily out;
    out.name = f.name + " (order-one form)";
    out.moments = f.moments;
    out.alpha = f.alpha;
    auto coeffs = f.coefficients;
    out.drift = [coeffs, compensated](double, const Vector& c, double alpha, double t) {
        return compensated(coeffs(c, alpha, t));
    };
    out.jumps = [coeffs](double, const Vector& c, double alpha, double t) { return coeffs(c, alpha, t).nu; };
    if (f.derivative) {
        auto deriv = f.derivative;
        out.drift_derivative = [deriv](double, const Vector& c, double alpha, double t, int j) {
            const LevyCoefficients d = deriv(c, alpha, t, j);
            double b = d.b[0];
            for (const Jump& jump : d.nu) {
                if (std::abs(jump.y[0]) < 1.0) b -= jump.y[0] * jump.rate;
            }
            return b;
        };
        out.jumps_derivative = [deriv](double, const Vector& c, double alpha, double t, int j) {
            return deriv(c, alpha, t, j).nu;
        };
    }
    return out;
}

}  // namespace nlmarkov
