#include "nlmarkov/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <optional>
#include <ostream>
#include <random>

#include <boost/numeric/odeint.hpp>
#include <spdlog/spdlog.h>

#include "nlmarkov/error.hpp"

namespace nlmarkov {

namespace {

namespace odeint = boost::numeric::odeint;
using State = std::vector<double>;
using Index = Eigen::Index;

constexpr std::size_t kMaxDenseNodes = 128;

Eigen::Map<const Vector> view(const State& x) { return {x.data(), static_cast<Index>(x.size())}; }
Eigen::Map<Vector> view(State& x) { return {x.data(), static_cast<Index>(x.size())}; }
State to_state(const Vector& v) { return State(v.data(), v.data() + v.size()); }

// Adaptive Dormand–Prince march from t0 to t1 (either direction) with a step floor.
template <class System>
void march(const System& sys, State& x, double t0, double t1, const DenseOptions& o) {
    auto stepper = odeint::make_controlled(o.atol, o.rtol, odeint::runge_kutta_dopri5<State>());
    const double dir = t1 >= t0 ? 1.0 : -1.0;
    double t = t0;
    double dt = dir * std::max(std::abs(t1 - t0) / 16.0, 1e-12);
    const double floor = 1e-14 * std::max(1.0, std::abs(t1 - t0));
    while (dir * (t1 - t) > 0) {
        if (dir * (t + dt - t1) > 0) dt = t1 - t;
        if (stepper.try_step(sys, x, t, dt) == odeint::fail) {
            if (std::abs(dt) < floor) {
                throw NumericalError("dense oracle: step size fell below its floor at t=" + std::to_string(t),
                                     "dt=" + std::to_string(dt));
            }
        }
    }
    for (double v : x) {
        if (!std::isfinite(v)) throw NumericalError("dense oracle: non-finite state");
    }
}

void require_small(const GridMeasure& mu) {
    if (mu.grid.size() > kMaxDenseNodes) throw DimensionError("dense oracle: at most 128 nodes");
}

const Matrix& step_generator(const std::vector<Matrix>& generators, const Partition& part, Index n) {
    if (generators.size() != part.steps()) throw DimensionError("dense oracle: one generator per step required");
    for (const Matrix& a : generators) {
        if (a.rows() != n || a.cols() != n) throw DimensionError("dense oracle: generator size mismatch");
    }
    return generators.front();
}

}  // namespace

Curve dense_evolve(const GeneratorFn& generator, const GridMeasure& mu0, const Partition& partition,
                   const DenseOptions& options) {
    require_small(mu0);
    auto sys = [&](const State& x, State& dx, double t) {
        dx.resize(x.size());
        view(dx) = generator(t).transpose() * view(x);
    };
    State x = to_state(mu0.weights);
    std::vector<GridMeasure> values{mu0};
    for (std::size_t j = 0; j < partition.steps(); ++j) {
        march(sys, x, partition.node(j), partition.node(j + 1), options);
        values.emplace_back(mu0.grid, Vector(view(x)));
    }
    return Curve(partition.nodes(), std::move(values));
}

Curve dense_evolve(const std::vector<Matrix>& generators, const GridMeasure& mu0, const Partition& partition,
                   const DenseOptions& options) {
    require_small(mu0);
    step_generator(generators, partition, mu0.weights.size());
    State x = to_state(mu0.weights);
    std::vector<GridMeasure> values{mu0};
    for (std::size_t j = 0; j < partition.steps(); ++j) {
        const Matrix at = generators[j].transpose();
        auto sys = [&](const State& s, State& ds, double) {
            ds.resize(s.size());
            view(ds) = at * view(s);
        };
        march(sys, x, partition.node(j), partition.node(j + 1), options);
        values.emplace_back(mu0.grid, Vector(view(x)));
    }
    return Curve(partition.nodes(), std::move(values));
}

Vector dense_backward(const GeneratorFn& generator, const Vector& f, const Partition& partition,
                      const DenseOptions& options) {
    if (static_cast<std::size_t>(f.size()) > kMaxDenseNodes) throw DimensionError("dense oracle: at most 128 nodes");
    // d/dt U^{t,r} f = -A_t U^{t,r} f.
    auto sys = [&](const State& x, State& dx, double t) {
        dx.resize(x.size());
        view(dx) = -(generator(t) * view(x));
    };
    State x = to_state(f);
    for (std::size_t j = partition.steps(); j-- > 0;) march(sys, x, partition.node(j + 1), partition.node(j), options);
    return view(x);
}

Vector dense_backward(const std::vector<Matrix>& generators, const Vector& f, const Partition& partition,
                      const DenseOptions& options) {
    if (static_cast<std::size_t>(f.size()) > kMaxDenseNodes) throw DimensionError("dense oracle: at most 128 nodes");
    step_generator(generators, partition, f.size());
    State x = to_state(f);
    for (std::size_t j = partition.steps(); j-- > 0;) {
        const Matrix& a = generators[j];
        auto sys = [&](const State& s, State& ds, double) {
            ds.resize(s.size());
            view(ds) = -(a * view(s));
        };
        march(sys, x, partition.node(j + 1), partition.node(j), options);
    }
    return view(x);
}

Curve dense_kinetic(const OrderOneFamily& family, const GridMeasure& mu0, const Partition& partition,
                    const DenseOptions& options) {
    require_small(mu0);
    const Grid& grid = mu0.grid;
    const Matrix phi = sample_moments(family.moments, grid);
    auto sys = [&](const State& x, State& dx, double t) {
        dx.resize(x.size());
        const Vector c = phi.transpose() * view(x);
        view(dx) = assemble_matrix(family, grid, c, family.alpha, t).matrix.transpose() * view(x);
    };
    State x = to_state(mu0.weights);
    std::vector<GridMeasure> values{mu0};
    for (std::size_t j = 0; j < partition.steps(); ++j) {
        march(sys, x, partition.node(j), partition.node(j + 1), options);
        values.emplace_back(grid, Vector(view(x)));
    }
    return Curve(partition.nodes(), std::move(values));
}

std::vector<double> scalar_ode(const std::function<double(double, double)>& rhs, double y0,
                               const std::vector<double>& times, double rtol) {
    if (times.empty()) return {};
    auto sys = [&](const State& x, State& dx, double t) {
        dx.resize(1);
        dx[0] = rhs(t, x[0]);
    };
    const DenseOptions o{rtol, 1e-3 * rtol};
    State x{y0};
    std::vector<double> out{y0};
    for (std::size_t j = 1; j < times.size(); ++j) {
        if (!(times[j] > times[j - 1])) throw InvariantViolation("scalar_ode: times must increase");
        march(sys, x, times[j - 1], times[j], o);
        out.push_back(x[0]);
    }
    return out;
}

std::vector<double> moment_oracle(const std::string& tag, const std::map<std::string, double>& params,
                                  const std::vector<double>& times) {
    auto get = [&](const std::string& key, std::optional<double> fallback = std::nullopt) {
        const auto it = params.find(key);
        if (it != params.end()) return it->second;
        if (fallback) return *fallback;
        throw InvariantViolation("moment_oracle: '" + tag + "' needs parameter '" + key + "'");
    };
    std::function<double(double)> fn;
    if (tag == "meanfield_drift") {
        const double m0 = get("m0"), alpha = get("alpha");
        fn = [=](double t) { return m0 * std::exp(-alpha * t); };
    } else if (tag == "heat") {
        const double var0 = get("var0"), g = get("G");
        fn = [=](double t) { return var0 + g * t; };
    } else if (tag == "compound_poisson") {
        const double lambda = get("lambda"), mean_jump = get("mean_jump"), m0 = get("m0", 0.0);
        fn = [=](double t) { return m0 + lambda * t * mean_jump; };
    } else if (tag == "interacting_poisson") {
        const double c0 = get("c0"), lambda = get("lambda"), y0 = get("y0");
        fn = [=](double t) { return c0 * std::exp(-lambda * y0 * t); };
    } else {
        throw InvariantViolation("moment_oracle: unknown tag '" + tag + "'");
    }
    std::vector<double> out;
    out.reserve(times.size());
    for (double t : times) out.push_back(fn(t));
    return out;
}

ParticleEnsemble sample_ensemble(const GridMeasure& mu0, std::size_t n, std::uint64_t seed, bool jitter) {
    if (n == 0) throw InvariantViolation("sample_ensemble: need at least one particle");
    if (mu0.grid.dim() != 1) throw DimensionError("sample_ensemble: 1-d grids only");
    std::vector<double> w(mu0.weights.data(), mu0.weights.data() + mu0.weights.size());
    for (double& v : w) v = std::max(v, 0.0);
    std::mt19937_64 rng(seed);
    std::discrete_distribution<std::size_t> pick(w.begin(), w.end());
    std::uniform_real_distribution<double> cell(-0.5, 0.5);
    const double h = mu0.grid.spacing();
    ParticleEnsemble e{{}, seed, 0.0};
    e.positions.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        double x = mu0.grid.coordinate(pick(rng));
        if (jitter) x += h * cell(rng);
        e.positions.push_back(x);
    }
    return e;
}

GridMeasure cic_histogram(const Grid& grid, const std::vector<double>& positions) {
    if (grid.dim() != 1) throw DimensionError("cic_histogram: 1-d grids only");
    GridMeasure out = GridMeasure::zero(grid);
    if (positions.empty()) return out;
    const double h = grid.spacing();
    const auto last = static_cast<Index>(grid.n()) - 1;
    const double mass = 1.0 / static_cast<double>(positions.size());
    for (double x : positions) {
        const double s = (x - grid.lower()) / h;
        if (s <= 0) {
            out.weights[0] += mass;
        } else if (s >= static_cast<double>(last)) {
            out.weights[last] += mass;
        } else {
            const auto i = static_cast<Index>(std::floor(s));
            const double frac = s - static_cast<double>(i);
            out.weights[i] += (1.0 - frac) * mass;
            out.weights[i + 1] += frac * mass;
        }
    }
    return out;
}

namespace {

// Per-particle coefficients at the current empirical moments.
struct Dynamics {
    double drift = 0.0;
    double diffusion = 0.0;  // variance rate G
    std::vector<Jump> jumps;
    double total_rate = 0.0;
};

Dynamics levy_dynamics(const LevyFamily& f, const Vector& c, double t) {
    LevyCoefficients co = f.coefficients(c, f.alpha, t);
    validate(co);
    Dynamics d{co.b[0], co.G(0, 0), std::move(co.nu), 0.0};
    // The symbol compensates jumps inside the open unit ball, so the Itô drift subtracts their mean.
    for (const Jump& j : d.jumps) {
        if (std::abs(j.y[0]) < 1.0) d.drift -= j.y[0] * j.rate;
        d.total_rate += j.rate;
    }
    return d;
}

Dynamics order_one_dynamics(const OrderOneFamily& f, double x, const Vector& c, double t) {
    Dynamics d{f.drift ? f.drift(x, c, f.alpha, t) : 0.0, 0.0, {}, 0.0};
    if (f.jumps) d.jumps = f.jumps(x, c, f.alpha, t);
    for (const Jump& j : d.jumps) d.total_rate += j.rate;
    return d;
}

Vector empirical_moments(const std::vector<MomentFn>& moments, const std::vector<double>& xs) {
    Vector c = Vector::Zero(static_cast<Index>(moments.size()));
    for (std::size_t k = 0; k < moments.size(); ++k) {
        double s = 0.0;
        for (double x : xs) s += moments[k](x, 0.0);
        c[static_cast<Index>(k)] = s / static_cast<double>(xs.size());
    }
    return c;
}

// Picks an atom with probability proportional to its rate; `u` is uniform on [0, total).
const Jump* pick_atom(const std::vector<Jump>& jumps, double u) {
    for (const Jump& j : jumps) {
        if (u < j.rate) return &j;
        u -= j.rate;
    }
    return nullptr;
}

}  // namespace

ParticleResult particle_simulate(const Family& family, const ParticleEnsemble& initial, const Grid& grid,
                                 const ParticleOptions& options) {
    if (grid.dim() != 1) throw DimensionError("particle_simulate: 1-d grids only");
    if (initial.positions.empty()) throw InvariantViolation("particle_simulate: need at least one particle");
    if (!(options.r > 0) || !(options.delta > 0)) throw InvariantViolation("particle_simulate: r and delta must be positive");
    for (double x : initial.positions) {
        if (!std::isfinite(x)) throw InvariantViolation("particle_simulate: non-finite position");
    }
    const Partition part = Partition::with_step(initial.time, initial.time + options.r, options.delta);
    const std::size_t n = initial.positions.size();
    const auto& moments = moment_functions(family);
    const auto* levy = std::get_if<LevyFamily>(&family);
    const auto* order_one = std::get_if<OrderOneFamily>(&family);
    if (levy && levy->dim != 1) throw DimensionError("particle_simulate: 1-d families only");

    // A separate stream from the one that drew the initial ensemble.
    std::mt19937_64 rng(initial.seed ^ 0x9e3779b97f4a7c15ULL);
    std::normal_distribution<double> normal;
    std::uniform_real_distribution<double> uniform;

    ParticleResult out{{}, initial, std::vector<std::uint32_t>(n, 0), 0.0};
    std::vector<double>& xs = out.final.positions;
    std::vector<double> times{part.front()};
    std::vector<GridMeasure> hist{cic_histogram(grid, xs)};
    auto dump = [&](double t) {
        if (options.snapshots == nullptr) return;
        *options.snapshots << std::setprecision(17);
        for (std::size_t i = 0; i < n; ++i) *options.snapshots << t << ',' << i << ',' << xs[i] << '\n';
    };
    if (options.snapshots != nullptr) *options.snapshots << "time,particle_id,position\n";
    dump(part.front());

    std::vector<Dynamics> dyn(n);
    for (std::size_t j = 0; j < part.steps(); ++j) {
        const double t = part.node(j);
        const double dt = part.step(j);
        const Vector c = empirical_moments(moments, xs);
        double bound = 0.0;
        if (levy) {
            const Dynamics d = levy_dynamics(*levy, c, t);
            std::fill(dyn.begin(), dyn.end(), d);
            bound = d.total_rate;
        } else {
            for (std::size_t i = 0; i < n; ++i) {
                dyn[i] = order_one_dynamics(*order_one, xs[i], c, t);
                bound = std::max(bound, dyn[i].total_rate);
            }
        }
        if (!std::isfinite(bound) || bound * dt > 0.1) {
            throw NumericalError("particle_simulate: jump rate bound " + std::to_string(bound) + " times step " +
                                 std::to_string(dt) + " exceeds 0.1; reduce delta");
        }
        std::poisson_distribution<int> candidates(bound * dt);
        for (std::size_t i = 0; i < n; ++i) {
            const Dynamics& d = dyn[i];
            double x = xs[i] + d.drift * dt;
            if (d.diffusion > 0) x += std::sqrt(d.diffusion * dt) * normal(rng);
            if (bound > 0) {
                // Thinning: candidates at rate `bound`, each kept with probability rate(x) / bound.
                const int k = candidates(rng);
                for (int e = 0; e < k; ++e) {
                    const Dynamics local = order_one ? order_one_dynamics(*order_one, x, c, t) : d;
                    const Jump* atom = pick_atom(local.jumps, uniform(rng) * bound);
                    if (atom == nullptr) continue;
                    x += atom->y[0];
                    ++out.jump_counts[i];
                }
            }
            xs[i] = x;
        }
        const bool record = (j + 1) % std::max<std::size_t>(options.record_every, 1) == 0 || j + 1 == part.steps();
        if (record) {
            times.push_back(part.node(j + 1));
            hist.push_back(cic_histogram(grid, xs));
            dump(part.node(j + 1));
        }
    }
    out.final.time = part.back();
    out.histogram = Curve(std::move(times), std::move(hist));
    double total = 0.0;
    for (auto k : out.jump_counts) total += k;
    out.mean_jumps = total / static_cast<double>(n);
    return out;
}

ParticleResult particle_simulate(const Family& family, const GridMeasure& mu0, std::size_t n, std::uint64_t seed,
                                 const ParticleOptions& options) {
    return particle_simulate(family, sample_ensemble(mu0, n, seed), mu0.grid, options);
}

}  // namespace nlmarkov
