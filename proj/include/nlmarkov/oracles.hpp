#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "nlmarkov/generators.hpp"
#include "nlmarkov/linear_prop.hpp"

namespace nlmarkov {

struct DenseOptions {
    double rtol = 1e-10;
    double atol = 1e-13;
};

using GeneratorFn = std::function<Matrix(double t)>;

/// Adaptive Dormand–Prince integration of w' = A(t)^T w, reported at the partition nodes.
/// Grids up to 128 nodes; NumericalError when the step size hits its floor.
Curve dense_evolve(const GeneratorFn& generator, const GridMeasure& mu0, const Partition& partition,
                   const DenseOptions& options = {});
/// Generator A_j held constant on [t_j, t_{j+1}].
Curve dense_evolve(const std::vector<Matrix>& generators, const GridMeasure& mu0, const Partition& partition,
                   const DenseOptions& options = {});

/// U^{t_0, t_N} f from f' = -A(t) f integrated backwards from t_N.
Vector dense_backward(const GeneratorFn& generator, const Vector& f, const Partition& partition,
                      const DenseOptions& options = {});
Vector dense_backward(const std::vector<Matrix>& generators, const Vector& f, const Partition& partition,
                      const DenseOptions& options = {});

/// The nonlinear equation w' = A[w]^T w integrated directly, reassembling the
/// generator at every stage (order-one families on small grids).
Curve dense_kinetic(const OrderOneFamily& family, const GridMeasure& mu0, const Partition& partition,
                    const DenseOptions& options = {});

/// y' = rhs(t, y) reported at the given increasing times (the first is the start).
std::vector<double> scalar_ode(const std::function<double(double, double)>& rhs, double y0,
                               const std::vector<double>& times, double rtol = 1e-12);

/// Closed-form moment curves of the reducible families:
///   meanfield_drift: m0 e^{-alpha t}               (params m0, alpha)
///   heat:            var0 + G t                   (params var0, G)
///   compound_poisson: m0 + lambda t mean_jump       (params lambda, mean_jump, m0 optional)
///   interacting_poisson: c0 e^{-lambda y0 t}       (params c0, lambda, y0)
std::vector<double> moment_oracle(const std::string& tag, const std::map<std::string, double>& params,
                                  const std::vector<double>& times);

struct ParticleEnsemble {
    std::vector<double> positions;
    std::uint64_t seed = 0;
    double time = 0.0;
};

/// N particles drawn from the node weights of mu0, each jittered uniformly within
/// its cell unless `jitter` is false.
ParticleEnsemble sample_ensemble(const GridMeasure& mu0, std::size_t n, std::uint64_t seed, bool jitter = true);

struct ParticleOptions {
    double r = 1.0;
    double delta = 1e-3;
    /// Histogram every `record_every`-th step (the last step always).
    std::size_t record_every = 1;
    /// Optional `time,particle_id,position` dump at the recorded steps.
    std::ostream* snapshots = nullptr;
};

struct ParticleResult {
    Curve histogram;  ///< cloud-in-cell histograms on the solver grid
    ParticleEnsemble final;
    std::vector<std::uint32_t> jump_counts;  ///< accepted jumps per particle
    double mean_jumps = 0.0;
};

/// Interacting particle system with the empirical measure in place of mu:
/// Euler–Maruyama for drift and diffusion, thinning against the per-step rate
/// bound for jumps, empirical moments recomputed every step. 1-d only.
/// Rejects steps with rate bound * delta > 0.1. Deterministic given the seed.
ParticleResult particle_simulate(const Family& family, const ParticleEnsemble& initial, const Grid& grid,
                                 const ParticleOptions& options);
ParticleResult particle_simulate(const Family& family, const GridMeasure& mu0, std::size_t n, std::uint64_t seed,
                                 const ParticleOptions& options);

/// Cloud-in-cell histogram; particles beyond the grid land on the edge nodes.
GridMeasure cic_histogram(const Grid& grid, const std::vector<double>& positions);

}  // namespace nlmarkov
