#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "nlmarkov/generators.hpp"
#include "nlmarkov/nonlinear.hpp"

namespace nlmarkov {

inline constexpr const char* kScenarioSchema = "nlmarkov.scenario/1";

struct GridSpec {
    double lower = 0.0;
    double upper = 1.0;
    std::size_t n = 64;
    std::optional<int> dim;

    Grid build() const;
};

/// phi(x, y) = scale * f(x, y) + shift with f one of one, x, x2, y, sin, cos.
struct MomentSpec {
    std::string kind = "x";
    std::optional<double> scale;
    std::optional<double> shift;

    MomentFn build() const;
};

/// (constant + sum_j weights_j c_j) * (alpha if alpha_scaled) * m(t),
/// with m one of none, sin, cos, linear (m(t) = t).
struct Affine {
    std::optional<double> constant;
    std::optional<std::vector<double>> weights;
    std::optional<bool> alpha_scaled;
    std::optional<std::string> time;

    double value(const Vector& c, double alpha, double t) const;
    /// d/dc_j, or d/dalpha for kAlpha.
    double partial(const Vector& c, double alpha, double t, int j) const;
};

struct AtomSpec {
    std::array<double, 2> y{};
    Affine rate;
};

/// Lattice power tail: atoms at +-k h for k h >= from, rate scale |y|^{-1-exponent} h.
struct TailSpec {
    double exponent = 0.5;
    double scale = 0.1;
    double from = 1.0;
};

/// Coefficient tables, affine in the moments.
///   levy:      G = g * I, b_i, atoms
///   order_one: b(x) = drift + drift_x * x, atoms (x-independent), optional tail
struct FamilySpec {
    std::string kind = "levy";
    std::optional<std::string> preset;
    std::optional<std::map<std::string, double>> params;
    std::optional<std::string> name;
    std::optional<double> alpha;
    std::optional<std::vector<MomentSpec>> moments;
    std::optional<Affine> g;
    std::optional<std::vector<Affine>> b;
    std::optional<Affine> drift;
    std::optional<Affine> drift_x;
    std::optional<std::vector<AtomSpec>> jumps;
    std::optional<TailSpec> tail;
    std::optional<double> jump_radius;
};

/// gaussian {mean, stddev}, dirac {x}, dipole {x, width} (signed, zero mass),
/// histogram {path} (CSV relative to the scenario file).
struct InitialSpec {
    std::string kind = "gaussian";
    std::optional<double> mean;
    std::optional<double> stddev;
    std::optional<double> x;
    std::optional<double> width;
    std::optional<std::string> path;
};

struct Tolerances {
    std::optional<double> solver;
    std::optional<double> checker_eps;
    std::optional<double> lipschitz_cap;
};

struct Outputs {
    std::optional<std::size_t> output_every;
    std::optional<bool> particles;
    std::optional<std::size_t> particle_count;
    std::optional<bool> particle_snapshots;
};

struct SensitivitySpec {
    std::optional<double> alpha;
    std::optional<InitialSpec> xi0;
    std::optional<std::vector<double>> h_list;
    std::optional<std::vector<double>> sample_times;
};

struct CompareSpec {
    FamilySpec family_b;
    std::optional<InitialSpec> initial_b;
    std::optional<std::vector<double>> sample_times;
};

struct Scenario {
    std::string schema = kScenarioSchema;
    std::string name;
    GridSpec grid;
    FamilySpec family;
    InitialSpec initial;
    double horizon = 1.0;
    double delta = 1e-2;
    std::optional<Tolerances> tolerances;
    std::optional<std::uint64_t> seed;
    std::optional<Outputs> outputs;
    std::optional<SensitivitySpec> sensitivity;
    std::optional<CompareSpec> compare;
    /// Directory used to resolve relative paths; not serialised.
    std::filesystem::path base_dir;
};

/// Parses and validates; ConfigError names the offending field.
Scenario parse_scenario(const std::string& json_text, const std::filesystem::path& base_dir = {});
Scenario load_scenario(const std::filesystem::path& path);
/// Serialises only the fields that were present.
std::string to_json(const Scenario& s);

/// Expands a preset into coefficient tables (identity for table families).
FamilySpec expand_preset(const FamilySpec& spec);
Family build_family(const FamilySpec& spec, const Grid& grid);
GridMeasure build_initial(const InitialSpec& spec, const Grid& grid, const std::filesystem::path& base_dir = {});

SolverOptions solver_options(const Scenario& s);

/// Sample measures used by the order-one hypothesis checker: mu0 plus Gaussians across the grid.
std::vector<GridMeasure> checker_samples(const GridMeasure& mu0);
std::string checker_report_json(const OrderOneReport& rep);

/// Command drivers. They write their artifacts under `out_dir` and return the exit
/// code: 0 success, 2 well-posedness or validation failure. ConfigError propagates.
int run_simulate(const Scenario& s, const std::filesystem::path& out_dir);
int run_sensitivity(const Scenario& s, const std::filesystem::path& out_dir);
int run_compare(const Scenario& s, const std::filesystem::path& out_dir);

}  // namespace nlmarkov
