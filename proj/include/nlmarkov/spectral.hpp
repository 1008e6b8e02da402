#pragma once

#include <array>
#include <complex>
#include <memory>
#include <vector>

#include "nlmarkov/grid.hpp"

namespace nlmarkov {

using ComplexVector = Eigen::VectorXcd;

/// Real-to-half-complex DFT on a zero-padded copy of a grid.
///
/// Node values are embedded in a periodic box with `pad_factor` times as many
/// nodes per axis (the original nodes sit in the middle), transformed with
/// FFTW, and restricted back after the inverse. With P the padding, R the
/// restriction and C_m the circulant of a multiplier m, the operator
/// R C_m P has adjoint R C_{conj m} P, which is what the propagators rely on.
class SpectralTransform {
public:
    explicit SpectralTransform(const Grid& g, int pad_factor = 2);
    ~SpectralTransform();
    SpectralTransform(const SpectralTransform&) = delete;
    SpectralTransform& operator=(const SpectralTransform&) = delete;

    const Grid& grid() const noexcept { return grid_; }
    /// Nodes per axis of the padded box.
    std::size_t padded() const noexcept { return m_; }
    /// Number of half-spectrum coefficients.
    std::size_t spectrum_size() const noexcept { return frequencies_.size(); }
    /// Angular frequency of every half-spectrum coefficient (second entry 0 in 1-d).
    const std::vector<std::array<double, 2>>& frequencies() const noexcept { return frequencies_; }

    /// Unnormalised forward transform of the padded node values.
    ComplexVector forward(const Vector& values) const;
    /// Inverse transform divided by the padded size, restricted to the grid.
    Vector inverse(const ComplexVector& spectrum) const;

    /// R C_m P v: multiply the spectrum of the padded v by m.
    Vector apply_multiplier(const Vector& values, const ComplexVector& m) const;

private:
    struct Plans;
    Grid grid_;
    std::size_t m_;
    std::size_t offset_;
    std::vector<std::array<double, 2>> frequencies_;
    std::unique_ptr<Plans> plans_;
};

}  // namespace nlmarkov
