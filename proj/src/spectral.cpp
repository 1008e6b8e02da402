#include "nlmarkov/spectral.hpp"

#include <fftw3.h>

#include <cmath>
#include <mutex>
#include <numbers>

#include "nlmarkov/error.hpp"

namespace nlmarkov {

namespace {

// FFTW planning is not thread-safe; execution with the new-array interface is.
std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

struct RealBuffer {
    double* data;
    explicit RealBuffer(std::size_t n) : data(fftw_alloc_real(n)) {
        if (data == nullptr) throw std::bad_alloc();
    }
    ~RealBuffer() { fftw_free(data); }
    RealBuffer(const RealBuffer&) = delete;
    RealBuffer& operator=(const RealBuffer&) = delete;
};

struct ComplexBuffer {
    fftw_complex* data;
    explicit ComplexBuffer(std::size_t n) : data(fftw_alloc_complex(n)) {
        if (data == nullptr) throw std::bad_alloc();
    }
    ~ComplexBuffer() { fftw_free(data); }
    ComplexBuffer(const ComplexBuffer&) = delete;
    ComplexBuffer& operator=(const ComplexBuffer&) = delete;
};

}  // namespace

struct SpectralTransform::Plans {
    fftw_plan r2c = nullptr;
    fftw_plan c2r = nullptr;
    std::size_t real_size = 0;
    std::size_t complex_size = 0;

    ~Plans() {
        std::lock_guard lock(planner_mutex());
        if (r2c != nullptr) fftw_destroy_plan(r2c);
        if (c2r != nullptr) fftw_destroy_plan(c2r);
    }
};

SpectralTransform::SpectralTransform(const Grid& g, int pad_factor)
    : grid_(g), m_(g.n() * static_cast<std::size_t>(pad_factor)), offset_(0), plans_(std::make_unique<Plans>()) {
    if (pad_factor < 1) throw InvariantViolation("SpectralTransform: pad factor must be at least 1");
    offset_ = (m_ - g.n()) / 2;
    const std::size_t half = m_ / 2 + 1;
    const double length = static_cast<double>(m_) * g.spacing();
    const double base = 2.0 * std::numbers::pi / length;
    auto signed_index = [this](std::size_t k) {
        return k <= m_ / 2 ? static_cast<double>(k) : static_cast<double>(k) - static_cast<double>(m_);
    };
    const int m = static_cast<int>(m_);

    std::lock_guard lock(planner_mutex());
    if (g.dim() == 1) {
        plans_->real_size = m_;
        plans_->complex_size = half;
        for (std::size_t k = 0; k < half; ++k) frequencies_.push_back({base * static_cast<double>(k), 0.0});
        RealBuffer in(plans_->real_size);
        ComplexBuffer out(plans_->complex_size);
        plans_->r2c = fftw_plan_dft_r2c_1d(m, in.data, out.data, FFTW_ESTIMATE);
        plans_->c2r = fftw_plan_dft_c2r_1d(m, out.data, in.data, FFTW_ESTIMATE);
    } else {
        plans_->real_size = m_ * m_;
        plans_->complex_size = m_ * half;
        for (std::size_t k0 = 0; k0 < m_; ++k0)
            for (std::size_t k1 = 0; k1 < half; ++k1)
                frequencies_.push_back({base * signed_index(k0), base * static_cast<double>(k1)});
        RealBuffer in(plans_->real_size);
        ComplexBuffer out(plans_->complex_size);
        plans_->r2c = fftw_plan_dft_r2c_2d(m, m, in.data, out.data, FFTW_ESTIMATE);
        plans_->c2r = fftw_plan_dft_c2r_2d(m, m, out.data, in.data, FFTW_ESTIMATE);
    }
    if (plans_->r2c == nullptr || plans_->c2r == nullptr) throw NumericalError("SpectralTransform: FFTW planning failed");
}

SpectralTransform::~SpectralTransform() = default;

ComplexVector SpectralTransform::forward(const Vector& values) const {
    if (static_cast<std::size_t>(values.size()) != grid_.size()) throw DimensionError("SpectralTransform: size mismatch");
    RealBuffer in(plans_->real_size);
    ComplexBuffer out(plans_->complex_size);
    std::fill(in.data, in.data + plans_->real_size, 0.0);
    const std::size_t n = grid_.n();
    if (grid_.dim() == 1) {
        for (std::size_t i = 0; i < n; ++i) in.data[offset_ + i] = values[static_cast<Eigen::Index>(i)];
    } else {
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                in.data[(offset_ + i) * m_ + offset_ + j] = values[static_cast<Eigen::Index>(i * n + j)];
    }
    fftw_execute_dft_r2c(plans_->r2c, in.data, out.data);
    ComplexVector spectrum(static_cast<Eigen::Index>(plans_->complex_size));
    for (std::size_t k = 0; k < plans_->complex_size; ++k) {
        spectrum[static_cast<Eigen::Index>(k)] = {out.data[k][0], out.data[k][1]};
    }
    return spectrum;
}

Vector SpectralTransform::inverse(const ComplexVector& spectrum) const {
    if (static_cast<std::size_t>(spectrum.size()) != plans_->complex_size) {
        throw DimensionError("SpectralTransform: spectrum size mismatch");
    }
    RealBuffer out(plans_->real_size);
    ComplexBuffer in(plans_->complex_size);
    for (std::size_t k = 0; k < plans_->complex_size; ++k) {
        in.data[k][0] = spectrum[static_cast<Eigen::Index>(k)].real();
        in.data[k][1] = spectrum[static_cast<Eigen::Index>(k)].imag();
    }
    // c2r overwrites its input.
    fftw_execute_dft_c2r(plans_->c2r, in.data, out.data);
    const double scale = 1.0 / static_cast<double>(plans_->real_size);
    const std::size_t n = grid_.n();
    Vector values(static_cast<Eigen::Index>(grid_.size()));
    if (grid_.dim() == 1) {
        for (std::size_t i = 0; i < n; ++i) values[static_cast<Eigen::Index>(i)] = out.data[offset_ + i] * scale;
    } else {
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                values[static_cast<Eigen::Index>(i * n + j)] = out.data[(offset_ + i) * m_ + offset_ + j] * scale;
    }
    return values;
}

Vector SpectralTransform::apply_multiplier(const Vector& values, const ComplexVector& m) const {
    if (static_cast<std::size_t>(m.size()) != plans_->complex_size) throw DimensionError("SpectralTransform: multiplier size mismatch");
    return inverse(forward(values).cwiseProduct(m));
}

}  // namespace nlmarkov
