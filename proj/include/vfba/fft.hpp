#pragma once

// Square real 2-D DFT backed by FFTW. Plans are created with FFTW_ESTIMATE so
// that the chosen algorithm, and therefore every result bit, is reproducible.

#include <complex>
#include <algorithm>
#include <mutex>
#include <span>

#include <fftw3.h>

#include "vfba/core.hpp"

namespace vfba {

namespace detail {

// FFTW planning is not thread-safe; execution is.
inline std::mutex& fftw_planner_mutex() {
    static std::mutex m;
    return m;
}

} // namespace detail

/// n x n real-to-complex transform. The spectrum is the non-redundant half,
/// n rows of n/2+1 coefficients in natural DFT order. Both directions are
/// unnormalized.
class Fft2d {
public:
    explicit Fft2d(int n) : n_(n), half_(n / 2 + 1) {
        if (n < 1) {
            throw ConfigError("Fft2d: size must be positive");
        }
        real_ = static_cast<double*>(fftw_malloc(sizeof(double) * real_size()));
        spec_ = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * spectrum_size()));
        if (!real_ || !spec_) {
            release();
            throw std::bad_alloc();
        }
        std::lock_guard lock(detail::fftw_planner_mutex());
        forward_ = fftw_plan_dft_r2c_2d(n_, n_, real_, spec_, FFTW_ESTIMATE);
        inverse_ = fftw_plan_dft_c2r_2d(n_, n_, spec_, real_, FFTW_ESTIMATE);
    }

    Fft2d(const Fft2d&) = delete;
    Fft2d& operator=(const Fft2d&) = delete;

    ~Fft2d() { release(); }

    [[nodiscard]] int size() const noexcept { return n_; }
    [[nodiscard]] int half_width() const noexcept { return half_; }
    [[nodiscard]] std::size_t real_size() const noexcept { return static_cast<std::size_t>(n_) * n_; }
    [[nodiscard]] std::size_t spectrum_size() const noexcept { return static_cast<std::size_t>(n_) * half_; }

    /// Input buffer for forward(), output buffer of inverse().
    [[nodiscard]] std::span<double> real() noexcept { return {real_, real_size()}; }

    void forward(std::span<std::complex<double>> out) {
        fftw_execute(forward_);
        const auto* spec = reinterpret_cast<const std::complex<double>*>(spec_);
        std::copy_n(spec, spectrum_size(), out.begin());
    }

    void inverse(std::span<const std::complex<double>> in) {
        std::copy_n(in.begin(), spectrum_size(), reinterpret_cast<std::complex<double>*>(spec_));
        fftw_execute(inverse_);
    }

private:
    void release() noexcept {
        std::lock_guard lock(detail::fftw_planner_mutex());
        if (forward_) fftw_destroy_plan(forward_);
        if (inverse_) fftw_destroy_plan(inverse_);
        if (real_) fftw_free(real_);
        if (spec_) fftw_free(spec_);
        forward_ = inverse_ = nullptr;
        real_ = nullptr;
        spec_ = nullptr;
    }

    int n_;
    int half_;
    double* real_ = nullptr;
    fftw_complex* spec_ = nullptr;
    fftw_plan forward_ = nullptr;
    fftw_plan inverse_ = nullptr;
};

} // namespace vfba
