#pragma once

// Synthetic inputs shared by the test suites.

#include <cmath>
#include <filesystem>
#include <random>
#include <string>

#include "vfba/core.hpp"

namespace vfba::test {

/// Band-limited random texture in [0.1, 0.9]: smoothed white noise plus a few
/// oriented sinusoids. Deterministic for a given seed.
inline Plane textured_plane(int height, int width, unsigned seed, double smoothing = 1.5) {
    std::mt19937 rng(seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    Plane p(height, width);
    for (auto& v : p.values()) v = noise(rng);
    p = gaussian_blur(p, smoothing);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    for (int k = 0; k < 4; ++k) {
        const double fy = 0.02 + 0.1 * uni(rng);
        const double fx = 0.02 + 0.1 * uni(rng);
        const double ph = 6.283 * uni(rng);
        for (int y = 0; y < height; ++y) {
            for (int x = 0; x < width; ++x) {
                p(y, x) += 0.15 * std::sin(6.283 * (fy * y + fx * x) + ph);
            }
        }
    }
    double lo = 1e300, hi = -1e300;
    for (double v : p.values()) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    for (auto& v : p.values()) v = 0.1 + 0.8 * (v - lo) / (hi - lo);
    return p;
}

inline Frame textured_frame(int height, int width, int channels, unsigned seed, double smoothing = 1.5) {
    std::vector<Plane> planes;
    for (int c = 0; c < channels; ++c) planes.push_back(textured_plane(height, width, seed + 7919u * c, smoothing));
    return Frame(std::move(planes));
}

inline Frame gray_frame(Plane p) { return Frame(std::vector<Plane>{std::move(p)}); }

inline double max_abs_diff(const Plane& a, const Plane& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.values()[i] - b.values()[i]));
    return m;
}

inline double max_abs_diff(const Frame& a, const Frame& b) {
    double m = 0.0;
    for (int c = 0; c < a.channels(); ++c) m = std::max(m, max_abs_diff(a.channel(c), b.channel(c)));
    return m;
}

inline Frame add_gaussian_noise(Frame f, double sigma, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, sigma);
    for (int c = 0; c < f.channels(); ++c)
        for (auto& v : f.channel(c).values()) v += n(rng);
    return f;
}

/// Scratch directory removed on scope exit.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() / ("vfba_" + tag + "_" + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    [[nodiscard]] const std::filesystem::path& path() const noexcept { return path_; }

private:
    std::filesystem::path path_;
};

} // namespace vfba::test
