#pragma once

// Synthetic camera-shake bursts, quality metrics and fusion diagnostics.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <vector>

#include "vfba/core.hpp"
#include "vfba/fba.hpp"
#include "vfba/register.hpp"

namespace vfba {

/// Nonnegative, unit-sum blur kernel (k x k, k odd).
struct Kernel {
    Plane weights;

    [[nodiscard]] int size() const noexcept { return weights.height(); }
};

struct SynthesisParams {
    int num_frames = 7;
    int kernel_size = 9;
    int tremor_steps = 12;
    double tremor_step_std = 1.0; ///< random-walk increment std in pixels
    double noise_std = 0.0;       ///< additive Gaussian noise, [0,1] units
    std::uint64_t rng_seed = 0;
    std::optional<int> lucky_frame; ///< index of a frame blurred by the identity kernel

    void validate() const {
        auto fail = [](const std::string& m) { throw ConfigError("invalid synthesis parameters: " + m); };
        if (num_frames < 1) fail("num_frames must be >= 1");
        if (kernel_size < 1 || kernel_size % 2 == 0) fail("kernel_size must be odd and >= 1");
        if (tremor_steps < 1) fail("tremor_steps must be >= 1");
        if (!(tremor_step_std >= 0.0)) fail("tremor_step_std must be >= 0");
        if (!(noise_std >= 0.0)) fail("noise_std must be >= 0");
        if (lucky_frame && (*lucky_frame < 0 || *lucky_frame >= num_frames)) fail("lucky_frame out of range");
    }
};

using Rng = std::mt19937_64;

inline Kernel delta_kernel(int size) {
    Kernel k{Plane(size, size)};
    k.weights(size / 2, size / 2) = 1.0;
    return k;
}

/// Hand-tremor PSF: a Gaussian random walk, sampled uniformly in time,
/// splatted bilinearly and centered on its centroid.
inline Kernel simulate_tremor_kernel(const SynthesisParams& params, Rng& rng) {
    params.validate();
    const int k = params.kernel_size;
    const double center = (k - 1) / 2.0;
    std::normal_distribution<double> step(0.0, 1.0);

    struct Sample {
        double y, x, w;
    };
    auto draw = [&] {
        std::vector<std::pair<double, double>> pts{{0.0, 0.0}};
        for (int s = 0; s < params.tremor_steps; ++s) {
            const auto [py, px] = pts.back();
            pts.emplace_back(py + params.tremor_step_std * step(rng), px + params.tremor_step_std * step(rng));
        }
        std::vector<Sample> samples;
        for (std::size_t s = 0; s + 1 < pts.size(); ++s) {
            const auto [y0, x0] = pts[s];
            const auto [y1, x1] = pts[s + 1];
            const double len = std::hypot(y1 - y0, x1 - x0);
            const int sub = std::max(1, static_cast<int>(std::ceil(len * 4.0)));
            for (int j = 0; j < sub; ++j) {
                const double t = (j + 0.5) / sub;
                samples.push_back({y0 + t * (y1 - y0), x0 + t * (x1 - x0), 1.0 / sub});
            }
        }
        double cy = 0.0, cx = 0.0, tw = 0.0;
        for (const auto& s : samples) {
            cy += s.w * s.y;
            cx += s.w * s.x;
            tw += s.w;
        }
        cy /= tw;
        cx /= tw;
        for (auto& s : samples) {
            s.y += center - cy;
            s.x += center - cx;
        }
        return samples;
    };
    auto extent = [&](const std::vector<Sample>& samples) {
        double r = 0.0;
        for (const auto& s : samples) {
            r = std::max({r, std::abs(s.y - center), std::abs(s.x - center)});
        }
        return r;
    };

    std::vector<Sample> samples = draw();
    for (int attempt = 0; attempt < 10 && extent(samples) > center; ++attempt) {
        samples = draw();
    }
    // Still too wide: shrink the path about its centroid to fit the grid.
    if (const double r = extent(samples); r > center) {
        const double shrink = center / r;
        for (auto& s : samples) {
            s.y = center + (s.y - center) * shrink;
            s.x = center + (s.x - center) * shrink;
        }
    }

    Kernel out{Plane(k, k)};
    for (const auto& s : samples) {
        const int y0 = std::clamp(static_cast<int>(std::floor(s.y)), 0, k - 1);
        const int x0 = std::clamp(static_cast<int>(std::floor(s.x)), 0, k - 1);
        const double ty = s.y - y0;
        const double tx = s.x - x0;
        const int y1 = std::min(y0 + 1, k - 1);
        const int x1 = std::min(x0 + 1, k - 1);
        out.weights(y0, x0) += s.w * (1 - ty) * (1 - tx);
        out.weights(y0, x1) += s.w * (1 - ty) * tx;
        out.weights(y1, x0) += s.w * ty * (1 - tx);
        out.weights(y1, x1) += s.w * ty * tx;
    }
    double sum = 0.0;
    for (double v : out.weights.values()) sum += v;
    for (auto& v : out.weights.values()) v /= sum;
    return out;
}

/// Convolution with mirror boundary: out(x) = sum_t k(t) in(x - t).
inline Plane convolve(const Plane& in, const Kernel& kernel) {
    const int k = kernel.size();
    const int r = k / 2;
    const int h = in.height();
    const int w = in.width();
    Plane out(h, w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int a = 0; a < k; ++a) {
                const int yy = reflect_index(y - (a - r), h);
                for (int b = 0; b < k; ++b) {
                    const double kv = kernel.weights(a, b);
                    if (kv != 0.0) {
                        acc += kv * in(yy, reflect_index(x - (b - r), w));
                    }
                }
            }
            out(y, x) = acc;
        }
    }
    return out;
}

inline Frame convolve(const Frame& in, const Kernel& kernel) {
    std::vector<Plane> planes;
    for (int c = 0; c < in.channels(); ++c) {
        planes.push_back(convolve(in.channel(c), kernel));
    }
    return Frame(std::move(planes));
}

/// Adds iid Gaussian noise and clamps to [0,1].
inline void add_noise(Frame& frame, double stddev, Rng& rng) {
    std::normal_distribution<double> noise(0.0, 1.0);
    for (int c = 0; c < frame.channels(); ++c) {
        for (auto& v : frame.channel(c).values()) {
            v = std::clamp(v + stddev * noise(rng), 0.0, 1.0);
        }
    }
}

struct Burst {
    std::vector<Frame> frames;
    std::vector<Kernel> kernels;
};

/// v_i = u * k_i + n_i for independent tremor kernels k_i.
inline Burst synthesize_burst(const Frame& sharp, const SynthesisParams& params, Rng& rng) {
    params.validate();
    Burst burst;
    for (int i = 0; i < params.num_frames; ++i) {
        Kernel k = params.lucky_frame == i ? delta_kernel(params.kernel_size) : simulate_tremor_kernel(params, rng);
        Frame f = convolve(sharp, k);
        if (params.noise_std > 0.0) {
            add_noise(f, params.noise_std, rng);
        } else {
            for (int c = 0; c < f.channels(); ++c) {
                for (auto& v : f.channel(c).values()) v = std::clamp(v, 0.0, 1.0);
            }
        }
        burst.frames.push_back(std::move(f));
        burst.kernels.push_back(std::move(k));
    }
    return burst;
}

inline Burst synthesize_burst(const Frame& sharp, const SynthesisParams& params) {
    Rng rng(params.rng_seed);
    return synthesize_burst(sharp, params, rng);
}

/// 10 log10(1 / MSE) for [0,1] data; +infinity for identical frames.
inline double psnr(const Frame& a, const Frame& b) {
    if (!a.same_shape(b)) {
        throw DimensionError("psnr: frames differ in shape");
    }
    double acc = 0.0;
    std::size_t n = 0;
    for (int c = 0; c < a.channels(); ++c) {
        const auto av = a.channel(c).values();
        const auto bv = b.channel(c).values();
        for (std::size_t i = 0; i < av.size(); ++i) {
            const double d = av[i] - bv[i];
            acc += d * d;
        }
        n += av.size();
    }
    if (acc == 0.0) {
        return std::numeric_limits<double>::infinity();
    }
    return 10.0 * std::log10(static_cast<double>(n) / acc);
}

/// Robust noise std: 1.4826 * MAD of the 4-neighbor Laplacian response over
/// interior pixels of all channels, divided by the stencil's noise gain sqrt(20).
inline double estimate_noise_mad(const Frame& frame) {
    std::vector<double> resp;
    for (int c = 0; c < frame.channels(); ++c) {
        const Plane& p = frame.channel(c);
        for (int y = 1; y + 1 < p.height(); ++y) {
            for (int x = 1; x + 1 < p.width(); ++x) {
                resp.push_back(p(y - 1, x) + p(y + 1, x) + p(y, x - 1) + p(y, x + 1) - 4.0 * p(y, x));
            }
        }
    }
    if (resp.empty()) {
        return 0.0;
    }
    auto median = [](std::vector<double>& v) {
        const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
        std::nth_element(v.begin(), mid, v.end());
        return *mid;
    };
    const double med = median(resp);
    for (auto& v : resp) v = std::abs(v - med);
    return 1.4826 * median(resp) / std::sqrt(20.0);
}

struct WeightReport {
    /// Per-frame share of the total weight norm; sums to 1.
    std::vector<double> contributions;
    /// Per-frame weight norm for each block, laid out on the block grid.
    std::vector<Plane> block_maps;
};

/// Per-frame weight norms from a fusion pass, normalized to sum 1.
inline WeightReport summarize_weights(const FusionDiagnostics& diag) {
    const int rows = static_cast<int>(diag.grid.rows.size());
    const int cols = static_cast<int>(diag.grid.cols.size());
    WeightReport report;
    double total = 0.0;
    for (const auto& energy : diag.weight_energy) {
        double sum = 0.0;
        Plane map(rows, cols);
        for (std::size_t k = 0; k < energy.size(); ++k) {
            sum += energy[k];
            map.values()[k] = std::sqrt(energy[k]);
        }
        report.contributions.push_back(std::sqrt(sum));
        report.block_maps.push_back(std::move(map));
        total += report.contributions.back();
    }
    for (auto& c : report.contributions) c /= total;
    return report;
}

inline WeightReport weight_diagnostics(const RegisteredStack& stack, const FbaConfig& cfg) {
    FusionDiagnostics diag;
    fuse_stack(stack, cfg, &diag);
    return summarize_weights(diag);
}

} // namespace vfba
