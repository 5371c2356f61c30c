#pragma once

// Shared image containers, block geometry, padding, filtering helpers and
// the restoration configuration used by every other vfba module.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <exception>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

namespace vfba {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid parameters or geometry.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Inputs whose dimensions do not agree.
class DimensionError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// Single-channel real image, row-major.
class Plane {
public:
    Plane() = default;

    Plane(int height, int width, double fill = 0.0) : height_(height), width_(width) {
        if (height < 1 || width < 1) {
            throw ConfigError("plane dimensions must be positive, got " + std::to_string(height) + "x" +
                              std::to_string(width));
        }
        data_.assign(static_cast<std::size_t>(height) * static_cast<std::size_t>(width), fill);
    }

    [[nodiscard]] int height() const noexcept { return height_; }
    [[nodiscard]] int width() const noexcept { return width_; }
    [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }
    [[nodiscard]] bool empty() const noexcept { return data_.empty(); }

    double& operator()(int y, int x) noexcept { return data_[index(y, x)]; }
    double operator()(int y, int x) const noexcept { return data_[index(y, x)]; }

    [[nodiscard]] std::span<double> values() noexcept { return data_; }
    [[nodiscard]] std::span<const double> values() const noexcept { return data_; }
    [[nodiscard]] std::span<double> row(int y) noexcept { return {data_.data() + index(y, 0), static_cast<std::size_t>(width_)}; }
    [[nodiscard]] std::span<const double> row(int y) const noexcept {
        return {data_.data() + index(y, 0), static_cast<std::size_t>(width_)};
    }

    [[nodiscard]] bool same_shape(const Plane& other) const noexcept {
        return height_ == other.height_ && width_ == other.width_;
    }

    friend bool operator==(const Plane&, const Plane&) = default;

private:
    [[nodiscard]] std::size_t index(int y, int x) const noexcept {
        return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x);
    }

    int height_ = 0;
    int width_ = 0;
    std::vector<double> data_;
};

/// Multi-channel real image (1 or 3 channels), planar storage. Nominal range [0,1].
class Frame {
public:
    Frame() = default;

    Frame(int height, int width, int channels, double fill = 0.0) {
        check_channel_count(channels);
        channels_.assign(static_cast<std::size_t>(channels), Plane(height, width, fill));
    }

    explicit Frame(std::vector<Plane> channels) : channels_(std::move(channels)) {
        check_channel_count(static_cast<int>(channels_.size()));
        for (const auto& c : channels_) {
            if (!c.same_shape(channels_.front())) {
                throw DimensionError("all channels of a frame must share dimensions");
            }
        }
    }

    [[nodiscard]] int height() const noexcept { return channels_.empty() ? 0 : channels_.front().height(); }
    [[nodiscard]] int width() const noexcept { return channels_.empty() ? 0 : channels_.front().width(); }
    [[nodiscard]] int channels() const noexcept { return static_cast<int>(channels_.size()); }
    [[nodiscard]] bool empty() const noexcept { return channels_.empty(); }

    Plane& channel(int c) { return channels_.at(static_cast<std::size_t>(c)); }
    [[nodiscard]] const Plane& channel(int c) const { return channels_.at(static_cast<std::size_t>(c)); }

    double& operator()(int c, int y, int x) noexcept { return channels_[static_cast<std::size_t>(c)](y, x); }
    double operator()(int c, int y, int x) const noexcept { return channels_[static_cast<std::size_t>(c)](y, x); }

    [[nodiscard]] bool same_shape(const Frame& other) const noexcept {
        return channels() == other.channels() && height() == other.height() && width() == other.width();
    }
    [[nodiscard]] bool same_size(const Frame& other) const noexcept {
        return height() == other.height() && width() == other.width();
    }

    friend bool operator==(const Frame&, const Frame&) = default;

private:
    static void check_channel_count(int channels) {
        if (channels != 1 && channels != 3) {
            throw ConfigError("frames must have 1 or 3 channels, got " + std::to_string(channels));
        }
    }

    std::vector<Plane> channels_;
};

inline void require_same_size(const Plane& a, const Plane& b, const char* what) {
    if (!a.same_shape(b)) {
        throw DimensionError(std::string(what) + ": dimension mismatch (" + std::to_string(a.height()) + "x" +
                             std::to_string(a.width()) + " vs " + std::to_string(b.height()) + "x" +
                             std::to_string(b.width()) + ")");
    }
}

inline void require_same_size(const Frame& a, const Frame& b, const char* what) {
    if (!a.same_size(b)) {
        throw DimensionError(std::string(what) + ": dimension mismatch (" + std::to_string(a.height()) + "x" +
                             std::to_string(a.width()) + " vs " + std::to_string(b.height()) + "x" +
                             std::to_string(b.width()) + ")");
    }
}

/// Luminance used for motion estimation: equal-weight channel mean.
inline Plane to_gray(const Frame& frame) {
    if (frame.channels() == 1) {
        return frame.channel(0);
    }
    Plane gray(frame.height(), frame.width());
    auto out = gray.values();
    for (int c = 0; c < frame.channels(); ++c) {
        auto in = frame.channel(c).values();
        for (std::size_t i = 0; i < out.size(); ++i) {
            out[i] += in[i];
        }
    }
    const double inv = 1.0 / frame.channels();
    for (auto& v : out) {
        v *= inv;
    }
    return gray;
}

/// Whole-sample symmetric reflection of an index into [0, n): -1 -> 1, n -> n-2.
/// Handles arbitrarily distant indices by repeated reflection.
[[nodiscard]] inline int reflect_index(int i, int n) noexcept {
    if (n == 1) {
        return 0;
    }
    if (i >= 0 && i < n) {
        return i;
    }
    const int period = 2 * (n - 1);
    int m = i % period;
    if (m < 0) {
        m += period;
    }
    return m < n ? m : period - m;
}

inline Plane mirror_pad(const Plane& plane, int margin) {
    if (margin < 0) {
        throw ConfigError("mirror_pad: margin must be non-negative");
    }
    if (margin >= std::min(plane.height(), plane.width())) {
        throw ConfigError("mirror_pad: margin " + std::to_string(margin) + " must be smaller than the frame (" +
                          std::to_string(plane.height()) + "x" + std::to_string(plane.width()) + ")");
    }
    if (margin == 0) {
        return plane;
    }
    const int h = plane.height();
    const int w = plane.width();
    Plane out(h + 2 * margin, w + 2 * margin);
    for (int y = 0; y < out.height(); ++y) {
        const auto src = plane.row(reflect_index(y - margin, h));
        auto dst = out.row(y);
        for (int x = 0; x < out.width(); ++x) {
            dst[static_cast<std::size_t>(x)] = src[static_cast<std::size_t>(reflect_index(x - margin, w))];
        }
    }
    return out;
}

/// Reflection padding without repeating the border sample.
inline Frame mirror_pad(const Frame& frame, int margin) {
    std::vector<Plane> planes;
    planes.reserve(static_cast<std::size_t>(frame.channels()));
    for (int c = 0; c < frame.channels(); ++c) {
        planes.push_back(mirror_pad(frame.channel(c), margin));
    }
    return Frame(std::move(planes));
}

inline Plane crop(const Plane& plane, int top, int left, int height, int width) {
    if (top < 0 || left < 0 || top + height > plane.height() || left + width > plane.width()) {
        throw DimensionError("crop: window outside plane");
    }
    Plane out(height, width);
    for (int y = 0; y < height; ++y) {
        const auto src = plane.row(top + y);
        std::copy_n(src.begin() + left, width, out.row(y).begin());
    }
    return out;
}

inline Frame crop(const Frame& frame, int top, int left, int height, int width) {
    std::vector<Plane> planes;
    for (int c = 0; c < frame.channels(); ++c) {
        planes.push_back(crop(frame.channel(c), top, left, height, width));
    }
    return Frame(std::move(planes));
}

/// Block positions for overlap-add processing. Entries of `rows`/`cols` are
/// block top-left corners in the frame padded by `pad_margin` on every side,
/// which is the same as the block center in original (0-based) coordinates.
struct BlockGrid {
    int block_size = 0;
    int stride = 0;
    int pad_margin = 0;
    std::vector<int> rows;
    std::vector<int> cols;

    [[nodiscard]] std::size_t size() const noexcept { return rows.size() * cols.size(); }
};

namespace detail {

inline std::vector<int> grid_axis(int extent, int block, int stride) {
    std::vector<int> pos;
    for (int p = 0; p < extent; p += stride) {
        pos.push_back(p);
    }
    // With stride > block/2 the regular lattice can stop short of the far border.
    const int last_needed = extent - block / 2;
    if (pos.back() < last_needed) {
        pos.push_back(last_needed);
    }
    return pos;
}

} // namespace detail

inline BlockGrid make_block_grid(int height, int width, int block, int stride) {
    if (height < 1 || width < 1) {
        throw ConfigError("make_block_grid: frame dimensions must be positive");
    }
    if (block < 2 || block % 2 != 0) {
        throw ConfigError("make_block_grid: block size must be even and >= 2, got " + std::to_string(block));
    }
    if (stride < 1 || stride > block) {
        throw ConfigError("make_block_grid: stride must satisfy 0 < stride <= block, got " + std::to_string(stride));
    }
    BlockGrid grid;
    grid.block_size = block;
    grid.stride = stride;
    grid.pad_margin = block / 2;
    grid.rows = detail::grid_axis(height, block, stride);
    grid.cols = detail::grid_axis(width, block, stride);
    return grid;
}

enum class MaskMode {
    conservative, ///< grow the inconsistent region before smoothing
    literal,      ///< grow the consistent region before smoothing
};

/// Every tunable of the restoration in one place.
struct FbaConfig {
    int half_window = 3;         ///< neighbors on each side of the reference (M)
    int block_size = 128;        ///< fusion block side (b), even
    int stride = 64;             ///< block step (s)
    double exponent = 11.0;      ///< Fourier weight exponent (p)
    std::optional<double> spectrum_sigma; ///< magnitude smoothing std; 50/b when unset
    double consistency_tolerance = 1.0;   ///< round-trip error threshold in pixels (epsilon)
    int mask_radius = 5;         ///< disc radius for mask morphology (r)
    double mask_sigma = 5.0;     ///< Gaussian std for mask smoothing (rho)
    double flow_scale = 1.0 / 3.0;
    int iterations = 1;
    double sharpen_amount = 0.0; ///< unsharp masking strength, 0 disables
    double sharpen_radius = 1.0;
    MaskMode mask_mode = MaskMode::conservative;
    double early_stop = 0.0;     ///< stop iterating when the mean change drops below this; 0 disables
    int threads = 1;

    [[nodiscard]] double sigma_w() const { return spectrum_sigma.value_or(50.0 / block_size); }

    void validate() const {
        auto fail = [](const std::string& msg) { throw ConfigError("invalid configuration: " + msg); };
        if (half_window < 0) fail("half window must be >= 0");
        if (block_size < 2 || block_size % 2 != 0) fail("block size must be even and >= 2");
        if (stride < 1 || stride > block_size) fail("stride must satisfy 0 < stride <= block size");
        if (!(exponent >= 0.0)) fail("exponent must be >= 0");
        if (spectrum_sigma && !(*spectrum_sigma >= 0.0)) fail("spectrum sigma must be >= 0");
        if (!(consistency_tolerance >= 0.0)) fail("consistency tolerance must be >= 0");
        if (mask_radius < 0) fail("mask radius must be >= 0");
        if (!(mask_sigma >= 0.0)) fail("mask sigma must be >= 0");
        if (!(flow_scale > 0.0 && flow_scale <= 1.0)) fail("flow scale must be in (0, 1]");
        if (iterations < 0) fail("iterations must be >= 0");
        if (!(sharpen_amount >= 0.0)) fail("sharpen amount must be >= 0");
        if (!(sharpen_radius > 0.0)) fail("sharpen radius must be > 0");
        if (!(early_stop >= 0.0)) fail("early stop tolerance must be >= 0");
        if (threads < 1) fail("threads must be >= 1");
    }

    friend bool operator==(const FbaConfig&, const FbaConfig&) = default;
};

inline FbaConfig default_config() { return FbaConfig{}; }

inline const char* to_string(MaskMode mode) noexcept {
    return mode == MaskMode::conservative ? "conservative" : "literal";
}

inline MaskMode parse_mask_mode(const std::string& name) {
    if (name == "conservative") return MaskMode::conservative;
    if (name == "literal") return MaskMode::literal;
    throw ConfigError("unknown mask mode '" + name + "' (expected conservative or literal)");
}

// ---------------------------------------------------------------------------
// Gaussian filtering

/// Normalized 1-D Gaussian truncated at ceil(3 sigma). sigma == 0 gives {1}.
inline std::vector<double> gaussian_kernel(double sigma) {
    if (!(sigma > 0.0)) {
        return {1.0};
    }
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        const double v = std::exp(-0.5 * (i * i) / (sigma * sigma));
        k[static_cast<std::size_t>(i + radius)] = v;
        sum += v;
    }
    for (auto& v : k) {
        v /= sum;
    }
    return k;
}

namespace detail {

template <typename IndexFn>
Plane separable_filter(const Plane& in, std::span<const double> kernel, IndexFn&& wrap) {
    const int radius = static_cast<int>(kernel.size() / 2);
    const int h = in.height();
    const int w = in.width();
    Plane tmp(h, w);
    for (int y = 0; y < h; ++y) {
        const auto src = in.row(y);
        auto dst = tmp.row(y);
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int k = -radius; k <= radius; ++k) {
                acc += kernel[static_cast<std::size_t>(k + radius)] * src[static_cast<std::size_t>(wrap(x + k, w))];
            }
            dst[static_cast<std::size_t>(x)] = acc;
        }
    }
    Plane out(h, w);
    for (int y = 0; y < h; ++y) {
        auto dst = out.row(y);
        for (int k = -radius; k <= radius; ++k) {
            const double kv = kernel[static_cast<std::size_t>(k + radius)];
            const auto src = tmp.row(wrap(y + k, h));
            for (int x = 0; x < w; ++x) {
                dst[static_cast<std::size_t>(x)] += kv * src[static_cast<std::size_t>(x)];
            }
        }
    }
    return out;
}

[[nodiscard]] inline int wrap_periodic(int i, int n) noexcept {
    int m = i % n;
    return m < 0 ? m + n : m;
}

} // namespace detail

/// Gaussian blur with mirror boundary; sigma == 0 returns the input.
inline Plane gaussian_blur(const Plane& in, double sigma) {
    if (!(sigma > 0.0)) {
        return in;
    }
    const auto k = gaussian_kernel(sigma);
    return detail::separable_filter(in, k, [](int i, int n) { return reflect_index(i, n); });
}

inline Frame gaussian_blur(const Frame& in, double sigma) {
    std::vector<Plane> planes;
    for (int c = 0; c < in.channels(); ++c) {
        planes.push_back(gaussian_blur(in.channel(c), sigma));
    }
    return Frame(std::move(planes));
}

/// Gaussian blur on a periodic domain (e.g. a DFT-ordered plane).
inline Plane gaussian_blur_periodic(const Plane& in, double sigma) {
    if (!(sigma > 0.0)) {
        return in;
    }
    const auto k = gaussian_kernel(sigma);
    return detail::separable_filter(in, k, detail::wrap_periodic);
}

// ---------------------------------------------------------------------------
// Parallelism

/// Runs fn(index, worker) for index in [0, count) on up to `threads` workers.
/// Work is pulled dynamically; callers that need deterministic output must
/// write results into per-index slots. The first exception is rethrown.
template <typename Fn>
void parallel_for(std::size_t count, int threads, Fn&& fn) {
    const std::size_t workers = std::min<std::size_t>(count, static_cast<std::size_t>(std::max(1, threads)));
    if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i) {
            fn(i, std::size_t{0});
        }
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto body = [&](std::size_t worker) {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= count) {
                return;
            }
            try {
                fn(i, worker);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) {
                    error = std::current_exception();
                }
                next.store(count);
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers - 1);
    for (std::size_t w = 1; w < workers; ++w) {
        pool.emplace_back(body, w);
    }
    body(0);
    for (auto& t : pool) {
        t.join();
    }
    if (error) {
        std::rethrow_exception(error);
    }
}

} // namespace vfba
