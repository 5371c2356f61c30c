#pragma once

// Backward warping through flow fields and forward/backward round-trip maps.

#include <array>
#include <cmath>
#include <limits>

#include "vfba/core.hpp"

namespace vfba {

/// Per-pixel displacement. A field on grid A maps x to x + (dx(x), dy(x)) in grid B.
struct FlowField {
    Plane dx;
    Plane dy;

    FlowField() = default;
    FlowField(int height, int width) : dx(height, width), dy(height, width) {}
    FlowField(Plane dx_, Plane dy_) : dx(std::move(dx_)), dy(std::move(dy_)) {
        require_same_size(dx, dy, "FlowField");
    }

    [[nodiscard]] int height() const noexcept { return dx.height(); }
    [[nodiscard]] int width() const noexcept { return dx.width(); }

    friend bool operator==(const FlowField&, const FlowField&) = default;
};

/// 1 where the warp sampled outside the source frame.
struct OobMask {
    Plane values;
};

/// Forward/backward round-trip error in pixels.
struct ConsistencyMap {
    Plane values;
};

/// Round trips that leave the frame get this value so they always fail the tolerance test.
inline constexpr double kInconsistent = 1e9;

namespace detail {

// Catmull-Rom weights (a = -0.5) for offsets -1, 0, 1, 2 at fractional position t.
inline std::array<double, 4> cubic_weights(double t) noexcept {
    const double t2 = t * t;
    const double t3 = t2 * t;
    return {-0.5 * t3 + t2 - 0.5 * t, 1.5 * t3 - 2.5 * t2 + 1.0, -1.5 * t3 + 2.0 * t2 + 0.5 * t, 0.5 * t3 - 0.5 * t2};
}

} // namespace detail

[[nodiscard]] inline bool inside(const Plane& p, double y, double x) noexcept {
    return y >= 0.0 && x >= 0.0 && y <= p.height() - 1 && x <= p.width() - 1;
}

/// Catmull-Rom bicubic sample at (y, x); the support is mirror-extended.
[[nodiscard]] inline double sample_bicubic(const Plane& p, double y, double x) noexcept {
    const double fy = std::floor(y);
    const double fx = std::floor(x);
    const int iy = static_cast<int>(fy);
    const int ix = static_cast<int>(fx);
    const auto wy = detail::cubic_weights(y - fy);
    const auto wx = detail::cubic_weights(x - fx);
    const int h = p.height();
    const int w = p.width();
    std::array<int, 4> cols{};
    for (int j = 0; j < 4; ++j) {
        cols[static_cast<std::size_t>(j)] = reflect_index(ix - 1 + j, w);
    }
    double acc = 0.0;
    for (int i = 0; i < 4; ++i) {
        const auto r = p.row(reflect_index(iy - 1 + i, h));
        double racc = 0.0;
        for (int j = 0; j < 4; ++j) {
            racc += wx[static_cast<std::size_t>(j)] * r[static_cast<std::size_t>(cols[static_cast<std::size_t>(j)])];
        }
        acc += wy[static_cast<std::size_t>(i)] * racc;
    }
    return acc;
}

/// Bilinear sample at (y, x) with coordinates clamped to the plane.
[[nodiscard]] inline double sample_bilinear(const Plane& p, double y, double x) noexcept {
    y = std::clamp(y, 0.0, static_cast<double>(p.height() - 1));
    x = std::clamp(x, 0.0, static_cast<double>(p.width() - 1));
    const int y0 = static_cast<int>(y);
    const int x0 = static_cast<int>(x);
    const int y1 = std::min(y0 + 1, p.height() - 1);
    const int x1 = std::min(x0 + 1, p.width() - 1);
    const double ty = y - y0;
    const double tx = x - x0;
    const double top = (1.0 - tx) * p(y0, x0) + tx * p(y0, x1);
    const double bottom = (1.0 - tx) * p(y1, x0) + tx * p(y1, x1);
    return (1.0 - ty) * top + ty * bottom;
}

/// Bicubic backward warp of one plane: out(x) = src(x + f(x)).
inline Plane warp_plane(const Plane& src, const FlowField& f) {
    if (src.height() != f.height() || src.width() != f.width()) {
        throw DimensionError("warp: source and flow dimensions differ");
    }
    Plane out(src.height(), src.width());
    for (int y = 0; y < src.height(); ++y) {
        for (int x = 0; x < src.width(); ++x) {
            out(y, x) = sample_bicubic(src, y + f.dy(y, x), x + f.dx(y, x));
        }
    }
    return out;
}

struct WarpResult {
    Frame warped;
    OobMask oob;
};

inline WarpResult warp_bicubic(const Frame& src, const FlowField& f) {
    if (src.height() != f.height() || src.width() != f.width()) {
        throw DimensionError("warp_bicubic: frame is " + std::to_string(src.height()) + "x" +
                             std::to_string(src.width()) + " but flow is " + std::to_string(f.height()) + "x" +
                             std::to_string(f.width()));
    }
    std::vector<Plane> planes;
    for (int c = 0; c < src.channels(); ++c) {
        planes.push_back(warp_plane(src.channel(c), f));
    }
    Plane oob(src.height(), src.width());
    const Plane& ref = src.channel(0);
    for (int y = 0; y < src.height(); ++y) {
        for (int x = 0; x < src.width(); ++x) {
            oob(y, x) = inside(ref, y + f.dy(y, x), x + f.dx(y, x)) ? 0.0 : 1.0;
        }
    }
    return {Frame(std::move(planes)), OobMask{std::move(oob)}};
}

/// cMap(x) = |f(x) + g(x + f(x))|, with g sampled bilinearly. `fwd` lives on the
/// reference grid and `bwd` on the other frame's grid.
inline ConsistencyMap roundtrip_map(const FlowField& fwd, const FlowField& bwd) {
    if (fwd.height() != bwd.height() || fwd.width() != bwd.width()) {
        throw DimensionError("roundtrip_map: forward and backward flows differ in size");
    }
    Plane cmap(fwd.height(), fwd.width());
    for (int y = 0; y < fwd.height(); ++y) {
        for (int x = 0; x < fwd.width(); ++x) {
            const double fx = fwd.dx(y, x);
            const double fy = fwd.dy(y, x);
            const double ty = y + fy;
            const double tx = x + fx;
            if (!inside(bwd.dx, ty, tx)) {
                cmap(y, x) = kInconsistent;
                continue;
            }
            const double rx = fx + sample_bilinear(bwd.dx, ty, tx);
            const double ry = fy + sample_bilinear(bwd.dy, ty, tx);
            cmap(y, x) = std::hypot(rx, ry);
        }
    }
    return {std::move(cmap)};
}

} // namespace vfba
