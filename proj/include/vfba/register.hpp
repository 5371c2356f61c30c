#pragma once

// Consistent registration: neighbors are warped onto the reference and only
// pixels that survive the forward/backward round-trip test are kept; the rest
// is filled from the reference.

#include <cmath>
#include <optional>
#include <vector>

#include "vfba/core.hpp"
#include "vfba/flow.hpp"
#include "vfba/warp.hpp"

namespace vfba {

/// Registration trust in [0,1].
struct SoftMask {
    Plane values;
};

struct RegisteredStack {
    std::vector<Frame> frames;
    std::vector<SoftMask> masks;
    std::size_t ref_index = 0;
    /// Round-trip maps per frame (empty for the reference); kept for diagnostics.
    std::vector<std::optional<ConsistencyMap>> consistency;

    [[nodiscard]] std::size_t size() const noexcept { return frames.size(); }
};

inline SoftMask binary_consistency(const ConsistencyMap& cmap, double epsilon) {
    Plane mask(cmap.values.height(), cmap.values.width());
    auto in = cmap.values.values();
    auto out = mask.values();
    for (std::size_t i = 0; i < in.size(); ++i) {
        out[i] = in[i] <= epsilon ? 1.0 : 0.0;
    }
    return {std::move(mask)};
}

/// Disc morphology on a binary mask. Conservative mode grows the zero set
/// (erosion of the ones), literal mode grows the ones (dilation).
inline Plane morph_disc(const Plane& mask, int radius, MaskMode mode) {
    if (radius <= 0) {
        return mask;
    }
    const int h = mask.height();
    const int w = mask.width();
    // A disc is a stack of horizontal runs; run half-widths per row offset.
    std::vector<int> half(static_cast<std::size_t>(2 * radius + 1));
    for (int dy = -radius; dy <= radius; ++dy) {
        half[static_cast<std::size_t>(dy + radius)] =
            static_cast<int>(std::floor(std::sqrt(static_cast<double>(radius * radius - dy * dy))));
    }
    const double grow = mode == MaskMode::conservative ? 0.0 : 1.0;
    // Distance along the row to the nearest `grow` pixel, left and right.
    Plane left(h, w), right(h, w);
    const double far = 2.0 * (w + radius + 1);
    for (int y = 0; y < h; ++y) {
        double d = far;
        for (int x = 0; x < w; ++x) {
            d = mask(y, x) == grow ? 0.0 : d + 1.0;
            left(y, x) = d;
        }
        d = far;
        for (int x = w - 1; x >= 0; --x) {
            d = mask(y, x) == grow ? 0.0 : d + 1.0;
            right(y, x) = d;
        }
    }
    Plane out = mask;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (mask(y, x) == grow) {
                continue;
            }
            for (int dy = -radius; dy <= radius; ++dy) {
                const int yy = y + dy;
                if (yy < 0 || yy >= h) {
                    continue;
                }
                const int hw = half[static_cast<std::size_t>(dy + radius)];
                if (left(yy, x) <= hw || right(yy, x) <= hw) {
                    out(y, x) = grow;
                    break;
                }
            }
        }
    }
    return out;
}

/// Morphology with a disc of radius r, then Gaussian smoothing (std rho, mirror boundary).
inline SoftMask refine_mask(const SoftMask& mask, int radius, double rho, MaskMode mode) {
    if (radius < 0 || !(rho >= 0.0)) {
        throw ConfigError("refine_mask: radius and rho must be non-negative");
    }
    Plane out = gaussian_blur(morph_disc(mask.values, radius, mode), rho);
    for (auto& v : out.values()) {
        v = std::clamp(v, 0.0, 1.0);
    }
    return {std::move(out)};
}

/// out = mask * warped + (1 - mask) * reference, per channel.
inline Frame blend(const Frame& warped, const Frame& reference, const SoftMask& mask) {
    if (!warped.same_shape(reference)) {
        throw DimensionError("blend: warped and reference frames differ in shape");
    }
    if (mask.values.height() != reference.height() || mask.values.width() != reference.width()) {
        throw DimensionError("blend: mask and frame dimensions differ");
    }
    Frame out = reference;
    const auto m = mask.values.values();
    for (int c = 0; c < out.channels(); ++c) {
        const auto wv = warped.channel(c).values();
        const auto rv = reference.channel(c).values();
        auto ov = out.channel(c).values();
        for (std::size_t i = 0; i < ov.size(); ++i) {
            ov[i] = m[i] * wv[i] + (1.0 - m[i]) * rv[i];
        }
    }
    return out;
}

struct RegisteredFrame {
    Frame frame;
    SoftMask mask;
    ConsistencyMap consistency;
};

/// Registers one neighbor onto the reference.
inline RegisteredFrame register_frame(const Frame& reference, const Frame& other, const FbaConfig& cfg,
                                      const FlowParams& params) {
    const FlowPair flows = estimate_flow_pair(reference, other, cfg, params);
    ConsistencyMap cmap = roundtrip_map(flows.fwd, flows.bwd);
    SoftMask consistent = binary_consistency(cmap, cfg.consistency_tolerance);
    WarpResult warped = warp_bicubic(other, flows.fwd);
    auto mv = consistent.values.values();
    const auto oob = warped.oob.values.values();
    for (std::size_t i = 0; i < mv.size(); ++i) {
        if (oob[i] != 0.0) {
            mv[i] = 0.0;
        }
    }
    SoftMask mask = refine_mask(consistent, cfg.mask_radius, cfg.mask_sigma, cfg.mask_mode);
    Frame out = blend(warped.warped, reference, mask);
    return {std::move(out), std::move(mask), std::move(cmap)};
}

inline RegisteredStack register_window(const std::vector<Frame>& frames, std::size_t ref_index, const FbaConfig& cfg,
                                       const FlowParams& params) {
    if (frames.empty()) {
        throw ConfigError("register_window: no frames");
    }
    if (ref_index >= frames.size()) {
        throw ConfigError("register_window: reference index out of range");
    }
    const Frame& reference = frames[ref_index];
    for (const auto& f : frames) {
        if (!f.same_shape(reference)) {
            throw DimensionError("register_window: frames differ in shape");
        }
    }
    RegisteredStack stack;
    stack.ref_index = ref_index;
    stack.frames.resize(frames.size());
    stack.masks.resize(frames.size());
    stack.consistency.resize(frames.size());
    parallel_for(frames.size(), cfg.threads, [&](std::size_t i, std::size_t) {
        if (i == ref_index) {
            stack.frames[i] = reference;
            stack.masks[i] = SoftMask{Plane(reference.height(), reference.width(), 1.0)};
            return;
        }
        RegisteredFrame r = register_frame(reference, frames[i], cfg, params);
        stack.frames[i] = std::move(r.frame);
        stack.masks[i] = std::move(r.mask);
        stack.consistency[i] = std::move(r.consistency);
    });
    return stack;
}

} // namespace vfba
