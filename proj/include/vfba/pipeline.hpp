#pragma once

// Sequence-level restoration: sliding temporal window, repeated passes and
// optional unsharp masking.

#include <algorithm>
#include <functional>
#include <vector>

#include "vfba/core.hpp"
#include "vfba/fba.hpp"
#include "vfba/flow.hpp"
#include "vfba/register.hpp"

namespace vfba {

/// Mean squared change of every frame against the previous pass.
struct IterationReport {
    std::vector<std::vector<double>> frame_change; ///< [pass][frame]
    std::vector<double> mean_change;               ///< [pass]
};

/// Inclusive window [first, last] of frames used to restore frame `index`,
/// truncated at the sequence ends.
struct TemporalWindow {
    std::size_t first = 0;
    std::size_t last = 0;
    std::size_t ref_index = 0; ///< position of the restored frame inside the window
};

inline TemporalWindow temporal_window(std::size_t length, std::size_t index, int half_window) {
    if (length == 0) {
        throw ConfigError("temporal_window: empty sequence");
    }
    if (index >= length) {
        throw ConfigError("temporal_window: index out of range");
    }
    const auto m = static_cast<std::size_t>(half_window);
    TemporalWindow w;
    w.first = index >= m ? index - m : 0;
    w.last = std::min(length - 1, index + m);
    w.ref_index = index - w.first;
    return w;
}

/// Called once per restored frame with the registered stack and fusion
/// diagnostics; used for debug dumps.
using FrameObserver =
    std::function<void(std::size_t index, const RegisteredStack& stack, const FusionDiagnostics& fusion)>;

inline Frame deblur_frame(const std::vector<Frame>& sequence, std::size_t index, const FbaConfig& cfg,
                          const FlowParams& params, const FrameObserver& observer = {}) {
    cfg.validate();
    const TemporalWindow win = temporal_window(sequence.size(), index, cfg.half_window);
    const std::vector<Frame> window(sequence.begin() + static_cast<std::ptrdiff_t>(win.first),
                                    sequence.begin() + static_cast<std::ptrdiff_t>(win.last) + 1);
    const RegisteredStack stack = register_window(window, win.ref_index, cfg, params);
    if (observer) {
        FusionDiagnostics diag;
        Frame out = fuse_stack(stack, cfg, &diag);
        observer(index, stack, diag);
        return out;
    }
    return fuse_stack(stack, cfg);
}

inline double mean_squared_difference(const Frame& a, const Frame& b) {
    if (!a.same_shape(b)) {
        throw DimensionError("mean_squared_difference: shape mismatch");
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
    return acc / static_cast<double>(n);
}

/// out = frame + amount * (frame - G_radius * frame), clamped to [0,1] when `clamp` is set.
inline Frame unsharp_mask(const Frame& frame, double amount, double radius, bool clamp = true) {
    if (amount < 0.0 || !(radius > 0.0)) {
        throw ConfigError("unsharp_mask: amount must be >= 0 and radius > 0");
    }
    const Frame blurred = gaussian_blur(frame, radius);
    Frame out = frame;
    for (int c = 0; c < out.channels(); ++c) {
        auto o = out.channel(c).values();
        const auto bl = blurred.channel(c).values();
        for (std::size_t i = 0; i < o.size(); ++i) {
            double v = o[i] + amount * (o[i] - bl[i]);
            o[i] = clamp ? std::clamp(v, 0.0, 1.0) : v;
        }
    }
    return out;
}

struct SequenceResult {
    std::vector<Frame> frames;
    IterationReport report;
};

/// Runs cfg.iterations full passes; pass k reads only the output of pass k-1.
/// Frames of a pass are restored independently (in parallel when cfg.threads > 1).
inline SequenceResult deblur_sequence(const std::vector<Frame>& sequence, const FbaConfig& cfg,
                                      const FlowParams& params, const FrameObserver& observer = {}) {
    cfg.validate();
    params.validate();
    if (sequence.empty()) {
        throw ConfigError("deblur_sequence: empty sequence");
    }
    for (const auto& f : sequence) {
        if (!f.same_shape(sequence.front())) {
            throw DimensionError("deblur_sequence: frames differ in shape");
        }
    }

    SequenceResult result{sequence, {}};
    // Frame-level parallelism replaces the inner one.
    FbaConfig inner = cfg;
    if (cfg.threads > 1 && sequence.size() > 1) {
        inner.threads = 1;
    }
    for (int pass = 0; pass < cfg.iterations; ++pass) {
        const std::vector<Frame>& current = result.frames;
        std::vector<Frame> next(current.size());
        const bool last_pass = pass + 1 == cfg.iterations;
        parallel_for(current.size(), cfg.threads / std::max(1, inner.threads), [&](std::size_t i, std::size_t) {
            next[i] = deblur_frame(current, i, inner, params, last_pass ? observer : FrameObserver{});
        });
        std::vector<double> change(current.size());
        double mean = 0.0;
        for (std::size_t i = 0; i < current.size(); ++i) {
            change[i] = mean_squared_difference(next[i], current[i]);
            mean += change[i];
        }
        mean /= static_cast<double>(current.size());
        result.report.frame_change.push_back(std::move(change));
        result.report.mean_change.push_back(mean);
        result.frames = std::move(next);
        if (cfg.early_stop > 0.0 && mean < cfg.early_stop) {
            break;
        }
    }
    if (cfg.sharpen_amount > 0.0) {
        for (auto& f : result.frames) {
            f = unsharp_mask(f, cfg.sharpen_amount, cfg.sharpen_radius);
        }
    }
    return result;
}

} // namespace vfba
