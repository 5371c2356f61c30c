#pragma once

// Coarse-to-fine TV-L1 optical flow (Zach-Pock-Bischof duality scheme), plus
// the reduced-resolution forward/backward pair used for registration.

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "vfba/core.hpp"
#include "vfba/warp.hpp"

namespace vfba {

struct FlowParams {
    double data_weight = 0.15;    ///< lambda, relative to intensities normalized to [0,255]
    double tightness = 0.3;       ///< theta, coupling between primal and auxiliary flow
    double time_step = 0.25;      ///< dual step, must be <= 0.25
    int warps = 5;
    double pyramid_factor = 0.5;
    int min_level_size = 16;
    int max_inner_iters = 300;
    double stop_tol = 0.01;
    bool median_filter = true;    ///< 3x3 median on the flow after each warp

    void validate() const {
        auto fail = [](const std::string& msg) { throw ConfigError("invalid flow parameters: " + msg); };
        if (!(data_weight > 0.0)) fail("data weight must be > 0");
        if (!(tightness > 0.0)) fail("tightness must be > 0");
        if (!(time_step > 0.0 && time_step <= 0.25)) fail("time step must be in (0, 0.25]");
        if (warps < 1) fail("warps must be >= 1");
        if (!(pyramid_factor > 0.0 && pyramid_factor < 1.0)) fail("pyramid factor must be in (0, 1)");
        if (min_level_size < 1) fail("min level size must be >= 1");
        if (max_inner_iters < 1) fail("max inner iterations must be >= 1");
        if (!(stop_tol >= 0.0)) fail("stop tolerance must be >= 0");
    }

    friend bool operator==(const FlowParams&, const FlowParams&) = default;
};

/// Energies recorded by the solver: one vector per pyramid level (coarsest
/// first) holding the energy of the initial flow followed by the energy after
/// each warp.
struct FlowTrace {
    std::vector<std::vector<double>> level_energies;
};

/// Area-average resampling to an arbitrary smaller or equal size.
inline Plane area_resample(const Plane& in, int new_height, int new_width) {
    if (new_height < 1 || new_width < 1 || new_height > in.height() || new_width > in.width()) {
        throw ConfigError("area_resample: target size must be positive and not larger than the source");
    }
    if (new_height == in.height() && new_width == in.width()) {
        return in;
    }
    struct Tap {
        int index;
        double weight;
    };
    auto axis_taps = [](int src, int dst) {
        std::vector<std::vector<Tap>> taps(static_cast<std::size_t>(dst));
        const double scale = static_cast<double>(src) / dst;
        for (int o = 0; o < dst; ++o) {
            const double lo = o * scale;
            const double hi = (o + 1) * scale;
            for (int i = static_cast<int>(std::floor(lo)); i < src && i < hi; ++i) {
                const double overlap = std::min(hi, i + 1.0) - std::max(lo, static_cast<double>(i));
                if (overlap > 0.0) {
                    taps[static_cast<std::size_t>(o)].push_back({i, overlap / scale});
                }
            }
        }
        return taps;
    };
    const auto ty = axis_taps(in.height(), new_height);
    const auto tx = axis_taps(in.width(), new_width);
    Plane tmp(in.height(), new_width);
    for (int y = 0; y < in.height(); ++y) {
        const auto src = in.row(y);
        for (int x = 0; x < new_width; ++x) {
            double acc = 0.0;
            for (const auto& t : tx[static_cast<std::size_t>(x)]) {
                acc += t.weight * src[static_cast<std::size_t>(t.index)];
            }
            tmp(y, x) = acc;
        }
    }
    Plane out(new_height, new_width);
    for (int y = 0; y < new_height; ++y) {
        auto dst = out.row(y);
        for (const auto& t : ty[static_cast<std::size_t>(y)]) {
            const auto src = tmp.row(t.index);
            for (int x = 0; x < new_width; ++x) {
                dst[static_cast<std::size_t>(x)] += t.weight * src[static_cast<std::size_t>(x)];
            }
        }
    }
    return out;
}

namespace detail {

// Pixel-center aligned bilinear resize with linear extrapolation at the
// borders, so affine fields are reproduced exactly.
inline Plane bilinear_resize(const Plane& in, int new_height, int new_width) {
    const double sy = static_cast<double>(in.height()) / new_height;
    const double sx = static_cast<double>(in.width()) / new_width;
    auto axis = [](int o, double s, int n, int& i0, double& t) {
        const double pos = (o + 0.5) * s - 0.5;
        if (n == 1) {
            i0 = 0;
            t = 0.0;
            return;
        }
        i0 = std::clamp(static_cast<int>(std::floor(pos)), 0, n - 2);
        t = pos - i0;
    };
    Plane out(new_height, new_width);
    std::vector<int> xi(static_cast<std::size_t>(new_width));
    std::vector<double> xt(static_cast<std::size_t>(new_width));
    for (int x = 0; x < new_width; ++x) {
        axis(x, sx, in.width(), xi[static_cast<std::size_t>(x)], xt[static_cast<std::size_t>(x)]);
    }
    const int x_step = in.width() > 1 ? 1 : 0;
    const int y_step = in.height() > 1 ? 1 : 0;
    for (int y = 0; y < new_height; ++y) {
        int y0 = 0;
        double ty = 0.0;
        axis(y, sy, in.height(), y0, ty);
        const auto r0 = in.row(y0);
        const auto r1 = in.row(y0 + y_step);
        auto dst = out.row(y);
        for (int x = 0; x < new_width; ++x) {
            const auto x0 = static_cast<std::size_t>(xi[static_cast<std::size_t>(x)]);
            const auto x1 = x0 + static_cast<std::size_t>(x_step);
            const double tx = xt[static_cast<std::size_t>(x)];
            const double top = (1.0 - tx) * r0[x0] + tx * r0[x1];
            const double bottom = (1.0 - tx) * r1[x0] + tx * r1[x1];
            dst[static_cast<std::size_t>(x)] = (1.0 - ty) * top + ty * bottom;
        }
    }
    return out;
}

} // namespace detail

/// Bilinear upsampling of a flow field; vectors are rescaled per axis by new/old.
inline FlowField upsample_flow(const FlowField& f, int new_height, int new_width) {
    if (new_height < f.height() || new_width < f.width()) {
        throw ConfigError("upsample_flow: target " + std::to_string(new_height) + "x" + std::to_string(new_width) +
                          " is smaller than the field " + std::to_string(f.height()) + "x" +
                          std::to_string(f.width()));
    }
    if (new_height == f.height() && new_width == f.width()) {
        return f;
    }
    const double sy = static_cast<double>(new_height) / f.height();
    const double sx = static_cast<double>(new_width) / f.width();
    FlowField out(detail::bilinear_resize(f.dx, new_height, new_width),
                  detail::bilinear_resize(f.dy, new_height, new_width));
    for (auto& v : out.dx.values()) v *= sx;
    for (auto& v : out.dy.values()) v *= sy;
    return out;
}

namespace detail {

inline void centered_gradient(const Plane& in, Plane& gx, Plane& gy) {
    const int h = in.height();
    const int w = in.width();
    for (int y = 0; y < h; ++y) {
        const int ym = std::max(y - 1, 0);
        const int yp = std::min(y + 1, h - 1);
        for (int x = 0; x < w; ++x) {
            const int xm = std::max(x - 1, 0);
            const int xp = std::min(x + 1, w - 1);
            gx(y, x) = 0.5 * (in(y, xp) - in(y, xm));
            gy(y, x) = 0.5 * (in(yp, x) - in(ym, x));
        }
    }
}

// Forward differences, zero on the last column/row.
inline void forward_gradient(const Plane& in, Plane& gx, Plane& gy) {
    const int h = in.height();
    const int w = in.width();
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double v = in(y, x);
            gx(y, x) = x + 1 < w ? in(y, x + 1) - v : 0.0;
            gy(y, x) = y + 1 < h ? in(y + 1, x) - v : 0.0;
        }
    }
}

// Negative adjoint of forward_gradient.
inline void divergence(const Plane& px, const Plane& py, Plane& div) {
    const int h = px.height();
    const int w = px.width();
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double ax = (x + 1 < w ? px(y, x) : 0.0) - (x > 0 ? px(y, x - 1) : 0.0);
            const double ay = (y + 1 < h ? py(y, x) : 0.0) - (y > 0 ? py(y - 1, x) : 0.0);
            div(y, x) = ax + ay;
        }
    }
}

inline Plane median3x3(const Plane& in) {
    const int h = in.height();
    const int w = in.width();
    Plane out(h, w);
    std::array<double, 9> win{};
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            std::size_t n = 0;
            for (int dy = -1; dy <= 1; ++dy) {
                for (int dx = -1; dx <= 1; ++dx) {
                    win[n++] = in(reflect_index(y + dy, h), reflect_index(x + dx, w));
                }
            }
            std::nth_element(win.begin(), win.begin() + 4, win.end());
            out(y, x) = win[4];
        }
    }
    return out;
}

inline double tvl1_energy(const Plane& i0, const Plane& i1, const FlowField& u, double lambda) {
    const int h = i0.height();
    const int w = i0.width();
    double tv = 0.0;
    double data = 0.0;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double u1x = x + 1 < w ? u.dx(y, x + 1) - u.dx(y, x) : 0.0;
            const double u1y = y + 1 < h ? u.dx(y + 1, x) - u.dx(y, x) : 0.0;
            const double u2x = x + 1 < w ? u.dy(y, x + 1) - u.dy(y, x) : 0.0;
            const double u2y = y + 1 < h ? u.dy(y + 1, x) - u.dy(y, x) : 0.0;
            tv += std::hypot(u1x, u1y) + std::hypot(u2x, u2y);
            data += std::abs(sample_bicubic(i1, y + u.dy(y, x), x + u.dx(y, x)) - i0(y, x));
        }
    }
    return tv + lambda * data;
}

// One pyramid level: refines `u` in place.
inline void tvl1_level(const Plane& i0, const Plane& i1, FlowField& u, const FlowParams& params,
                       std::vector<double>* energies) {
    const int h = i0.height();
    const int w = i0.width();
    const double lt = params.data_weight * params.tightness;
    const double taut = params.time_step / params.tightness;
    constexpr double kGradIsZero = 1e-10;

    Plane i1x(h, w), i1y(h, w);
    centered_gradient(i1, i1x, i1y);

    Plane p11(h, w), p12(h, w), p21(h, w), p22(h, w);
    Plane v1(h, w), v2(h, w), div1(h, w), div2(h, w);
    Plane u1x(h, w), u1y(h, w), u2x(h, w), u2y(h, w);
    Plane rho_c(h, w), grad(h, w);

    double energy = tvl1_energy(i0, i1, u, params.data_weight);
    if (energies) {
        energies->push_back(energy);
    }

    for (int warp = 0; warp < params.warps; ++warp) {
        const FlowField before = u;
        const Plane i1w = warp_plane(i1, u);
        const Plane i1wx = warp_plane(i1x, u);
        const Plane i1wy = warp_plane(i1y, u);
        for (std::size_t k = 0; k < i0.size(); ++k) {
            const double gx = i1wx.values()[k];
            const double gy = i1wy.values()[k];
            grad.values()[k] = gx * gx + gy * gy;
            rho_c.values()[k] = i1w.values()[k] - gx * u.dx.values()[k] - gy * u.dy.values()[k] - i0.values()[k];
        }

        double error = std::numeric_limits<double>::infinity();
        const double tol2 = params.stop_tol * params.stop_tol;
        for (int n = 0; n < params.max_inner_iters && error > tol2; ++n) {
            // Thresholding step on the auxiliary flow.
            for (std::size_t k = 0; k < i0.size(); ++k) {
                const double gx = i1wx.values()[k];
                const double gy = i1wy.values()[k];
                const double g2 = grad.values()[k];
                const double rho = rho_c.values()[k] + gx * u.dx.values()[k] + gy * u.dy.values()[k];
                double d1 = 0.0;
                double d2 = 0.0;
                if (rho < -lt * g2) {
                    d1 = lt * gx;
                    d2 = lt * gy;
                } else if (rho > lt * g2) {
                    d1 = -lt * gx;
                    d2 = -lt * gy;
                } else if (g2 >= kGradIsZero) {
                    const double fi = -rho / g2;
                    d1 = fi * gx;
                    d2 = fi * gy;
                }
                v1.values()[k] = u.dx.values()[k] + d1;
                v2.values()[k] = u.dy.values()[k] + d2;
            }

            divergence(p11, p12, div1);
            divergence(p21, p22, div2);

            error = 0.0;
            for (std::size_t k = 0; k < i0.size(); ++k) {
                const double a = v1.values()[k] + params.tightness * div1.values()[k];
                const double b = v2.values()[k] + params.tightness * div2.values()[k];
                const double da = a - u.dx.values()[k];
                const double db = b - u.dy.values()[k];
                error += da * da + db * db;
                u.dx.values()[k] = a;
                u.dy.values()[k] = b;
            }
            error /= static_cast<double>(i0.size());

            forward_gradient(u.dx, u1x, u1y);
            forward_gradient(u.dy, u2x, u2y);
            for (std::size_t k = 0; k < i0.size(); ++k) {
                const double ng1 = 1.0 + taut * std::hypot(u1x.values()[k], u1y.values()[k]);
                const double ng2 = 1.0 + taut * std::hypot(u2x.values()[k], u2y.values()[k]);
                p11.values()[k] = (p11.values()[k] + taut * u1x.values()[k]) / ng1;
                p12.values()[k] = (p12.values()[k] + taut * u1y.values()[k]) / ng1;
                p21.values()[k] = (p21.values()[k] + taut * u2x.values()[k]) / ng2;
                p22.values()[k] = (p22.values()[k] + taut * u2y.values()[k]) / ng2;
            }
        }

        // The inner solver works on a linearized data term, so the true energy can
        // rise; keep the candidate only when it does not.
        double candidate = 0.0;
        if (params.median_filter) {
            FlowField raw = u;
            u.dx = median3x3(u.dx);
            u.dy = median3x3(u.dy);
            candidate = tvl1_energy(i0, i1, u, params.data_weight);
            if (candidate > energy) {
                const double raw_energy = tvl1_energy(i0, i1, raw, params.data_weight);
                if (raw_energy < candidate) {
                    u = std::move(raw);
                    candidate = raw_energy;
                }
            }
        } else {
            candidate = tvl1_energy(i0, i1, u, params.data_weight);
        }
        if (candidate > energy) {
            u = before;
        } else {
            energy = candidate;
        }
        if (energies) {
            energies->push_back(energy);
        }
    }
}

inline Plane zoom_out(const Plane& in, int new_height, int new_width, double factor) {
    const double sigma = 0.6 * std::sqrt(1.0 / (factor * factor) - 1.0);
    const Plane smooth = gaussian_blur(in, sigma);
    const double sy = static_cast<double>(in.height()) / new_height;
    const double sx = static_cast<double>(in.width()) / new_width;
    Plane out(new_height, new_width);
    for (int y = 0; y < new_height; ++y) {
        for (int x = 0; x < new_width; ++x) {
            out(y, x) = sample_bicubic(smooth, y * sy, x * sx);
        }
    }
    return out;
}

} // namespace detail

/// TV-L1 flow f on src's grid with src(x) ~ dst(x + f(x)).
inline FlowField estimate_flow_tvl1(const Plane& src, const Plane& dst, const FlowParams& params,
                                    FlowTrace* trace = nullptr) {
    params.validate();
    require_same_size(src, dst, "estimate_flow_tvl1");
    const int h = src.height();
    const int w = src.width();

    // Joint normalization to [0,255]; a constant pair has nothing to match.
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const Plane* p : {&src, &dst}) {
        for (double v : p->values()) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    }
    if (!(hi > lo)) {
        return FlowField(h, w);
    }
    auto normalize = [&](const Plane& p) {
        Plane out = p;
        const double scale = 255.0 / (hi - lo);
        for (auto& v : out.values()) v = (v - lo) * scale;
        return gaussian_blur(out, 0.8);
    };

    std::vector<Plane> i0s{normalize(src)};
    std::vector<Plane> i1s{normalize(dst)};
    for (;;) {
        const Plane& last = i0s.back();
        const int nh = static_cast<int>(last.height() * params.pyramid_factor + 0.5);
        const int nw = static_cast<int>(last.width() * params.pyramid_factor + 0.5);
        if (std::min(nh, nw) < params.min_level_size) {
            break;
        }
        i0s.push_back(detail::zoom_out(last, nh, nw, params.pyramid_factor));
        i1s.push_back(detail::zoom_out(i1s.back(), nh, nw, params.pyramid_factor));
    }

    FlowField u(i0s.back().height(), i0s.back().width());
    for (std::size_t level = i0s.size(); level-- > 0;) {
        const Plane& i0 = i0s[level];
        if (u.height() != i0.height() || u.width() != i0.width()) {
            u = upsample_flow(u, i0.height(), i0.width());
        }
        std::vector<double>* energies = nullptr;
        if (trace) {
            trace->level_energies.emplace_back();
            energies = &trace->level_energies.back();
        }
        detail::tvl1_level(i0, i1s[level], u, params, energies);
    }
    return u;
}

struct FlowPair {
    FlowField fwd; ///< on the reference grid, reference -> other
    FlowField bwd; ///< on the other grid, other -> reference
};

/// Downscaled grayscale size used for motion estimation.
[[nodiscard]] inline std::pair<int, int> flow_resolution(int height, int width, double scale) {
    if (scale >= 1.0) {
        return {height, width};
    }
    return {std::max(1, static_cast<int>(std::lround(height * scale))),
            std::max(1, static_cast<int>(std::lround(width * scale)))};
}

/// Flow on a grayscale image computed at reduced resolution and upsampled back.
inline FlowField estimate_flow_scaled(const Plane& src, const Plane& dst, double scale, const FlowParams& params) {
    require_same_size(src, dst, "estimate_flow_scaled");
    const auto [sh, sw] = flow_resolution(src.height(), src.width(), scale);
    if (sh == src.height() && sw == src.width()) {
        return estimate_flow_tvl1(src, dst, params);
    }
    const FlowField coarse = estimate_flow_tvl1(area_resample(src, sh, sw), area_resample(dst, sh, sw), params);
    return upsample_flow(coarse, src.height(), src.width());
}

inline FlowPair estimate_flow_pair(const Frame& reference, const Frame& other, const FbaConfig& cfg,
                                   const FlowParams& params) {
    require_same_size(reference, other, "estimate_flow_pair");
    const Plane ref = to_gray(reference);
    const Plane oth = to_gray(other);
    return {estimate_flow_scaled(ref, oth, cfg.flow_scale, params),
            estimate_flow_scaled(oth, ref, cfg.flow_scale, params)};
}

} // namespace vfba
