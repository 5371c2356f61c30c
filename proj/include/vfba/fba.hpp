#pragma once

// Local Fourier burst accumulation. Registered frames are cut into
// overlapping b x b blocks; each block position is fused in the Fourier
// domain with per-frequency weights that favor the frames whose (smoothed)
// spectral magnitude is largest, and the fused blocks are overlap-averaged.

#include <algorithm>
#include <cmath>
#include <complex>
#include <memory>
#include <span>
#include <vector>

#include "vfba/core.hpp"
#include "vfba/fft.hpp"
#include "vfba/register.hpp"

namespace vfba {

/// Full b x b DFT of one block, per channel, natural DFT ordering.
struct ComplexSpectrum {
    int size = 0;
    std::vector<std::vector<std::complex<double>>> channels;

    [[nodiscard]] const std::complex<double>& at(int c, int row, int col) const {
        return channels[static_cast<std::size_t>(c)][static_cast<std::size_t>(row) * size + col];
    }
};

namespace detail {

// Mirrors a half-plane (n x (n/2+1)) of a Hermitian-symmetric quantity into the full n x n plane.
template <typename T, typename Out>
void expand_half(std::span<const T> half, int n, Out&& store) {
    const int hw = n / 2 + 1;
    for (int r = 0; r < n; ++r) {
        for (int c = 0; c < n; ++c) {
            if (c < hw) {
                store(r, c, half[static_cast<std::size_t>(r) * hw + c]);
            } else {
                const int rr = (n - r) % n;
                store(r, c, std::conj(std::complex<double>(half[static_cast<std::size_t>(rr) * hw + (n - c)])));
            }
        }
    }
}

} // namespace detail

/// Unnormalized DFT of a square block.
inline ComplexSpectrum block_spectrum(const Frame& block) {
    if (block.height() != block.width()) {
        throw DimensionError("block_spectrum: block must be square");
    }
    const int n = block.height();
    Fft2d fft(n);
    ComplexSpectrum out;
    out.size = n;
    std::vector<std::complex<double>> half(fft.spectrum_size());
    for (int c = 0; c < block.channels(); ++c) {
        const auto v = block.channel(c).values();
        std::copy(v.begin(), v.end(), fft.real().begin());
        fft.forward(half);
        auto& full = out.channels.emplace_back(static_cast<std::size_t>(n) * n);
        detail::expand_half<std::complex<double>>(half, n, [&](int r, int col, std::complex<double> z) {
            full[static_cast<std::size_t>(r) * n + col] = z;
        });
    }
    return out;
}

/// Per-frequency modulus averaged over channels.
inline Plane block_magnitude(const ComplexSpectrum& spec) {
    if (spec.channels.empty()) {
        throw ConfigError("block_magnitude: empty spectrum");
    }
    Plane mag(spec.size, spec.size);
    auto out = mag.values();
    for (const auto& ch : spec.channels) {
        for (std::size_t i = 0; i < out.size(); ++i) {
            out[i] += std::abs(ch[i]);
        }
    }
    const double inv = 1.0 / static_cast<double>(spec.channels.size());
    for (auto& v : out) v *= inv;
    return mag;
}

/// Periodic Gaussian smoothing of a DFT-ordered plane; sigma == 0 is the identity.
inline Plane smooth_magnitude(const Plane& mag, double sigma) {
    if (sigma < 0.0) {
        throw ConfigError("smooth_magnitude: sigma must be non-negative");
    }
    return gaussian_blur_periodic(mag, sigma);
}

/// Normalized Fourier weights from smoothed magnitudes:
/// w_i = m_i^p / sum_j m_j^p, evaluated as (m_i / max_j m_j)^p to stay in range.
/// Frequencies where every magnitude is zero get uniform weights.
inline void compute_weights(std::span<const std::span<const double>> magnitudes, double p,
                            std::span<const std::span<double>> weights) {
    const std::size_t frames = magnitudes.size();
    if (frames == 0) {
        return;
    }
    const std::size_t n = magnitudes[0].size();
    const double uniform = 1.0 / static_cast<double>(frames);
    for (std::size_t k = 0; k < n; ++k) {
        double peak = 0.0;
        for (std::size_t i = 0; i < frames; ++i) {
            peak = std::max(peak, magnitudes[i][k]);
        }
        if (!(peak > 0.0)) {
            for (std::size_t i = 0; i < frames; ++i) weights[i][k] = uniform;
            continue;
        }
        double sum = 0.0;
        for (std::size_t i = 0; i < frames; ++i) {
            const double w = std::pow(magnitudes[i][k] / peak, p);
            weights[i][k] = w;
            sum += w;
        }
        const double inv = 1.0 / sum;
        for (std::size_t i = 0; i < frames; ++i) weights[i][k] *= inv;
    }
}

inline std::vector<Plane> compute_weights(const std::vector<Plane>& magnitudes, double p) {
    std::vector<Plane> weights;
    std::vector<std::span<const double>> in;
    std::vector<std::span<double>> out;
    weights.reserve(magnitudes.size());
    for (const auto& m : magnitudes) {
        if (!m.same_shape(magnitudes.front())) {
            throw DimensionError("compute_weights: magnitude planes differ in size");
        }
        weights.emplace_back(m.height(), m.width());
    }
    for (std::size_t i = 0; i < magnitudes.size(); ++i) {
        in.push_back(magnitudes[i].values());
        out.push_back(weights[i].values());
    }
    compute_weights(in, p, out);
    return weights;
}

/// Reusable workspace that fuses one block position across a set of frames.
/// Not thread-safe; use one per worker.
class BlockFuser {
public:
    BlockFuser(int block_size, int channels)
        : b_(block_size), channels_(channels), fft_(block_size), hw_(block_size / 2 + 1),
          full_(block_size, block_size) {
        result_.assign(static_cast<std::size_t>(channels), std::vector<double>(fft_.real_size()));
    }

    [[nodiscard]] int block_size() const noexcept { return b_; }

    /// Fuses the b x b blocks whose top-left corner is (top, left) in each of
    /// `frames`. If `weight_energy` is given, it receives per frame the sum of
    /// squared weights over the full b x b frequency plane.
    void fuse(std::span<const Frame> frames, int top, int left, double p, double sigma,
              std::vector<double>* weight_energy = nullptr) {
        const std::size_t n = frames.size();
        if (n == 0) {
            throw ConfigError("fuse: no blocks");
        }
        ensure_capacity(n);
        const std::size_t hs = fft_.spectrum_size();

        for (std::size_t i = 0; i < n; ++i) {
            const Frame& f = frames[i];
            if (f.channels() != channels_) {
                throw DimensionError("fuse: channel count mismatch");
            }
            if (top < 0 || left < 0 || top + b_ > f.height() || left + b_ > f.width()) {
                throw DimensionError("fuse: block outside frame");
            }
            auto& mag = mags_[i];
            std::fill(mag.begin(), mag.end(), 0.0);
            for (int c = 0; c < channels_; ++c) {
                auto in = fft_.real();
                const Plane& plane = f.channel(c);
                for (int y = 0; y < b_; ++y) {
                    const auto row = plane.row(top + y);
                    std::copy_n(row.begin() + left, b_, in.begin() + static_cast<std::ptrdiff_t>(y) * b_);
                }
                auto& spec = spectra_[i * static_cast<std::size_t>(channels_) + static_cast<std::size_t>(c)];
                fft_.forward(spec);
                for (std::size_t k = 0; k < hs; ++k) {
                    mag[k] += std::abs(spec[k]);
                }
            }
            const double inv = 1.0 / channels_;
            for (auto& v : mag) v *= inv;
            if (sigma > 0.0) {
                smooth_half(mag, sigma);
            }
        }

        std::vector<std::span<const double>> min(n);
        std::vector<std::span<double>> wout(n);
        for (std::size_t i = 0; i < n; ++i) {
            min[i] = mags_[i];
            wout[i] = weights_[i];
        }
        compute_weights(min, p, wout);

        if (weight_energy) {
            weight_energy->assign(n, 0.0);
            for (std::size_t i = 0; i < n; ++i) {
                double e = 0.0;
                for (int r = 0; r < b_; ++r) {
                    for (int c = 0; c < hw_; ++c) {
                        const double w = weights_[i][static_cast<std::size_t>(r) * hw_ + c];
                        // Columns other than DC and Nyquist stand for two coefficients.
                        const bool single = c == 0 || (b_ % 2 == 0 && c == b_ / 2);
                        e += (single ? 1.0 : 2.0) * w * w;
                    }
                }
                (*weight_energy)[i] = e;
            }
        }

        const double norm = 1.0 / (static_cast<double>(b_) * b_);
        for (int c = 0; c < channels_; ++c) {
            std::fill(accum_.begin(), accum_.end(), std::complex<double>{});
            for (std::size_t i = 0; i < n; ++i) {
                const auto& spec = spectra_[i * static_cast<std::size_t>(channels_) + static_cast<std::size_t>(c)];
                const auto& w = weights_[i];
                for (std::size_t k = 0; k < hs; ++k) {
                    accum_[k] += w[k] * spec[k];
                }
            }
            fft_.inverse(accum_);
            const auto out = fft_.real();
            auto& res = result_[static_cast<std::size_t>(c)];
            for (std::size_t k = 0; k < res.size(); ++k) {
                res[k] = out[k] * norm;
            }
        }
    }

    /// Fused block of the last fuse() call, channel c, row-major b x b.
    [[nodiscard]] std::span<const double> result(int c) const { return result_.at(static_cast<std::size_t>(c)); }

    /// Normalized weights of frame i from the last fuse() call, half plane b x (b/2+1).
    [[nodiscard]] std::span<const double> weights(std::size_t i) const { return weights_.at(i); }

private:
    void ensure_capacity(std::size_t n) {
        const std::size_t hs = fft_.spectrum_size();
        if (mags_.size() < n) {
            mags_.resize(n, std::vector<double>(hs));
            weights_.resize(n, std::vector<double>(hs));
            spectra_.resize(n * static_cast<std::size_t>(channels_), std::vector<std::complex<double>>(hs));
        }
        accum_.resize(hs);
    }

    // Periodic smoothing of a Hermitian-symmetric magnitude held as a half plane.
    void smooth_half(std::vector<double>& half, double sigma) {
        detail::expand_half<double>(std::span<const double>(half), b_,
                                    [&](int r, int c, std::complex<double> z) { full_(r, c) = z.real(); });
        const Plane smooth = smooth_magnitude(full_, sigma);
        for (int r = 0; r < b_; ++r) {
            for (int c = 0; c < hw_; ++c) {
                half[static_cast<std::size_t>(r) * hw_ + c] = smooth(r, c);
            }
        }
    }

    int b_;
    int channels_;
    Fft2d fft_;
    int hw_;
    Plane full_;
    std::vector<std::vector<double>> mags_;
    std::vector<std::vector<double>> weights_;
    std::vector<std::vector<std::complex<double>>> spectra_;
    std::vector<std::complex<double>> accum_;
    std::vector<std::vector<double>> result_;
};

/// Fourier-weighted fusion of equally sized square blocks (one per frame).
inline Frame fuse_blocks(std::span<const Frame> blocks, double p, double sigma) {
    if (blocks.empty()) {
        throw ConfigError("fuse_blocks: no blocks");
    }
    const Frame& first = blocks.front();
    if (first.height() != first.width()) {
        throw DimensionError("fuse_blocks: blocks must be square");
    }
    for (const auto& b : blocks) {
        if (!b.same_shape(first)) {
            throw DimensionError("fuse_blocks: blocks differ in shape");
        }
    }
    if (!(p >= 0.0) || !(sigma >= 0.0)) {
        throw ConfigError("fuse_blocks: p and sigma must be non-negative");
    }
    const int n = first.height();
    BlockFuser fuser(n, first.channels());
    fuser.fuse(blocks, 0, 0, p, sigma);
    Frame out(n, n, first.channels());
    for (int c = 0; c < first.channels(); ++c) {
        const auto r = fuser.result(c);
        std::copy(r.begin(), r.end(), out.channel(c).values().begin());
    }
    return out;
}

/// Per-block weight energies gathered during a fusion pass.
struct FusionDiagnostics {
    /// [frame][block] sum of squared weights over the frequency plane; blocks in grid row-major order.
    std::vector<std::vector<double>> weight_energy;
    BlockGrid grid;
};

namespace detail {

inline std::vector<Frame> pad_for_blocks(std::span<const Frame> frames, int block_size) {
    const Frame& ref = frames.front();
    const int margin = block_size / 2;
    if (margin >= std::min(ref.height(), ref.width())) {
        throw ConfigError("block size " + std::to_string(block_size) + " is too large for a " +
                          std::to_string(ref.height()) + "x" + std::to_string(ref.width()) +
                          " frame (half the block must be smaller than both dimensions)");
    }
    std::vector<Frame> padded;
    padded.reserve(frames.size());
    for (const auto& f : frames) {
        if (!f.same_shape(ref)) {
            throw DimensionError("fuse_stack: frames differ in shape");
        }
        padded.push_back(mirror_pad(f, margin));
    }
    return padded;
}

} // namespace detail

/// Fuses a registered stack block by block and overlap-averages the result.
/// Output is not clamped. Results do not depend on cfg.threads.
inline Frame fuse_frames(std::span<const Frame> frames, const FbaConfig& cfg, FusionDiagnostics* diag = nullptr) {
    cfg.validate();
    if (frames.empty()) {
        throw ConfigError("fuse_stack: empty stack");
    }
    const int b = cfg.block_size;
    const int h = frames.front().height();
    const int w = frames.front().width();
    const int nc = frames.front().channels();
    const std::vector<Frame> padded = detail::pad_for_blocks(frames, b);
    const BlockGrid grid = make_block_grid(h, w, b, cfg.stride);
    const double p = cfg.exponent;
    const double sigma = cfg.sigma_w();

    Frame acc(padded.front().height(), padded.front().width(), nc);
    Plane count(acc.height(), acc.width());
    if (diag) {
        diag->grid = grid;
        diag->weight_energy.assign(frames.size(), std::vector<double>(grid.size()));
    }

    const std::size_t ncols = grid.cols.size();
    const auto workers = static_cast<std::size_t>(std::max(1, std::min<int>(cfg.threads, static_cast<int>(ncols))));
    std::vector<std::unique_ptr<BlockFuser>> fusers(workers);
    std::vector<std::vector<std::vector<double>>> row_blocks(
        ncols, std::vector<std::vector<double>>(static_cast<std::size_t>(nc)));
    std::vector<std::vector<double>> row_energy(ncols);

    for (std::size_t ri = 0; ri < grid.rows.size(); ++ri) {
        const int top = grid.rows[ri];
        // Blocks of one grid row are fused in parallel into per-column slots,
        // then accumulated in a fixed order so the sum is thread-count independent.
        parallel_for(ncols, static_cast<int>(workers), [&](std::size_t ci, std::size_t worker) {
            auto& fuser = fusers[worker];
            if (!fuser) {
                fuser = std::make_unique<BlockFuser>(b, nc);
            }
            fuser->fuse(padded, top, grid.cols[ci], p, sigma, diag ? &row_energy[ci] : nullptr);
            for (int c = 0; c < nc; ++c) {
                const auto r = fuser->result(c);
                row_blocks[ci][static_cast<std::size_t>(c)].assign(r.begin(), r.end());
            }
        });
        for (std::size_t ci = 0; ci < ncols; ++ci) {
            const int left = grid.cols[ci];
            for (int c = 0; c < nc; ++c) {
                const auto& blk = row_blocks[ci][static_cast<std::size_t>(c)];
                Plane& dst = acc.channel(c);
                for (int y = 0; y < b; ++y) {
                    auto row = dst.row(top + y);
                    const double* src = blk.data() + static_cast<std::ptrdiff_t>(y) * b;
                    for (int x = 0; x < b; ++x) {
                        row[static_cast<std::size_t>(left + x)] += src[x];
                    }
                }
            }
            for (int y = 0; y < b; ++y) {
                auto row = count.row(top + y);
                for (int x = 0; x < b; ++x) {
                    row[static_cast<std::size_t>(left + x)] += 1.0;
                }
            }
            if (diag) {
                for (std::size_t i = 0; i < frames.size(); ++i) {
                    diag->weight_energy[i][ri * ncols + ci] = row_energy[ci][i];
                }
            }
        }
    }

    const int m = grid.pad_margin;
    Frame out(h, w, nc);
    for (int c = 0; c < nc; ++c) {
        for (int y = 0; y < h; ++y) {
            const auto a = acc.channel(c).row(y + m);
            const auto n = count.row(y + m);
            auto o = out.channel(c).row(y);
            for (int x = 0; x < w; ++x) {
                o[static_cast<std::size_t>(x)] = a[static_cast<std::size_t>(x + m)] / n[static_cast<std::size_t>(x + m)];
            }
        }
    }
    return out;
}

inline Frame fuse_stack(const RegisteredStack& stack, const FbaConfig& cfg, FusionDiagnostics* diag = nullptr) {
    return fuse_frames(stack.frames, cfg, diag);
}

} // namespace vfba
