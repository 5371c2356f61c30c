#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <numbers>

#include "support.hpp"
#include "vfba/bench.hpp"

using namespace vfba;

namespace {

double kernel_dft_peak(const Kernel& k) {
    const int n = k.size();
    double peak = 0.0;
    for (int u = 0; u < n; ++u)
        for (int v = 0; v < n; ++v) {
            std::complex<double> acc{};
            for (int y = 0; y < n; ++y)
                for (int x = 0; x < n; ++x) {
                    const double a = -2.0 * std::numbers::pi * (static_cast<double>(u * y + v * x) / n);
                    acc += k.weights(y, x) * std::complex<double>(std::cos(a), std::sin(a));
                }
            peak = std::max(peak, std::abs(acc));
        }
    return peak;
}

} // namespace

TEST(Tremor, ZeroStepIsDelta) {
    SynthesisParams p;
    p.tremor_step_std = 0.0;
    Rng rng(1);
    const Kernel k = simulate_tremor_kernel(p, rng);
    EXPECT_EQ(k.weights, delta_kernel(9).weights);
}

TEST(Tremor, KernelsAreAdmissible) {
    Rng rng(2024);
    for (int trial = 0; trial < 60; ++trial) {
        SynthesisParams p;
        p.kernel_size = trial % 2 ? 9 : 15;
        p.tremor_steps = 4 + trial % 20;
        p.tremor_step_std = 0.3 + 0.05 * (trial % 30);
        const Kernel k = simulate_tremor_kernel(p, rng);
        double sum = 0.0, cy = 0.0, cx = 0.0;
        for (int y = 0; y < k.size(); ++y)
            for (int x = 0; x < k.size(); ++x) {
                const double v = k.weights(y, x);
                ASSERT_GE(v, 0.0);
                sum += v;
                cy += v * y;
                cx += v * x;
            }
        ASSERT_NEAR(sum, 1.0, 1e-9);
        const double c = (k.size() - 1) / 2.0;
        EXPECT_LE(std::abs(cy - c), 0.5);
        EXPECT_LE(std::abs(cx - c), 0.5);
        EXPECT_LE(kernel_dft_peak(k), 1.0 + 1e-9);
    }
}

TEST(Tremor, InvalidParameters) {
    SynthesisParams p;
    p.kernel_size = 8;
    Rng rng(1);
    EXPECT_THROW(simulate_tremor_kernel(p, rng), ConfigError);
}

TEST(Synthesis, NoiselessDeltaKernelsReproduceSharp) {
    const Frame sharp = test::textured_frame(32, 32, 3, 1);
    SynthesisParams p;
    p.tremor_step_std = 0.0;
    const Burst b = synthesize_burst(sharp, p);
    ASSERT_EQ(b.frames.size(), 7u);
    for (const auto& f : b.frames) EXPECT_LT(test::max_abs_diff(f, sharp), 1e-15);
}

TEST(Synthesis, NoiseLevelGivesExpectedPsnr) {
    const Frame sharp = test::textured_frame(256, 256, 1, 2);
    SynthesisParams p;
    p.tremor_step_std = 0.0;
    p.noise_std = 0.01;
    p.num_frames = 2;
    const Burst b = synthesize_burst(sharp, p);
    for (const auto& f : b.frames) EXPECT_NEAR(psnr(f, sharp), 40.0, 0.5);
}

TEST(Synthesis, BlurredFramesBelowLuckyFrame) {
    const Frame sharp = test::textured_frame(96, 96, 1, 3);
    SynthesisParams p;
    p.lucky_frame = 2;
    p.noise_std = 0.002;
    p.rng_seed = 9;
    const Burst b = synthesize_burst(sharp, p);
    const double lucky = psnr(b.frames[2], sharp);
    for (int i = 0; i < 7; ++i)
        if (i != 2) {
            EXPECT_LT(psnr(b.frames[static_cast<std::size_t>(i)], sharp), lucky);
        }
}

TEST(Synthesis, SameSeedSameBurst) {
    const Frame sharp = test::textured_frame(40, 40, 1, 4);
    SynthesisParams p;
    p.noise_std = 0.01;
    p.rng_seed = 17;
    EXPECT_EQ(synthesize_burst(sharp, p).frames, synthesize_burst(sharp, p).frames);
}

// Averaged over seeds, stronger tremor gives lower PSNR.
TEST(Synthesis, QualityDecreasesWithTremor) {
    const Frame sharp = test::textured_frame(64, 64, 1, 5);
    double prev = std::numeric_limits<double>::infinity();
    for (double std : {0.25, 0.5, 1.0, 2.0}) {
        double acc = 0.0;
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            SynthesisParams p;
            p.num_frames = 1;
            p.tremor_step_std = std;
            p.rng_seed = seed;
            const double q = psnr(synthesize_burst(sharp, p).frames[0], sharp);
            ASSERT_TRUE(std::isfinite(q));
            acc += q;
        }
        EXPECT_LT(acc / 20.0, prev);
        prev = acc / 20.0;
    }
}

TEST(Convolve, DeltaIsIdentityAndShiftMoves) {
    const Plane p = test::textured_plane(20, 20, 6);
    EXPECT_EQ(convolve(p, delta_kernel(5)), p);
    Kernel shift{Plane(3, 3)};
    shift.weights(1, 2) = 1.0;  // out(x) = in(x - 1)
    const Plane q = convolve(p, shift);
    for (int y = 0; y < 20; ++y)
        for (int x = 1; x < 20; ++x) EXPECT_EQ(q(y, x), p(y, x - 1));
}

TEST(Psnr, Examples) {
    const Frame a(10, 10, 3, 0.2);
    EXPECT_TRUE(std::isinf(psnr(a, a)));
    EXPECT_NEAR(psnr(Frame(10, 10, 1, 0.0), Frame(10, 10, 1, 0.5)), 6.0206, 1e-4);
    EXPECT_NEAR(psnr(Frame(10, 10, 1, 0.3), Frame(10, 10, 1, 0.4)), 20.0, 1e-9);
    EXPECT_THROW(psnr(Frame(2, 2, 1), Frame(2, 3, 1)), DimensionError);
}

TEST(NoiseEstimate, ConstantFrameIsZero) { EXPECT_EQ(estimate_noise_mad(Frame(30, 30, 3, 0.4)), 0.0); }

TEST(NoiseEstimate, PureNoise) {
    const Frame f = test::add_gaussian_noise(Frame(256, 256, 1, 0.5), 0.02, 11);
    EXPECT_NEAR(estimate_noise_mad(f), 0.02, 0.02 * 0.2);
}

TEST(NoiseEstimate, SmoothGradientPlusNoise) {
    Frame g(256, 256, 1);
    for (int y = 0; y < 256; ++y)
        for (int x = 0; x < 256; ++x) g(0, y, x) = 0.2 + 0.6 * (0.5 * x + 0.3 * y) / 256.0;
    EXPECT_NEAR(estimate_noise_mad(test::add_gaussian_noise(g, 0.02, 12)), 0.02, 0.02 * 0.25);
}

namespace {

RegisteredStack stack_of(std::vector<Frame> frames) {
    RegisteredStack s;
    for (auto& f : frames) {
        s.masks.push_back(SoftMask{Plane(f.height(), f.width(), 1.0)});
        s.consistency.emplace_back();
        s.frames.push_back(std::move(f));
    }
    return s;
}

} // namespace

TEST(WeightDiagnostics, IdenticalFramesShareEqually) {
    const Frame f = test::textured_frame(128, 128, 1, 7);
    const WeightReport r = weight_diagnostics(stack_of({f, f, f, f, f, f, f}), FbaConfig{});
    ASSERT_EQ(r.contributions.size(), 7u);
    for (double c : r.contributions) EXPECT_NEAR(c, 1.0 / 7.0, 1e-6);
    ASSERT_EQ(r.block_maps.size(), 7u);
    EXPECT_EQ(r.block_maps[0].height(), 2);
    EXPECT_EQ(r.block_maps[0].width(), 2);
}

TEST(WeightDiagnostics, SingleFrame) {
    const WeightReport r = weight_diagnostics(stack_of({test::textured_frame(100, 100, 1, 8)}), FbaConfig{});
    ASSERT_EQ(r.contributions.size(), 1u);
    EXPECT_DOUBLE_EQ(r.contributions[0], 1.0);
}

TEST(WeightDiagnostics, SharpFrameDominates) {
    const Frame sharp = test::textured_frame(128, 128, 1, 9, 0.8);
    SynthesisParams p;
    p.lucky_frame = 4;
    p.tremor_step_std = 2.0;
    p.kernel_size = 15;
    p.rng_seed = 3;
    const Burst b = synthesize_burst(sharp, p);
    FbaConfig cfg;
    cfg.exponent = 20.0;
    const WeightReport r = weight_diagnostics(stack_of(b.frames), cfg);
    const auto top = std::max_element(r.contributions.begin(), r.contributions.end());
    EXPECT_EQ(top - r.contributions.begin(), 4);
}
