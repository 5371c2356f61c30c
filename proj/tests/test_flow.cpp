#include <gtest/gtest.h>

#include <cmath>

#include "support.hpp"
#include "vfba/flow.hpp"

using namespace vfba;

namespace {

double mean_epe(const FlowField& f, double dx, double dy, int margin) {
    double s = 0.0;
    int n = 0;
    for (int y = margin; y < f.height() - margin; ++y)
        for (int x = margin; x < f.width() - margin; ++x) {
            s += std::hypot(f.dx(y, x) - dx, f.dy(y, x) - dy);
            ++n;
        }
    return s / n;
}

double max_magnitude(const FlowField& f) {
    double m = 0.0;
    for (std::size_t i = 0; i < f.dx.size(); ++i) m = std::max(m, std::hypot(f.dx.values()[i], f.dy.values()[i]));
    return m;
}

} // namespace

TEST(FlowParams, DefaultsAndValidation) {
    const FlowParams p;
    EXPECT_EQ(p.data_weight, 0.15);
    EXPECT_EQ(p.tightness, 0.3);
    EXPECT_EQ(p.time_step, 0.25);
    EXPECT_EQ(p.warps, 5);
    EXPECT_EQ(p.pyramid_factor, 0.5);
    EXPECT_EQ(p.min_level_size, 16);
    EXPECT_EQ(p.max_inner_iters, 300);
    EXPECT_EQ(p.stop_tol, 0.01);
    FlowParams bad;
    bad.time_step = 0.3;
    EXPECT_THROW(bad.validate(), ConfigError);
    bad = FlowParams{};
    bad.pyramid_factor = 1.0;
    EXPECT_THROW(bad.validate(), ConfigError);
    bad = FlowParams{};
    bad.warps = 0;
    EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Tvl1, IdenticalFramesGiveZeroFlow) {
    const Plane img = test::textured_plane(64, 80, 12);
    const FlowField f = estimate_flow_tvl1(img, img, FlowParams{});
    EXPECT_LT(max_magnitude(f), 1e-3);
}

TEST(Tvl1, ConstantPairGivesExactlyZero) {
    const FlowField f = estimate_flow_tvl1(Plane(40, 40, 0.3), Plane(40, 40, 0.3), FlowParams{});
    for (double v : f.dx.values()) EXPECT_EQ(v, 0.0);
    for (double v : f.dy.values()) EXPECT_EQ(v, 0.0);
}

TEST(Tvl1, DimensionMismatch) {
    EXPECT_THROW(estimate_flow_tvl1(Plane(10, 10), Plane(10, 11), FlowParams{}), DimensionError);
}

// dst is src moved right by 3 px, so src(x) = dst(x + (3, 0)).
TEST(Tvl1, RecoversThreePixelTranslation) {
    const Plane canvas = test::textured_plane(140, 140, 3);
    const Plane src = crop(canvas, 6, 6, 128, 128);
    const Plane dst = crop(canvas, 6, 3, 128, 128);
    const FlowField f = estimate_flow_tvl1(src, dst, FlowParams{});
    EXPECT_LT(mean_epe(f, 3.0, 0.0, 0), 0.3);
}

TEST(Tvl1, RecoversShiftMadeByTheWarper) {
    const Plane src = test::textured_plane(96, 96, 8);
    // dst(x) = src(x - (3,0)) built with the bicubic warper itself.
    const Plane dst = warp_plane(src, FlowField(Plane(96, 96, -3.0), Plane(96, 96, 0.0)));
    const FlowField f = estimate_flow_tvl1(src, dst, FlowParams{});
    EXPECT_LT(mean_epe(f, 3.0, 0.0, 6), 0.3);
}

TEST(Tvl1, EnergyNeverIncreasesAcrossWarps) {
    for (unsigned seed : {3u, 14u, 15u}) {
        const Plane canvas = test::textured_plane(110, 110, seed);
        const Plane src = crop(canvas, 5, 5, 96, 96);
        const Plane dst = crop(canvas, 3, 9, 96, 96);
        FlowTrace trace;
        estimate_flow_tvl1(src, dst, FlowParams{}, &trace);
        ASSERT_FALSE(trace.level_energies.empty());
        for (const auto& level : trace.level_energies) {
            ASSERT_EQ(level.size(), 6u);
            for (std::size_t k = 1; k < level.size(); ++k) {
                EXPECT_LE(level[k], level[k - 1] * (1.0 + 1e-6)) << "seed " << seed << " warp " << k;
            }
        }
    }
}

TEST(Tvl1, Deterministic) {
    const Plane a = test::textured_plane(60, 70, 1);
    const Plane b = crop(test::textured_plane(64, 74, 1), 1, 2, 60, 70);
    EXPECT_EQ(estimate_flow_tvl1(a, b, FlowParams{}), estimate_flow_tvl1(a, b, FlowParams{}));
}

TEST(FlowPair, IdenticalFramesGiveZero) {
    const Frame f = test::textured_frame(90, 90, 3, 2);
    const FlowPair p = estimate_flow_pair(f, f, FbaConfig{}, FlowParams{});
    EXPECT_LT(max_magnitude(p.fwd), 1e-3);
    EXPECT_LT(max_magnitude(p.bwd), 1e-3);
}

TEST(FlowPair, SixPixelShiftAtOneThirdScale) {
    const Plane canvas = test::textured_plane(500, 500, 5, 4.0);
    const Frame ref = test::gray_frame(crop(canvas, 10, 10, 480, 480));
    const Frame other = test::gray_frame(crop(canvas, 10, 4, 480, 480));
    const FlowPair p = estimate_flow_pair(ref, other, FbaConfig{}, FlowParams{});
    EXPECT_LT(mean_epe(p.fwd, 6.0, 0.0, 0), 0.5);
    EXPECT_LT(mean_epe(p.bwd, -6.0, 0.0, 0), 0.5);
}

TEST(FlowPair, FullScaleMatchesDirectSolver) {
    const Frame a = test::textured_frame(48, 56, 3, 10);
    const Frame b = test::textured_frame(48, 56, 3, 11);
    FbaConfig cfg;
    cfg.flow_scale = 1.0;
    const FlowPair p = estimate_flow_pair(a, b, cfg, FlowParams{});
    EXPECT_EQ(p.fwd, estimate_flow_tvl1(to_gray(a), to_gray(b), FlowParams{}));
    EXPECT_EQ(p.bwd, estimate_flow_tvl1(to_gray(b), to_gray(a), FlowParams{}));
}

TEST(FlowPair, SwappedArgumentsShareCodePath) {
    const Frame a = test::textured_frame(48, 48, 1, 20);
    const Frame b = test::textured_frame(48, 48, 1, 21);
    const FlowPair ab = estimate_flow_pair(a, b, FbaConfig{}, FlowParams{});
    const FlowPair ba = estimate_flow_pair(b, a, FbaConfig{}, FlowParams{});
    EXPECT_EQ(ab.fwd, ba.bwd);
    EXPECT_EQ(ab.bwd, ba.fwd);
}

TEST(Upsample, SameSizeIsIdentity) {
    FlowField f(7, 9);
    f.dx(3, 4) = 1.5;
    EXPECT_EQ(upsample_flow(f, 7, 9), f);
}

TEST(Upsample, ConstantFieldScalesVectors) {
    const FlowField f(Plane(10, 12, 1.0), Plane(10, 12, 2.0));
    const FlowField g = upsample_flow(f, 30, 36);
    for (double v : g.dx.values()) EXPECT_NEAR(v, 3.0, 1e-12);
    for (double v : g.dy.values()) EXPECT_NEAR(v, 6.0, 1e-12);
}

TEST(Upsample, AffineFieldStaysAffine) {
    FlowField f(8, 10);
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 10; ++x) {
            f.dx(y, x) = 0.1 * x - 0.2 * y + 0.3;
            f.dy(y, x) = 0.05 * x + 0.07 * y;
        }
    const FlowField g = upsample_flow(f, 24, 30);
    // Differences along each axis must be constant.
    for (int y = 0; y < 24; ++y)
        for (int x = 1; x + 1 < 30; ++x) {
            EXPECT_NEAR(g.dx(y, x + 1) - g.dx(y, x), g.dx(y, x) - g.dx(y, x - 1), 1e-12);
            EXPECT_NEAR(g.dy(y, x + 1) - g.dy(y, x), g.dy(y, x) - g.dy(y, x - 1), 1e-12);
        }
    for (int x = 0; x < 30; ++x)
        for (int y = 1; y + 1 < 24; ++y) EXPECT_NEAR(g.dx(y + 1, x) - g.dx(y, x), g.dx(y, x) - g.dx(y - 1, x), 1e-12);
}

TEST(Upsample, RefusesDownscale) { EXPECT_THROW(upsample_flow(FlowField(10, 10), 5, 10), ConfigError); }

TEST(AreaResample, PreservesMeanAndConstants) {
    const Plane p = test::textured_plane(90, 120, 2);
    const Plane q = area_resample(p, 30, 40);
    double a = 0.0, b = 0.0;
    for (double v : p.values()) a += v;
    for (double v : q.values()) b += v;
    EXPECT_NEAR(a / p.size(), b / q.size(), 1e-12);
    const auto result = area_resample(Plane(50, 50, 0.7), 17, 17);
    for (double v : result.values()) EXPECT_NEAR(v, 0.7, 1e-14);
}

TEST(FlowResolution, RoundsToNearest) {
    EXPECT_EQ(flow_resolution(720, 1280, 1.0 / 3.0), std::make_pair(240, 427));
    EXPECT_EQ(flow_resolution(100, 50, 1.0), std::make_pair(100, 50));
}
