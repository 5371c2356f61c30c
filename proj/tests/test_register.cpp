#include <gtest/gtest.h>

#include <random>

#include "support.hpp"
#include "vfba/register.hpp"

using namespace vfba;

namespace {

// Brute-force disc morphology: a pixel takes value `grow` if any pixel of that
// value lies within Euclidean distance r.
Plane disc_oracle(const Plane& m, int r, double grow) {
    Plane out = m;
    for (int y = 0; y < m.height(); ++y)
        for (int x = 0; x < m.width(); ++x)
            for (int dy = -r; dy <= r; ++dy)
                for (int dx = -r; dx <= r; ++dx) {
                    const int yy = y + dy, xx = x + dx;
                    if (dy * dy + dx * dx > r * r || yy < 0 || xx < 0 || yy >= m.height() || xx >= m.width()) continue;
                    if (m(yy, xx) == grow) out(y, x) = grow;
                }
    return out;
}

Plane random_binary(int h, int w, double p_one, unsigned seed) {
    std::mt19937 rng(seed);
    std::bernoulli_distribution b(p_one);
    Plane m(h, w);
    for (auto& v : m.values()) v = b(rng) ? 1.0 : 0.0;
    return m;
}

} // namespace

TEST(BinaryConsistency, InclusiveThreshold) {
    Plane c(1, 3);
    c(0, 0) = 0.5;
    c(0, 1) = 1.0;
    c(0, 2) = 1.5;
    const SoftMask m = binary_consistency(ConsistencyMap{c}, 1.0);
    EXPECT_EQ(m.values(0, 0), 1.0);
    EXPECT_EQ(m.values(0, 1), 1.0);
    EXPECT_EQ(m.values(0, 2), 0.0);
}

TEST(BinaryConsistency, SentinelAlwaysFails) {
    const SoftMask m = binary_consistency(ConsistencyMap{Plane(2, 2, kInconsistent)}, 1e6);
    for (double v : m.values.values()) EXPECT_EQ(v, 0.0);
}

TEST(RefineMask, AllOnesStayOnes) {
    for (MaskMode mode : {MaskMode::conservative, MaskMode::literal}) {
        const SoftMask m = refine_mask(SoftMask{Plane(30, 30, 1.0)}, 5, 5.0, mode);
        for (double v : m.values.values()) EXPECT_NEAR(v, 1.0, 1e-14);
    }
}

TEST(RefineMask, SingleZeroGrowsToDisc) {
    Plane m(21, 21, 1.0);
    m(10, 10) = 0.0;
    const Plane out = morph_disc(m, 5, MaskMode::conservative);
    for (int y = 0; y < 21; ++y)
        for (int x = 0; x < 21; ++x) {
            const int d2 = (y - 10) * (y - 10) + (x - 10) * (x - 10);
            EXPECT_EQ(out(y, x), d2 <= 25 ? 0.0 : 1.0) << y << "," << x;
        }
}

TEST(RefineMask, ZeroRadiusAndSigmaIsIdentity) {
    const Plane m = random_binary(17, 19, 0.6, 5);
    EXPECT_EQ(refine_mask(SoftMask{m}, 0, 0.0, MaskMode::conservative).values, m);
    EXPECT_EQ(refine_mask(SoftMask{m}, 0, 0.0, MaskMode::literal).values, m);
}

TEST(RefineMask, OutputInUnitInterval) {
    const Plane m = random_binary(40, 40, 0.7, 6);
    for (MaskMode mode : {MaskMode::conservative, MaskMode::literal}) {
        const auto result = refine_mask(SoftMask{m}, 3, 2.0, mode).values;
        for (double v : result.values()) {
            EXPECT_GE(v, 0.0);
            EXPECT_LE(v, 1.0);
        }
    }
}

TEST(MorphDisc, MatchesBruteForceOnRandomMasks) {
    for (unsigned seed = 0; seed < 12; ++seed) {
        const Plane m = random_binary(23, 29, seed % 2 ? 0.9 : 0.15, seed);
        const int r = 1 + static_cast<int>(seed % 6);
        ASSERT_EQ(morph_disc(m, r, MaskMode::conservative), disc_oracle(m, r, 0.0)) << seed;
        ASSERT_EQ(morph_disc(m, r, MaskMode::literal), disc_oracle(m, r, 1.0)) << seed;
    }
}

TEST(MorphDisc, LargerRadiusNeverRaisesConservativeMask) {
    for (unsigned seed = 0; seed < 8; ++seed) {
        const Plane m = random_binary(30, 30, 0.85, 100 + seed);
        Plane prev = m;
        for (int r = 1; r <= 6; ++r) {
            const Plane cur = morph_disc(m, r, MaskMode::conservative);
            for (std::size_t i = 0; i < cur.size(); ++i) ASSERT_LE(cur.values()[i], prev.values()[i]);
            prev = cur;
        }
    }
}

TEST(Blend, EndpointsAndMidpoint) {
    const Frame w(4, 4, 3, 0.2), r(4, 4, 3, 0.4);
    EXPECT_EQ(blend(w, r, SoftMask{Plane(4, 4, 1.0)}), w);
    EXPECT_EQ(blend(w, r, SoftMask{Plane(4, 4, 0.0)}), r);
    const Frame mid = blend(w, r, SoftMask{Plane(4, 4, 0.5)});
    for (int c = 0; c < 3; ++c)
        for (double v : mid.channel(c).values()) EXPECT_NEAR(v, 0.3, 1e-15);
}

TEST(Blend, AffineInMask) {
    const Frame w = test::textured_frame(9, 9, 1, 1);
    const Frame r = test::textured_frame(9, 9, 1, 2);
    for (double m : {0.0, 0.25, 0.5, 1.0}) {
        const Frame out = blend(w, r, SoftMask{Plane(9, 9, m)});
        for (int y = 0; y < 9; ++y)
            for (int x = 0; x < 9; ++x) EXPECT_NEAR(out(0, y, x), r(0, y, x) + m * (w(0, y, x) - r(0, y, x)), 1e-15);
    }
}

TEST(Blend, ConvexForRandomMasks) {
    const Frame w = test::textured_frame(25, 25, 3, 3);
    const Frame r = test::textured_frame(25, 25, 3, 4);
    std::mt19937 rng(8);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Plane m(25, 25);
    for (auto& v : m.values()) v = u(rng);
    const Frame out = blend(w, r, SoftMask{m});
    for (int c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < m.size(); ++i) {
            const double a = w.channel(c).values()[i], b = r.channel(c).values()[i];
            const double v = out.channel(c).values()[i];
            EXPECT_GE(v, std::min(a, b) - 1e-15);
            EXPECT_LE(v, std::max(a, b) + 1e-15);
        }
}

TEST(Blend, DimensionMismatch) {
    EXPECT_THROW(blend(Frame(3, 3, 1), Frame(3, 4, 1), SoftMask{Plane(3, 3)}), DimensionError);
    EXPECT_THROW(blend(Frame(3, 3, 1), Frame(3, 3, 1), SoftMask{Plane(3, 4)}), DimensionError);
}

TEST(RegisterWindow, IdenticalFramesReturnReference) {
    const Frame f = test::textured_frame(72, 72, 3, 9);
    const RegisteredStack s = register_window({f, f, f, f, f}, 2, FbaConfig{}, FlowParams{});
    ASSERT_EQ(s.size(), 5u);
    EXPECT_EQ(s.ref_index, 2u);
    for (const auto& g : s.frames) EXPECT_LT(test::max_abs_diff(g, f), 1e-6);
    for (double v : s.masks[2].values.values()) EXPECT_EQ(v, 1.0);
    EXPECT_FALSE(s.consistency[2].has_value());
    EXPECT_TRUE(s.consistency[0].has_value());
}

TEST(RegisterWindow, SingleFrame) {
    const Frame f = test::textured_frame(20, 20, 1, 1);
    const RegisteredStack s = register_window({f}, 0, FbaConfig{}, FlowParams{});
    ASSERT_EQ(s.size(), 1u);
    EXPECT_EQ(s.frames[0], f);
}

TEST(RegisterWindow, GlobalTranslationAlignsInterior) {
    const Plane canvas = test::textured_plane(220, 220, 31, 2.5);
    const Frame ref = test::gray_frame(crop(canvas, 10, 10, 192, 192));
    std::vector<Frame> window{test::gray_frame(crop(canvas, 8, 13, 192, 192)), ref,
                              test::gray_frame(crop(canvas, 14, 6, 192, 192))};
    const RegisteredStack s = register_window(window, 1, FbaConfig{}, FlowParams{});
    for (std::size_t i : {0u, 2u}) {
        const Frame a = crop(s.frames[i], 16, 16, 160, 160);
        const Frame b = crop(ref, 16, 16, 160, 160);
        double mse = 0.0;
        for (std::size_t k = 0; k < a.channel(0).size(); ++k) {
            const double d = a.channel(0).values()[k] - b.channel(0).values()[k];
            mse += d * d;
        }
        mse /= static_cast<double>(a.channel(0).size());
        EXPECT_GT(10.0 * std::log10(1.0 / mse), 40.0) << "frame " << i;
    }
}

TEST(RegisterWindow, MovedOccluderComesFromReference) {
    const Plane bg = test::textured_plane(192, 192, 31);
    Plane box = test::textured_plane(40, 40, 32, 0.8);
    for (auto& v : box.values()) v = 1.0 - v;
    auto scene = [&](int top, int left) {
        Plane p = bg;
        for (int y = 0; y < 40; ++y)
            for (int x = 0; x < 40; ++x) p(top + y, left + x) = box(y, x);
        return test::gray_frame(p);
    };
    const Frame ref = scene(76, 60);
    const Frame other = scene(76, 108);
    const RegisteredStack s = register_window({ref, other}, 0, FbaConfig{}, FlowParams{});
    // Inside the neighbor's box footprint the registered frame should show the reference background.
    int trusted = 0;
    for (int y = 76; y < 116; ++y)
        for (int x = 108; x < 148; ++x) trusted += s.masks[1].values(y, x) >= 0.5;
    EXPECT_LT(trusted, 160);  // under 10% of the 1600 box pixels
    double err = 0.0;
    for (int y = 86; y < 106; ++y)
        for (int x = 118; x < 138; ++x) err += std::abs(s.frames[1](0, y, x) - ref(0, y, x));
    EXPECT_LT(err / 400.0, 0.02);
}

TEST(RegisterWindow, RejectsBadInput) {
    EXPECT_THROW(register_window({}, 0, FbaConfig{}, FlowParams{}), ConfigError);
    EXPECT_THROW(register_window({Frame(8, 8, 1)}, 1, FbaConfig{}, FlowParams{}), ConfigError);
    EXPECT_THROW(register_window({Frame(8, 8, 1), Frame(8, 9, 1)}, 0, FbaConfig{}, FlowParams{}), DimensionError);
}
