#include <gtest/gtest.h>

#include <cmath>

#include "busca/ste.hpp"
#include "ste_oracle.hpp"

using namespace busca;

TEST(Interplay, IdentityUsesTheFloor) {
    const SteConfig cfg;
    const InterplayTriple e = interplay_map({100, 200, 40, 80}, 10, {100, 200, 40, 80, 10}, cfg);
    EXPECT_EQ(e.e_t, 0.0);
    EXPECT_EQ(e.e_s, 0.0);
    EXPECT_NEAR(e.e_d, 15.0 * std::log(1e-6), 1e-12);
}

TEST(Interplay, Examples) {
    const SteConfig cfg;
    const Anchor a{100, 200, 40, 80, 10};
    EXPECT_DOUBLE_EQ(interplay_map({100, 200, 40, 80}, 5, a, cfg).e_t, -10.0);
    EXPECT_NEAR(interplay_map({100, 200, 80, 160}, 10, a, cfg).e_s, 30.0 * std::log(2.0), 1e-12);
    EXPECT_NEAR(interplay_map({100, 200, 80, 160}, 10, a, cfg).e_s, 20.794415416798, 1e-9);
    EXPECT_NEAR(interplay_map({140, 200, 40, 80}, 10, a, cfg).e_d, 0.0, 1e-15);
}

TEST(Interplay, RejectsDegenerateAnchor) {
    EXPECT_THROW(interplay_map({0, 0, 1, 1}, 0, {0, 0, 0, 1, 0}, SteConfig{}), InvalidInput);
}

TEST(Embed, ZeroTripleAlternates) {
    const auto v = embed_project({0, 0, 0}, SteConfig{});
    ASSERT_EQ(v.size(), 512u);
    for (int i = 0; i < 510; ++i) EXPECT_EQ(v[static_cast<std::size_t>(i)], i % 2 ? 1.0 : 0.0) << i;
    EXPECT_EQ(v[510], 0.0);
    EXPECT_EQ(v[511], 0.0);
}

TEST(Embed, FirstPairOfEachBlock) {
    SteConfig cfg;
    const InterplayTriple e{-3.5, 2.25, 0.75};
    const auto v = embed_project(e, cfg);
    const int block = ste_block_dim(cfg.d_model);
    EXPECT_EQ(block, 170);
    EXPECT_EQ(v[0], std::sin(e.e_t));
    EXPECT_EQ(v[1], std::cos(e.e_t));
    EXPECT_EQ(v[static_cast<std::size_t>(block)], std::sin(e.e_s));
    EXPECT_EQ(v[static_cast<std::size_t>(2 * block + 1)], std::cos(e.e_d));
}

TEST(Embed, PairsAreOnTheUnitCircle) {
    Rng rng(5);
    for (int trial = 0; trial < 100; ++trial) {
        const InterplayTriple e{rng.uniform(-200, 200), rng.uniform(-100, 100), rng.uniform(-250, 50)};
        const auto v = embed_project(e, SteConfig{});
        for (std::size_t i = 0; i + 1 < 510; i += 2) {
            ASSERT_NEAR(v[i] * v[i] + v[i + 1] * v[i + 1], 1.0, 1e-12);
        }
        for (double x : v) {
            ASSERT_GE(x, -1.0);
            ASSERT_LE(x, 1.0);
        }
    }
}

TEST(Embed, SmallWidth) {
    SteConfig cfg;
    cfg.d_model = 12;
    EXPECT_EQ(ste_block_dim(12), 4);
    const auto v = embed_project({0, 0, 0}, cfg);
    EXPECT_EQ(v, (std::vector<double>{0, 1, 0, 1, 0, 1, 0, 1, 0, 1, 0, 1}));
    cfg.d_model = 5;
    EXPECT_THROW(embed_project({0, 0, 0}, cfg), InvalidInput);
    std::vector<double> wrong(13);
    EXPECT_THROW(embed_project({0, 0, 0}, 12, wrong), DimensionError);
}

// Reference values computed offline with 40-digit arithmetic.
TEST(Ste, FrozenValuesAtTheAnchor) {
    SteConfig cfg;
    cfg.d_model = 12;
    const Anchor a{100, 200, 40, 80, 10};
    const auto v = ste({100, 200, 40, 80}, 10, a, cfg);
    const std::vector<double> want{0, 1, 0, 1, 0, 1, 0, 1,
                                   0.11221988608645391525, 0.99368339885838049909,
                                   -0.87684789042705966788, -0.48076790351854309540};
    for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(v[i], want[i], 1e-9) << i;

    cfg.d_model = 512;
    const auto w = ste({100, 200, 40, 80}, 10, a, cfg);
    const int base = 2 * 170;
    EXPECT_NEAR(w[base + 2], 0.56249478689125387633, 1e-9);
    EXPECT_NEAR(w[base + 3], -0.82680083134946283527, 1e-9);
    EXPECT_NEAR(w[base + 100], -0.79525405739215797890, 1e-9);
    EXPECT_NEAR(w[base + 101], 0.60627632660471768040, 1e-9);
    EXPECT_NEAR(w[base + 168], -0.023092896754595831923, 1e-9);
    EXPECT_NEAR(w[base + 169], 0.99973332350156337944, 1e-9);
}

TEST(Ste, FrozenValuesForAnOffsetToken) {
    SteConfig cfg;
    cfg.d_model = 12;
    const auto v = ste({130, 180, 50, 60}, 7, {100, 200, 40, 80, 10}, cfg);
    const std::vector<double> want{
        0.27941549819892587281,  0.96017028665036602055,  -0.059964006479444599199, 0.99820053993520416555,
        -0.82379758100667652631, 0.56688406709621697266,  -0.0096806269616777311509, 0.99995314163296113832,
        0.37410783516412078573,  -0.92738520996876752613, -0.035242972423175488883, 0.99937877348619892128};
    for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(v[i], want[i], 1e-9) << i;
}

TEST(Ste, AgreesWithDirectEvaluation) {
    Rng rng(6);
    for (int trial = 0; trial < 1000; ++trial) {
        SteConfig cfg;
        cfg.d_model = trial % 2 ? 512 : 96;
        const auto [token, t, anchor] = ste_oracle::random_case(rng);
        const auto v = ste(token, t, anchor, cfg);
        const auto want = ste_oracle::evaluate(token, t, anchor, cfg);
        ASSERT_EQ(v.size(), want.size());
        for (std::size_t i = 0; i < v.size(); ++i) {
            ASSERT_NEAR(v[i], static_cast<double>(want[i]), 1e-9) << "trial " << trial << " index " << i;
        }
    }
}

TEST(Ste, RelativeRepresentation) {
    const SteConfig cfg;
    const auto a = ste({130, 180, 50, 60}, 7, {100, 200, 40, 80, 10}, cfg);
    const auto b = ste({-70, 380, 50, 60}, 7, {-100, 400, 40, 80, 10}, cfg);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
}

TEST(Ste, Invariances) {
    Rng rng(8);
    for (int trial = 0; trial < 300; ++trial) {
        SteConfig cfg;
        cfg.d_model = 96;
        auto [token, t, anchor] = ste_oracle::random_case(rng);
        // Coordinates on a 1/64 px grid keep every sum and difference below exact.
        auto grid = [](double v) { return std::round(v * 64.0) / 64.0; };
        token = {grid(token.cx), grid(token.cy), grid(token.w), grid(token.h)};
        anchor = {grid(anchor.x), grid(anchor.y), grid(anchor.w), grid(anchor.h), anchor.t};
        const auto base = ste(token, t, anchor, cfg);

        // Dyadic shifts keep every difference exact, so the result is bitwise equal.
        const double dx = std::ldexp(static_cast<double>(rng.uniform_int(-64, 64)), 2);
        const double dy = std::ldexp(static_cast<double>(rng.uniform_int(-64, 64)), 2);
        BBox shifted = token;
        shifted.cx += dx;
        shifted.cy += dy;
        Anchor moved = anchor;
        moved.x += dx;
        moved.y += dy;
        ASSERT_EQ(ste(shifted, t, moved, cfg), base);

        const FrameIndex dt = rng.uniform_int(-1000, 1000);
        Anchor later = anchor;
        later.t += dt;
        ASSERT_EQ(ste(token, t + dt, later, cfg), base);

        // k/64 with odd k: products with grid coordinates stay exact
        const double s = static_cast<double>(2 * rng.uniform_int(3, 320) + 1) / 64.0;
        const BBox scaled{token.cx * s, token.cy * s, token.w * s, token.h * s};
        const Anchor scaled_anchor{anchor.x * s, anchor.y * s, anchor.w * s, anchor.h * s, anchor.t};
        const auto v = ste(scaled, t, scaled_anchor, cfg);
        for (std::size_t i = 0; i < v.size(); ++i) ASSERT_NEAR(v[i], base[i], 1e-12);
    }
}

TEST(Ste, SaturatedTriple) {
    const InterplayTriple e = saturated_triple(SteConfig{});
    EXPECT_DOUBLE_EQ(e.e_t, -200.0);
    EXPECT_DOUBLE_EQ(e.e_s, 150.0);
    EXPECT_DOUBLE_EQ(e.e_d, 150.0);
}
