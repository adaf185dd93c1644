#include <gtest/gtest.h>

#include <fstream>

#include "busca/features.hpp"
#include "test_support.hpp"

using namespace busca;

namespace {

Image gradient_image(int w, int h) {
    Image img(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            img.at(x, y, 0) = static_cast<float>(x) / w;
            img.at(x, y, 1) = static_cast<float>(y) / h;
            img.at(x, y, 2) = static_cast<float>((x * 7 + y * 3) % 17) / 17.0f;
        }
    }
    return img;
}

}  // namespace

TEST(Extractor, DeterministicAndUnitNorm) {
    const Image img = gradient_image(160, 120);
    const AppearanceExtractor ex(64);
    const BBox box{60, 50, 30, 70};
    const auto a = ex.extract(img, box);
    const auto b = ex.extract(img, box);
    ASSERT_EQ(a.size(), 64u);
    EXPECT_EQ(a, b);
    EXPECT_NEAR(l2_norm(a), 1.0, 1e-6);

    const AppearanceExtractor same_seed(64);
    EXPECT_EQ(same_seed.extract(img, box), a);
    const AppearanceExtractor other_seed(64, 12345);
    EXPECT_NE(other_seed.extract(img, box), a);
}

TEST(Extractor, UnitNormAcrossBoxes) {
    const Image img = gradient_image(200, 100);
    const AppearanceExtractor ex(32);
    Rng rng(3);
    for (int i = 0; i < 50; ++i) {
        const BBox box{rng.uniform(0, 200), rng.uniform(0, 100), rng.uniform(2, 80), rng.uniform(2, 80)};
        EXPECT_NEAR(l2_norm(ex.extract(img, box)), 1.0, 1e-6);
    }
}

TEST(Extractor, UniformGrayIgnoresPosition) {
    const Image gray(100, 100, 0.5f);
    const AppearanceExtractor ex(48);
    const auto a = ex.extract(gray, {20, 20, 20, 30});
    const auto b = ex.extract(gray, {75, 70, 10, 25});
    EXPECT_NEAR(cosine_similarity(a, b), 1.0, 1e-6);
}

TEST(Extractor, DifferentContentDiffers) {
    const Image img = gradient_image(160, 120);
    const AppearanceExtractor ex(64);
    EXPECT_LT(cosine_similarity(ex.extract(img, {20, 20, 20, 20}), ex.extract(img, {140, 100, 20, 20})), 0.999);
}

TEST(Extractor, BoxOutsideImage) {
    const Image img = gradient_image(50, 50);
    const AppearanceExtractor ex(16);
    EXPECT_THROW(ex.extract(img, {200, 200, 10, 10}), InvalidInput);
    EXPECT_THROW(ex.extract(Image{}, {20, 20, 10, 10}), InvalidInput);
    EXPECT_NO_THROW(ex.extract(img, {-2, 25, 10, 10}));
}

TEST(Cosine, Examples) {
    const FeatureVector a{0.3f, -0.4f, 0.5f};
    const FeatureVector neg{-0.3f, 0.4f, -0.5f};
    EXPECT_NEAR(cosine_similarity(a, a), 1.0, 1e-12);
    EXPECT_NEAR(cosine_similarity(a, neg), -1.0, 1e-12);
    EXPECT_EQ(cosine_similarity(FeatureVector{1, 0, 0}, FeatureVector{0, 1, 0}), 0.0);
    EXPECT_THROW(cosine_similarity(FeatureVector{0, 0, 0}, a), InvalidInput);
    EXPECT_THROW(cosine_similarity(FeatureVector{1, 0}, a), DimensionError);
}

TEST(Cosine, SymmetricAndBounded) {
    Rng rng(4);
    for (int i = 0; i < 500; ++i) {
        FeatureVector a(8), b(8);
        for (auto& x : a) x = static_cast<float>(rng.normal());
        for (auto& x : b) x = static_cast<float>(rng.normal());
        const double ab = cosine_similarity(a, b);
        ASSERT_EQ(ab, cosine_similarity(b, a));
        ASSERT_GE(ab, -1.0);
        ASSERT_LE(ab, 1.0);
    }
}

TEST(Ppm, RoundTrip) {
    const auto dir = busca::testing::temp_dir("ppm");
    Image img(7, 5);
    for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = static_cast<float>(i % 256) / 255.0f;
    write_ppm(img, dir / "a.ppm");
    const Image back = read_ppm(dir / "a.ppm");
    ASSERT_EQ(back.width, 7);
    ASSERT_EQ(back.height, 5);
    for (std::size_t i = 0; i < img.data.size(); ++i) EXPECT_NEAR(back.data[i], img.data[i], 1e-6);
}

TEST(Ppm, RejectsOtherFormats) {
    const auto dir = busca::testing::temp_dir("ppm_bad");
    std::ofstream(dir / "p3.ppm") << "P3\n1 1\n255\n0 0 0\n";
    EXPECT_THROW(read_ppm(dir / "p3.ppm"), Error);
    std::ofstream(dir / "short.ppm", std::ios::binary) << "P6\n4 4\n255\nabc";
    EXPECT_THROW(read_ppm(dir / "short.ppm"), Error);
}

TEST(FeatureFile, RoundTripTwoFramesThreeDetections) {
    const auto dir = busca::testing::temp_dir("busf");
    FeatureMap m;
    for (std::uint32_t f = 1; f <= 2; ++f) {
        for (std::uint32_t d = 0; d < 3; ++d) m[{f, d}] = {static_cast<float>(f), static_cast<float>(d), -0.5f, 1e-7f};
    }
    write_features(dir / "f.busf", 4, m);
    const FeatureMap back = load_features(dir / "f.busf", 4);
    EXPECT_EQ(back.size(), 6u);
    EXPECT_EQ(back, m);

    std::ifstream in(dir / "f.busf", std::ios::binary);
    char magic[4];
    in.read(magic, 4);
    EXPECT_EQ(std::string(magic, 4), "BUSF");
    EXPECT_EQ(std::filesystem::file_size(dir / "f.busf"), 8u + 6u * (8u + 16u));
}

TEST(FeatureFile, DimensionMismatch) {
    const auto dir = busca::testing::temp_dir("busf_dim");
    FeatureMap m;
    m[{1, 0}] = FeatureVector(256, 0.1f);
    write_features(dir / "f.busf", 256, m);
    EXPECT_THROW(load_features(dir / "f.busf", 512), DimensionError);
    EXPECT_EQ(load_features(dir / "f.busf", 0).size(), 1u);
    EXPECT_THROW(write_features(dir / "g.busf", 8, m), DimensionError);
}

TEST(FeatureFile, EmptyAndMalformed) {
    const auto dir = busca::testing::temp_dir("busf_empty");
    std::ofstream(dir / "empty.busf").close();
    EXPECT_TRUE(load_features(dir / "empty.busf", 512).empty());

    FeatureMap m;
    m[{1, 0}] = FeatureVector(4, 0.1f);
    write_features(dir / "f.busf", 4, m);
    std::filesystem::resize_file(dir / "f.busf", std::filesystem::file_size(dir / "f.busf") - 3);
    EXPECT_THROW(load_features(dir / "f.busf", 4), Error);
    std::ofstream(dir / "junk.busf") << "NOPE1234";
    EXPECT_THROW(load_features(dir / "junk.busf", 4), Error);
}

TEST(FeatureFile, CompletenessListsMissing) {
    FeatureMap m;
    m[{1, 0}] = {1.0f};
    const std::vector<FeatureKey> want{{1, 0}, {1, 1}, {2, 0}};
    try {
        require_complete(m, want);
        FAIL() << "expected an error";
    } catch (const Error& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("(1,1)"), std::string::npos);
        EXPECT_NE(msg.find("(2,0)"), std::string::npos);
        EXPECT_NE(msg.find("2 detections"), std::string::npos);
    }
}
