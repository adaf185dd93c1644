#pragma once

// Appearance embeddings: a lightweight built-in extractor (pooled colour grid
// plus colour histogram, randomly projected and L2-normalized), cosine
// similarity, and the "BUSF" container for precomputed per-detection features.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "busca/core.hpp"
#include "busca/random.hpp"

namespace busca {

/// RGB image, channels interleaved, intensities in [0, 1].
struct Image {
    int width = 0;
    int height = 0;
    std::vector<float> data;

    Image() = default;
    Image(int w, int h, float fill = 0.0f) : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3, fill) {}

    bool empty() const { return width <= 0 || height <= 0; }
    float& at(int x, int y, int c) { return data[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
    float at(int x, int y, int c) const { return data[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
};

/// Reads a binary PPM (P6, maxval <= 255).
inline Image read_ppm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open image " + path.string());
    std::string magic;
    in >> magic;
    if (magic != "P6") throw Error(path.string() + ": only binary PPM (P6) is supported");
    auto next_int = [&]() {
        int v = 0;
        while (in >> std::ws && in.peek() == '#') {
            std::string comment;
            std::getline(in, comment);
        }
        in >> v;
        return v;
    };
    const int w = next_int();
    const int h = next_int();
    const int maxval = next_int();
    in.get();
    if (!in || w <= 0 || h <= 0 || maxval <= 0 || maxval > 255) throw Error(path.string() + ": bad PPM header");
    std::vector<unsigned char> raw(static_cast<std::size_t>(w) * h * 3);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!in) throw Error(path.string() + ": truncated PPM payload");
    Image img(w, h);
    for (std::size_t i = 0; i < raw.size(); ++i) img.data[i] = static_cast<float>(raw[i]) / static_cast<float>(maxval);
    return img;
}

inline void write_ppm(const Image& img, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write image " + path.string());
    out << "P6\n" << img.width << ' ' << img.height << "\n255\n";
    std::vector<unsigned char> raw(img.data.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
        raw[i] = static_cast<unsigned char>(std::lround(std::clamp(img.data[i], 0.0f, 1.0f) * 255.0f));
    }
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
}

struct PatchSpec {
    int crop_w = 128;
    int crop_h = 384;
};

inline void normalize_in_place(FeatureVector& v) {
    const double n = l2_norm(v);
    if (!(n > 0.0) || !std::isfinite(n)) throw NumericError("cannot normalize a zero or non-finite feature vector");
    for (float& x : v) x = static_cast<float>(x / n);
}

inline double cosine_similarity(std::span<const float> a, std::span<const float> b) {
    if (a.size() != b.size()) throw DimensionError("cosine_similarity: dimension mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += static_cast<double>(a[i]) * b[i];
        na += static_cast<double>(a[i]) * a[i];
        nb += static_cast<double>(b[i]) * b[i];
    }
    if (!(na > 0.0) || !(nb > 0.0)) throw InvalidInput("cosine_similarity: zero vector");
    return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

/// Deterministic hand-crafted appearance extractor.
class AppearanceExtractor {
public:
    static constexpr int kGrid = 8;
    static constexpr int kBinsPerChannel = 16;
    static constexpr int kRawDim = kGrid * kGrid * 3 + kBinsPerChannel * 3;

    explicit AppearanceExtractor(int dim = 512, std::uint64_t seed = 0x42555346, PatchSpec spec = {})
        : dim_(dim), spec_(spec), projection_(static_cast<std::size_t>(dim) * kRawDim) {
        if (dim <= 0) throw InvalidInput("AppearanceExtractor: dimension must be positive");
        if (spec.crop_w < kGrid || spec.crop_h < kGrid) throw InvalidInput("AppearanceExtractor: patch too small");
        Rng rng(derive_seed(seed, 0x50524f4a));
        const double scale = 1.0 / std::sqrt(static_cast<double>(kRawDim));
        for (float& x : projection_) x = static_cast<float>(rng.normal() * scale);
    }

    int dim() const { return dim_; }

    FeatureVector extract(const Image& image, const BBox& box) const {
        if (image.empty()) throw InvalidInput("extract: empty image");
        if (!box.valid()) throw InvalidInput("extract: invalid box");
        const double x0 = std::max(box.left(), 0.0);
        const double y0 = std::max(box.top(), 0.0);
        const double x1 = std::min(box.right(), static_cast<double>(image.width));
        const double y1 = std::min(box.bottom(), static_cast<double>(image.height));
        if (x1 <= x0 || y1 <= y0) throw InvalidInput("extract: box lies outside the image");

        std::array<double, kRawDim> raw{};
        double* grid = raw.data();
        double* hist = raw.data() + kGrid * kGrid * 3;
        const int cell_w = spec_.crop_w / kGrid;
        const int cell_h = spec_.crop_h / kGrid;
        const double sx = (x1 - x0) / spec_.crop_w;
        const double sy = (y1 - y0) / spec_.crop_h;
        const std::size_t n_pixels = static_cast<std::size_t>(cell_w * kGrid) * (cell_h * kGrid);

        for (int py = 0; py < cell_h * kGrid; ++py) {
            const double fy = y0 + (py + 0.5) * sy - 0.5;
            for (int px = 0; px < cell_w * kGrid; ++px) {
                const double fx = x0 + (px + 0.5) * sx - 0.5;
                const int cell = (py / cell_h) * kGrid + (px / cell_w);
                for (int c = 0; c < 3; ++c) {
                    const double v = std::clamp(bilinear(image, fx, fy, c), 0.0, 1.0);
                    grid[cell * 3 + c] += v;
                    const int bin = std::min(kBinsPerChannel - 1, static_cast<int>(v * kBinsPerChannel));
                    hist[c * kBinsPerChannel + bin] += 1.0;
                }
            }
        }
        const double per_cell = static_cast<double>(cell_w) * cell_h;
        for (int i = 0; i < kGrid * kGrid * 3; ++i) grid[i] = grid[i] / per_cell - 0.5;
        for (int i = 0; i < kBinsPerChannel * 3; ++i) hist[i] = hist[i] / n_pixels - 1.0 / kBinsPerChannel;

        FeatureVector out(static_cast<std::size_t>(dim_));
        for (int o = 0; o < dim_; ++o) {
            const float* row = projection_.data() + static_cast<std::size_t>(o) * kRawDim;
            double acc = 0.0;
            for (int i = 0; i < kRawDim; ++i) acc += row[i] * raw[i];
            out[o] = static_cast<float>(acc);
        }
        normalize_in_place(out);
        return out;
    }

private:
    static double bilinear(const Image& img, double fx, double fy, int c) {
        fx = std::clamp(fx, 0.0, img.width - 1.0);
        fy = std::clamp(fy, 0.0, img.height - 1.0);
        const int xa = static_cast<int>(fx);
        const int ya = static_cast<int>(fy);
        const int xb = std::min(xa + 1, img.width - 1);
        const int yb = std::min(ya + 1, img.height - 1);
        const double ax = fx - xa;
        const double ay = fy - ya;
        const double top = img.at(xa, ya, c) * (1 - ax) + img.at(xb, ya, c) * ax;
        const double bot = img.at(xa, yb, c) * (1 - ax) + img.at(xb, yb, c) * ax;
        return top * (1 - ay) + bot * ay;
    }

    int dim_;
    PatchSpec spec_;
    std::vector<float> projection_;  // dim x kRawDim, row-major
};

/// Appearance at an arbitrary box of a frame. Used for motion candidates,
/// which have no detector-provided feature.
class AppearanceSource {
public:
    virtual ~AppearanceSource() = default;
    virtual int dim() const = 0;
    virtual FeatureVector at(FrameIndex frame, const BBox& box) const = 0;
};

/// Frames loaded from `<dir>/<frame:06d>.ppm` on demand.
class ImageSequenceAppearance final : public AppearanceSource {
public:
    ImageSequenceAppearance(std::filesystem::path dir, AppearanceExtractor extractor)
        : dir_(std::move(dir)), extractor_(std::move(extractor)) {}

    int dim() const override { return extractor_.dim(); }

    FeatureVector at(FrameIndex frame, const BBox& box) const override {
        if (frame != cached_frame_) {
            char name[32];
            std::snprintf(name, sizeof(name), "%06lld.ppm", static_cast<long long>(frame));
            cached_ = read_ppm(dir_ / name);
            cached_frame_ = frame;
        }
        return extractor_.extract(cached_, box);
    }

private:
    std::filesystem::path dir_;
    AppearanceExtractor extractor_;
    mutable FrameIndex cached_frame_ = -1;
    mutable Image cached_;
};

// ---------------------------------------------------------------------------
// BUSF container: "BUSF", u32 F, then (u32 frame, u32 det_index, F x f32)
// records, all little-endian and densely packed.

using FeatureKey = std::pair<std::uint32_t, std::uint32_t>;  // (frame, detection index)
using FeatureMap = std::map<FeatureKey, FeatureVector>;

namespace detail {

inline void put_u32(std::ostream& out, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_f32(std::ostream& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }

inline std::uint32_t get_u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline float get_f32(const unsigned char* p) { return std::bit_cast<float>(get_u32(p)); }

inline std::vector<unsigned char> read_all(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace detail

inline void write_features(const std::filesystem::path& path, int dim, const FeatureMap& features) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out.write("BUSF", 4);
    detail::put_u32(out, static_cast<std::uint32_t>(dim));
    for (const auto& [key, vec] : features) {
        if (vec.size() != static_cast<std::size_t>(dim)) throw DimensionError("write_features: vector dimension mismatch");
        detail::put_u32(out, key.first);
        detail::put_u32(out, key.second);
        for (float f : vec) detail::put_f32(out, f);
    }
    if (!out) throw Error("failed writing " + path.string());
}

/// Loads a BUSF file. An empty file is an empty map. `expected_dim` <= 0 accepts any dimension.
inline FeatureMap load_features(const std::filesystem::path& path, int expected_dim) {
    const auto bytes = detail::read_all(path);
    FeatureMap out;
    if (bytes.empty()) return out;
    if (bytes.size() < 8 || std::memcmp(bytes.data(), "BUSF", 4) != 0) throw Error(path.string() + ": not a BUSF file");
    const std::uint32_t dim = detail::get_u32(bytes.data() + 4);
    if (expected_dim > 0 && dim != static_cast<std::uint32_t>(expected_dim)) {
        throw DimensionError(path.string() + ": feature dimension " + std::to_string(dim) + " does not match expected " +
                             std::to_string(expected_dim));
    }
    const std::size_t record = 8 + 4 * static_cast<std::size_t>(dim);
    const std::size_t body = bytes.size() - 8;
    if (dim == 0 || body % record != 0) throw Error(path.string() + ": malformed BUSF records");
    for (std::size_t off = 8; off < bytes.size(); off += record) {
        const FeatureKey key{detail::get_u32(bytes.data() + off), detail::get_u32(bytes.data() + off + 4)};
        FeatureVector v(dim);
        for (std::uint32_t i = 0; i < dim; ++i) v[i] = detail::get_f32(bytes.data() + off + 8 + 4 * i);
        if (!out.emplace(key, std::move(v)).second) {
            throw Error(path.string() + ": duplicate record for frame " + std::to_string(key.first) + " detection " +
                        std::to_string(key.second));
        }
    }
    return out;
}

/// Throws listing every (frame, detection) pair in `expected` with no feature.
inline void require_complete(const FeatureMap& features, std::span<const FeatureKey> expected) {
    std::ostringstream missing;
    std::size_t count = 0;
    for (const auto& key : expected) {
        if (!features.contains(key)) {
            if (count < 20) missing << " (" << key.first << "," << key.second << ")";
            ++count;
        }
    }
    if (count > 0) {
        throw Error("missing features for " + std::to_string(count) + " detections:" + missing.str() +
                    (count > 20 ? " ..." : ""));
    }
}

}  // namespace busca
