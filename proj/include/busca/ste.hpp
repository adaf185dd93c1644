#pragma once

// Spatiotemporal encoding: a token's time, size and distance relative to an
// anchor observation, expanded with sinusoids into a d_model-wide vector.
//
// Layout: three blocks of D = floor(d_model / 3) rounded down to even
// channels, ordered (time, size, distance). Each block interleaves
// sin/cos pairs; channels past 3D are zero.

#include <cmath>
#include <span>
#include <vector>

#include "busca/core.hpp"

namespace busca {

struct Anchor {
    double x = 0.0;
    double y = 0.0;
    double w = 1.0;
    double h = 1.0;
    FrameIndex t = 0;

    static Anchor from(const BBox& b, FrameIndex t) { return {b.cx, b.cy, b.w, b.h, t}; }
};

struct SteConfig {
    double sigma_t = 2.0;
    double sigma_s = 15.0;
    double sigma_d = 15.0;
    int d_model = 512;
    double epsilon_d = 1e-6;  // floor on the normalized distance before the log
    // Saturation magnitudes of the hallucination token's encoding.
    double halluc_t_max = 100.0;
    double halluc_s_max = 10.0;
    double halluc_d_max = 10.0;
};

struct InterplayTriple {
    double e_t = 0.0;
    double e_s = 0.0;
    double e_d = 0.0;
};

inline int ste_block_dim(int d_model) { return (d_model / 3) & ~1; }

inline void validate(const SteConfig& cfg) {
    if (!(cfg.sigma_t > 0.0 && cfg.sigma_s > 0.0 && cfg.sigma_d > 0.0)) {
        throw InvalidInput("SteConfig: scale factors must be positive");
    }
    if (cfg.d_model < 6) throw InvalidInput("SteConfig: d_model must be >= 6");
    if (!(cfg.epsilon_d > 0.0)) throw InvalidInput("SteConfig: epsilon_d must be positive");
}

inline InterplayTriple interplay_map(const BBox& token, FrameIndex t, const Anchor& anchor, const SteConfig& cfg) {
    if (!(anchor.w > 0.0 && anchor.h > 0.0)) throw InvalidInput("interplay_map: anchor must have positive size");
    InterplayTriple e;
    e.e_t = cfg.sigma_t * static_cast<double>(t - anchor.t);
    e.e_s = cfg.sigma_s * (std::log(token.w / anchor.w) + std::log(token.h / anchor.h));
    const double nx = (token.cx - anchor.x) / anchor.w;
    const double ny = (token.cy - anchor.y) / anchor.h;
    const double radicand = std::max(nx * nx + ny * ny, cfg.epsilon_d * cfg.epsilon_d);
    e.e_d = cfg.sigma_d * std::log(std::sqrt(radicand));
    return e;
}

/// Encoding that sits as far from the anchor as the representation allows:
/// far in the past, much larger, far away.
inline InterplayTriple saturated_triple(const SteConfig& cfg) {
    return {-cfg.sigma_t * cfg.halluc_t_max, cfg.sigma_s * cfg.halluc_s_max, cfg.sigma_d * cfg.halluc_d_max};
}

/// Writes the sinusoidal projection of `e` into `out` (size d_model).
inline void embed_project(const InterplayTriple& e, int d_model, std::span<double> out) {
    if (d_model < 6) throw InvalidInput("embed_project: d_model must be >= 6");
    if (out.size() != static_cast<std::size_t>(d_model)) throw DimensionError("embed_project: output size mismatch");
    const int block = ste_block_dim(d_model);
    const double values[3] = {e.e_t, e.e_s, e.e_d};
    std::fill(out.begin(), out.end(), 0.0);
    for (int b = 0; b < 3; ++b) {
        double* dst = out.data() + b * block;
        for (int i = 0; i < block / 2; ++i) {
            const double angle = values[b] / std::pow(10000.0, 2.0 * i / block);
            dst[2 * i] = std::sin(angle);
            dst[2 * i + 1] = std::cos(angle);
        }
    }
}

inline std::vector<double> embed_project(const InterplayTriple& e, const SteConfig& cfg) {
    std::vector<double> out(static_cast<std::size_t>(cfg.d_model));
    embed_project(e, cfg.d_model, out);
    return out;
}

inline std::vector<double> ste(const BBox& token, FrameIndex t, const Anchor& anchor, const SteConfig& cfg) {
    return embed_project(interplay_map(token, t, anchor, cfg), cfg);
}

}  // namespace busca
