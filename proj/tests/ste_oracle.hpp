#pragma once

// Independent evaluation of the spatiotemporal encoding in long double,
// written directly from the formulas without reusing library code.

#include <cmath>
#include <tuple>
#include <vector>

#include "busca/random.hpp"
#include "busca/ste.hpp"

namespace ste_oracle {

inline std::vector<long double> evaluate(const busca::BBox& token, busca::FrameIndex t, const busca::Anchor& a,
                                         const busca::SteConfig& cfg) {
    using L = long double;
    const L et = static_cast<L>(cfg.sigma_t) * static_cast<L>(t - a.t);
    const L es = static_cast<L>(cfg.sigma_s) * (std::log(static_cast<L>(token.w) / static_cast<L>(a.w)) +
                                                std::log(static_cast<L>(token.h) / static_cast<L>(a.h)));
    const L nx = (static_cast<L>(token.cx) - static_cast<L>(a.x)) / static_cast<L>(a.w);
    const L ny = (static_cast<L>(token.cy) - static_cast<L>(a.y)) / static_cast<L>(a.h);
    L r2 = nx * nx + ny * ny;
    const L floor2 = static_cast<L>(cfg.epsilon_d) * static_cast<L>(cfg.epsilon_d);
    if (r2 < floor2) r2 = floor2;
    const L ed = static_cast<L>(cfg.sigma_d) * 0.5L * std::log(r2);

    int block = cfg.d_model / 3;
    if (block % 2) --block;
    std::vector<long double> out(static_cast<std::size_t>(cfg.d_model), 0.0L);
    const L comps[3] = {et, es, ed};
    for (int c = 0; c < 3; ++c) {
        for (int i = 0; i < block / 2; ++i) {
            const L div = std::pow(10000.0L, static_cast<L>(2 * i) / static_cast<L>(block));
            out[static_cast<std::size_t>(c * block + 2 * i)] = std::sin(comps[c] / div);
            out[static_cast<std::size_t>(c * block + 2 * i + 1)] = std::cos(comps[c] / div);
        }
    }
    return out;
}

inline std::tuple<busca::BBox, busca::FrameIndex, busca::Anchor> random_case(busca::Rng& rng) {
    const busca::Anchor a{rng.uniform(0, 1920), rng.uniform(0, 1080), rng.uniform(5, 200), rng.uniform(10, 400),
                          rng.uniform_int(0, 5000)};
    const busca::BBox token{a.x + rng.normal(0, 60), a.y + rng.normal(0, 60), a.w * rng.uniform(0.3, 3.0),
                            a.h * rng.uniform(0.3, 3.0)};
    return {token, a.t + rng.uniform_int(-40, 5), a};
}

}  // namespace ste_oracle
