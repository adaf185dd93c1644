#pragma once

#include <map>
#include <set>
#include <vector>

#include "busca/synth.hpp"

namespace busca::testing {

/// Ground-truth boxes as confident detections, restricted to identities that stay
/// annotated from their first frame through the end of the scene. Objects that
/// leave would make even a perfect detector drop them.
inline std::map<FrameIndex, std::vector<Detection>> perfect_detections(const Scene& scene,
                                                                       const AppearanceSource& appearance) {
    std::map<TrackId, std::vector<FrameIndex>> frames;
    for (FrameIndex f = scene.first_frame(); f <= scene.last_frame(); ++f) {
        for (const auto& g : scene.at(f)) frames[g.id].push_back(f);
    }
    std::set<TrackId> keep;
    for (const auto& [id, fs] : frames) {
        if (fs.back() == scene.last_frame() && fs.back() - fs.front() + 1 == static_cast<FrameIndex>(fs.size())) {
            keep.insert(id);
        }
    }
    std::map<FrameIndex, std::vector<Detection>> out;
    for (FrameIndex f = scene.first_frame(); f <= scene.last_frame(); ++f) {
        auto& v = out[f];
        for (const auto& g : scene.at(f)) {
            if (keep.contains(g.id)) v.push_back({g.bbox, 1.0, appearance.at(f, g.bbox)});
        }
    }
    return out;
}

}  // namespace busca::testing
