#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "busca/core.hpp"

namespace busca {

inline double intersection_area(const BBox& a, const BBox& b) {
    const double iw = std::min(a.right(), b.right()) - std::max(a.left(), b.left());
    const double ih = std::min(a.bottom(), b.bottom()) - std::max(a.top(), b.top());
    if (iw <= 0.0 || ih <= 0.0) return 0.0;
    return iw * ih;
}

inline double iou(const BBox& a, const BBox& b) {
    const double inter = intersection_area(a, b);
    if (inter <= 0.0) return 0.0;
    // areas from the same corner arithmetic as the intersection, so iou(a, a) == 1 exactly
    const double area_a = (a.right() - a.left()) * (a.bottom() - a.top());
    const double area_b = (b.right() - b.left()) * (b.bottom() - b.top());
    return inter / (area_a + area_b - inter);
}

struct NeighborhoodParams {
    double zeta = 1.0;  // growth of the search radius with track size
    int q_max = 4;      // contextual proposals kept
};

/// Center distance penalized by the size ratio of the two boxes; a proxy for depth separation.
inline double neighbor_distance(const BBox& track_last, const BBox& other) {
    const double eucl = std::hypot(track_last.cx - other.cx, track_last.cy - other.cy);
    const double sa = std::sqrt(track_last.w * track_last.h);
    const double sb = std::sqrt(other.w * other.h);
    const double ratio = std::max(sa / sb, sb / sa);
    return eucl * ratio;
}

inline double neighbor_radius(const BBox& track_last, const NeighborhoodParams& params) {
    const double grow = params.zeta * (track_last.w + track_last.h);
    return std::sqrt((track_last.w + grow) * (track_last.h + grow));
}

/// Observation of a track matched in the current frame, offered as contextual proposal.
struct PoolEntry {
    TrackId track_id = 0;
    Observation obs;
};

/// Up to q_max pool entries strictly inside the neighbor radius, nearest first.
/// Equal distances are ordered by track id.
inline std::vector<PoolEntry> select_neighbors(const BBox& track_last, std::span<const PoolEntry> pool,
                                               const NeighborhoodParams& params) {
    const double radius = neighbor_radius(track_last, params);
    std::vector<std::pair<double, const PoolEntry*>> inside;
    for (const auto& entry : pool) {
        const double d = neighbor_distance(track_last, entry.obs.bbox);
        if (d < radius) inside.emplace_back(d, &entry);
    }
    std::sort(inside.begin(), inside.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first < b.first;
        return a.second->track_id < b.second->track_id;
    });
    const std::size_t keep = std::min<std::size_t>(inside.size(), static_cast<std::size_t>(std::max(params.q_max, 0)));
    std::vector<PoolEntry> out;
    out.reserve(keep);
    for (std::size_t i = 0; i < keep; ++i) out.push_back(*inside[i].second);
    return out;
}

inline std::vector<PoolEntry> select_neighbors(const Track& track, std::span<const PoolEntry> pool,
                                               const NeighborhoodParams& params) {
    if (track.history.empty()) return {};
    return select_neighbors(track.last().bbox, pool, params);
}

}  // namespace busca
