#pragma once

// Answer options offered to the decision model for one unmatched track:
// the motion candidate, nearby observations of matched tracks, and the
// learned [Miss.] / [Halluc.] tokens, each followed by a [SEP] delimiter.

#include <algorithm>
#include <span>
#include <vector>

#include "busca/core.hpp"
#include "busca/features.hpp"
#include "busca/geometry.hpp"
#include "busca/kalman.hpp"

namespace busca {

enum class ProposalKind { Candidate, Contextual, LearnedMiss, LearnedHalluc, Sep };

struct Proposal {
    ProposalKind kind = ProposalKind::Candidate;
    FeatureVector embedding;  // empty for learned kinds; the model supplies those
    BBox bbox;
    FrameIndex t = 0;
    bool clamped = false;    // candidate was moved back onto the frame
    bool saturated = false;  // encoded with the saturated triple instead of its coordinates
    TrackId source_track = 0;
};

/// Component switches of the decision model.
struct ProposalToggles {
    bool hlc = true;  // [Halluc.] token
    bool mss = true;  // [Miss.] token
    bool ste = true;  // spatiotemporal encoding
    bool ctx = true;  // contextual proposals
};

struct ProposalConfig {
    NeighborhoodParams neighborhood;
    ProposalToggles toggles;
    double frame_width = 0.0;  // 0 disables on-frame clamping
    double frame_height = 0.0;
};

inline bool is_scoreable(ProposalKind k) { return k != ProposalKind::Sep; }

namespace detail {

inline BBox clamp_to_frame(const BBox& b, double width, double height, bool& clamped) {
    clamped = false;
    if (width <= 0.0 || height <= 0.0) return b;
    const bool outside = b.right() <= 0.0 || b.left() >= width || b.bottom() <= 0.0 || b.top() >= height;
    if (!outside) return b;
    clamped = true;
    BBox out = b;
    out.cx = std::clamp(b.cx, std::min(b.w / 2.0, width / 2.0), std::max(width - b.w / 2.0, width / 2.0));
    out.cy = std::clamp(b.cy, std::min(b.h / 2.0, height / 2.0), std::max(height - b.h / 2.0, height / 2.0));
    return out;
}

inline void push_with_sep(std::vector<Proposal>& out, Proposal p) {
    Proposal sep;
    sep.kind = ProposalKind::Sep;
    sep.bbox = p.bbox;
    sep.t = p.t;
    sep.saturated = p.saturated;
    out.push_back(std::move(p));
    out.push_back(std::move(sep));
}

}  // namespace detail

/// `predicted` is the Kalman prediction of `track` for `frame`.
inline std::vector<Proposal> build_proposals(const Track& track, const BBox& predicted,
                                             std::span<const PoolEntry> matched_pool,
                                             const AppearanceSource* appearance, FrameIndex frame,
                                             const ProposalConfig& cfg) {
    if (track.history.empty()) throw InvalidInput("build_proposals: track has no observations");
    if (!predicted.valid()) throw InvalidInput("build_proposals: zero-size or non-finite motion prediction");
    const Observation& last = track.last();

    std::vector<Proposal> out;
    Proposal cand;
    cand.kind = ProposalKind::Candidate;
    cand.bbox = detail::clamp_to_frame(predicted, cfg.frame_width, cfg.frame_height, cand.clamped);
    cand.t = frame;
    cand.source_track = track.id;
    if (appearance) cand.embedding = appearance->at(frame, cand.bbox);
    detail::push_with_sep(out, std::move(cand));

    if (cfg.toggles.ctx) {
        for (const auto& n : select_neighbors(last.bbox, matched_pool, cfg.neighborhood)) {
            Proposal p;
            p.kind = ProposalKind::Contextual;
            p.bbox = n.obs.bbox;
            p.t = n.obs.t;
            p.embedding = n.obs.appearance;
            p.source_track = n.track_id;
            detail::push_with_sep(out, std::move(p));
        }
    }
    if (cfg.toggles.mss) {
        Proposal miss;
        miss.kind = ProposalKind::LearnedMiss;
        miss.bbox = last.bbox;
        miss.t = last.t;
        detail::push_with_sep(out, std::move(miss));
    }
    if (cfg.toggles.hlc) {
        Proposal halluc;
        halluc.kind = ProposalKind::LearnedHalluc;
        halluc.bbox = last.bbox;
        halluc.t = last.t;
        halluc.saturated = true;
        detail::push_with_sep(out, std::move(halluc));
    }
    return out;
}

inline std::vector<Proposal> build_proposals(const Track& track, std::span<const PoolEntry> matched_pool,
                                             const AppearanceSource* appearance, FrameIndex frame,
                                             const ProposalConfig& cfg, const KalmanParams& kalman = {}) {
    return build_proposals(track, kalman_predict(track.motion, kalman).bbox, matched_pool, appearance, frame, cfg);
}

}  // namespace busca
