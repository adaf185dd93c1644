#pragma once

// Online tracking-by-detection loop: Kalman prediction, two-round IoU
// association (high- then low-confidence detections), recovery of tracks
// left without a detection, track births and ageing.

#include <algorithm>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "busca/core.hpp"
#include "busca/features.hpp"
#include "busca/geometry.hpp"
#include "busca/hungarian.hpp"
#include "busca/kalman.hpp"
#include "busca/proposals.hpp"
#include "busca/ste.hpp"
#include "busca/transformer/network.hpp"

namespace busca {

enum class RecoveryKind { None, LowerDetection, Iou, Mixed, Busca };

inline std::string to_string(RecoveryKind k) {
    switch (k) {
        case RecoveryKind::None: return "none";
        case RecoveryKind::LowerDetection: return "ld";
        case RecoveryKind::Iou: return "iou";
        case RecoveryKind::Mixed: return "mixed";
        case RecoveryKind::Busca: return "busca";
    }
    return "?";
}

inline RecoveryKind parse_recovery(const std::string& s) {
    if (s == "none") return RecoveryKind::None;
    if (s == "ld") return RecoveryKind::LowerDetection;
    if (s == "iou") return RecoveryKind::Iou;
    if (s == "mixed") return RecoveryKind::Mixed;
    if (s == "busca") return RecoveryKind::Busca;
    throw InvalidInput("unknown recovery strategy '" + s + "' (expected none, ld, iou, mixed or busca)");
}

struct TrackerConfig {
    double det_thresh_high = 0.6;
    double det_thresh_low = 0.1;
    double iou_match_thresh = 0.3;         // first round: match when IoU exceeds this
    double iou_match_thresh_second = 0.5;  // second round and LD recovery
    double new_track_thresh = 0.7;
    int max_age = 30;  // paused frames before termination
    RecoveryKind recovery = RecoveryKind::None;
    double ld_epsilon = 0.01;
    double mixed_iou_gate = 0.7;
    int z = 11;  // track window; BUSCA only runs on tracks with at least z observations
    NeighborhoodParams neighborhood;
    ProposalToggles toggles;
    SteConfig ste;
    KalmanParams kalman;
    int history_cap = 0;  // 0 means 4 * z
    bool busca_updates_kalman = false;
    double frame_width = 0.0;
    double frame_height = 0.0;
};

inline void validate(const TrackerConfig& c) {
    for (double v : {c.det_thresh_high, c.det_thresh_low, c.iou_match_thresh, c.iou_match_thresh_second,
                     c.new_track_thresh, c.ld_epsilon, c.mixed_iou_gate}) {
        if (!(v >= 0.0 && v <= 1.0)) throw InvalidInput("TrackerConfig: thresholds must lie in [0, 1]");
    }
    if (c.z < 1) throw InvalidInput("TrackerConfig: z must be >= 1");
    if (c.max_age < 0) throw InvalidInput("TrackerConfig: max_age must be >= 0");
}

struct FrameEntry {
    TrackId id = 0;
    BBox bbox;
    TrackState state = TrackState::Active;
    bool recovered = false;  // produced by the recovery step rather than a detection
};

struct FrameResult {
    FrameIndex frame = 0;
    std::vector<FrameEntry> entries;  // sorted by id
};

/// Track as seen by the associator.
struct TrackView {
    TrackId id = 0;
    BBox predicted;
    TrackState state = TrackState::Active;
};

namespace detail {

inline Eigen::MatrixXd iou_cost(std::span<const BBox> tracks, std::span<const BBox> dets) {
    Eigen::MatrixXd c(static_cast<Eigen::Index>(tracks.size()), static_cast<Eigen::Index>(dets.size()));
    for (std::size_t i = 0; i < tracks.size(); ++i) {
        for (std::size_t j = 0; j < dets.size(); ++j) {
            c(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = 1.0 - iou(tracks[i], dets[j]);
        }
    }
    return c;
}

// Matches track subset `rows` to detection subset `cols`; marks consumed entries.
inline void match_round(std::span<const TrackView> tracks, std::span<const Detection> dets, std::vector<int>& rows,
                        std::vector<int>& cols, double iou_thresh, AssignmentSet& out) {
    if (rows.empty() || cols.empty()) return;
    std::vector<BBox> tb, db;
    for (int r : rows) tb.push_back(tracks[static_cast<std::size_t>(r)].predicted);
    for (int c : cols) db.push_back(dets[static_cast<std::size_t>(c)].bbox);
    const auto pairs = hungarian(iou_cost(tb, db), 1.0 - iou_thresh);
    std::vector<char> row_used(rows.size(), 0), col_used(cols.size(), 0);
    for (const auto& [r, c] : pairs) {
        out.pairs.emplace_back(tracks[static_cast<std::size_t>(rows[static_cast<std::size_t>(r)])].id,
                               cols[static_cast<std::size_t>(c)]);
        row_used[static_cast<std::size_t>(r)] = 1;
        col_used[static_cast<std::size_t>(c)] = 1;
    }
    std::vector<int> rr, cc;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (!row_used[i]) rr.push_back(rows[i]);
    }
    for (std::size_t j = 0; j < cols.size(); ++j) {
        if (!col_used[j]) cc.push_back(cols[j]);
    }
    rows = std::move(rr);
    cols = std::move(cc);
}

}  // namespace detail

/// Two-round association. Round one offers high-confidence detections to every
/// live track; round two offers low-confidence detections to the still
/// unmatched active tracks.
inline AssignmentSet associate(std::span<const Detection> detections, std::span<const TrackView> tracks,
                               const TrackerConfig& cfg) {
    AssignmentSet out;
    std::vector<int> high, low, other;
    for (int j = 0; j < static_cast<int>(detections.size()); ++j) {
        const double c = detections[static_cast<std::size_t>(j)].confidence;
        if (c >= cfg.det_thresh_high) {
            high.push_back(j);
        } else if (c >= cfg.det_thresh_low) {
            low.push_back(j);
        } else {
            other.push_back(j);
        }
    }
    std::vector<int> rows;
    for (int i = 0; i < static_cast<int>(tracks.size()); ++i) {
        if (tracks[static_cast<std::size_t>(i)].state != TrackState::Terminated) rows.push_back(i);
    }
    detail::match_round(tracks, detections, rows, high, cfg.iou_match_thresh, out);

    std::vector<int> active_rows, paused_rows;
    for (int r : rows) {
        (tracks[static_cast<std::size_t>(r)].state == TrackState::Active ? active_rows : paused_rows).push_back(r);
    }
    detail::match_round(tracks, detections, active_rows, low, cfg.iou_match_thresh_second, out);

    std::vector<int> left(active_rows);
    left.insert(left.end(), paused_rows.begin(), paused_rows.end());
    std::sort(left.begin(), left.end());
    for (int r : left) out.unmatched_tracks.push_back(tracks[static_cast<std::size_t>(r)].id);
    out.unmatched_detections = high;
    out.unmatched_detections.insert(out.unmatched_detections.end(), low.begin(), low.end());
    out.unmatched_detections.insert(out.unmatched_detections.end(), other.begin(), other.end());
    std::sort(out.unmatched_detections.begin(), out.unmatched_detections.end());
    return out;
}

/// Decision function for BUSCA recovery; defaults to a forward pass of a model.
using BuscaDecider = std::function<Decision(const TokenSequence&)>;

class Tracker {
public:
    explicit Tracker(TrackerConfig cfg, const DecisionModel<float>* model = nullptr) : cfg_(std::move(cfg)) {
        validate(cfg_);
        if (model) {
            model_config_ = model->config;
            decider_ = [model](const TokenSequence& seq) { return forward(seq, *model); };
        }
        check_ready();
    }

    Tracker(TrackerConfig cfg, ModelConfig model_config, BuscaDecider decider)
        : cfg_(std::move(cfg)), model_config_(model_config), decider_(std::move(decider)) {
        validate(cfg_);
        check_ready();
    }

    const TrackerConfig& config() const { return cfg_; }
    const std::vector<Track>& tracks() const { return tracks_; }

    /// Processes one frame. `appearance` supplies features for motion candidates and
    /// is required by the Mixed and BUSCA strategies.
    FrameResult step(FrameIndex frame, std::span<const Detection> detections,
                     const AppearanceSource* appearance = nullptr) {
        if (last_frame_ && frame <= *last_frame_) {
            throw InvalidInput("Tracker::step: frame " + std::to_string(frame) + " arrives after frame " +
                               std::to_string(*last_frame_) + "; frames must be strictly increasing");
        }
        if ((cfg_.recovery == RecoveryKind::Mixed || cfg_.recovery == RecoveryKind::Busca) && !appearance) {
            throw InvalidInput("Tracker::step: recovery '" + to_string(cfg_.recovery) + "' needs an appearance source");
        }
        last_frame_ = frame;
        const std::size_t cap = static_cast<std::size_t>(cfg_.history_cap > 0 ? cfg_.history_cap : 4 * cfg_.z);

        // predict
        std::vector<TrackView> views;
        views.reserve(tracks_.size());
        for (auto& t : tracks_) {
            const KalmanPrediction p = kalman_predict(t.motion, cfg_.kalman);
            t.motion = p.state;
            views.push_back({t.id, p.bbox, t.state});
        }

        // associate
        const AssignmentSet assignment = associate(detections, views, cfg_);
        std::vector<PoolEntry> pool;
        for (const auto& [id, det_index] : assignment.pairs) {
            Track& t = by_id(id);
            const Detection& det = detections[static_cast<std::size_t>(det_index)];
            t.motion = kalman_update(t.motion, det.bbox, cfg_.kalman);
            t.append({det.bbox, frame, det.appearance, ObservationSource::Detector}, cap);
            t.state = TrackState::Active;
            t.paused_age = 0;
        }
        for (const auto& [id, det_index] : assignment.pairs) pool.push_back({id, by_id(id).last()});
        std::sort(pool.begin(), pool.end(), [](const PoolEntry& a, const PoolEntry& b) { return a.track_id < b.track_id; });

        // recover
        std::vector<char> det_used(detections.size(), 1);
        for (int j : assignment.unmatched_detections) det_used[static_cast<std::size_t>(j)] = 0;
        std::vector<TrackId> to_recover, paused_unmatched;
        for (TrackId id : assignment.unmatched_tracks) {
            (by_id(id).state == TrackState::Active ? to_recover : paused_unmatched).push_back(id);
        }
        std::vector<TrackId> still_unmatched =
            recover(to_recover, views, detections, det_used, pool, appearance, frame, cap);

        // age
        for (TrackId id : still_unmatched) {
            Track& t = by_id(id);
            t.state = TrackState::Paused;
            t.paused_age = 1;
        }
        for (TrackId id : paused_unmatched) {
            Track& t = by_id(id);
            if (++t.paused_age > cfg_.max_age) t.state = TrackState::Terminated;
        }
        if (cfg_.max_age == 0) {
            for (TrackId id : still_unmatched) by_id(id).state = TrackState::Terminated;
        }

        // births
        for (std::size_t j = 0; j < detections.size(); ++j) {
            if (det_used[j] || detections[j].confidence < cfg_.new_track_thresh) continue;
            Track t;
            t.id = next_id_++;
            t.motion = kalman_initiate(detections[j].bbox, cfg_.kalman);
            t.append({detections[j].bbox, frame, detections[j].appearance, ObservationSource::Detector}, cap);
            tracks_.push_back(std::move(t));
        }
        std::erase_if(tracks_, [](const Track& t) { return t.state == TrackState::Terminated; });

        // emit
        FrameResult result;
        result.frame = frame;
        for (const auto& t : tracks_) {
            if (t.state != TrackState::Active || t.last().t != frame) continue;
            result.entries.push_back({t.id, t.last().bbox, t.state, t.last().source == ObservationSource::MotionModel});
        }
        std::sort(result.entries.begin(), result.entries.end(),
                  [](const FrameEntry& a, const FrameEntry& b) { return a.id < b.id; });
        return result;
    }

private:
    void check_ready() const {
        if (cfg_.recovery == RecoveryKind::Busca && !decider_) {
            throw InvalidInput("Tracker: recovery 'busca' requires a decision model");
        }
    }

    Track& by_id(TrackId id) {
        for (auto& t : tracks_) {
            if (t.id == id) return t;
        }
        throw Error("unknown track id " + std::to_string(id));
    }

    void accept_candidate(Track& t, const Proposal& cand, FrameIndex frame, std::size_t cap) {
        if (cfg_.busca_updates_kalman) t.motion = kalman_update(t.motion, cand.bbox, cfg_.kalman);
        t.append({cand.bbox, frame, cand.embedding, ObservationSource::MotionModel}, cap);
        t.state = TrackState::Active;
        t.paused_age = 0;
    }

    // Returns the ids left unmatched after recovery.
    std::vector<TrackId> recover(const std::vector<TrackId>& ids, std::span<const TrackView> views,
                                 std::span<const Detection> detections, std::vector<char>& det_used,
                                 std::span<const PoolEntry> pool, const AppearanceSource* appearance, FrameIndex frame,
                                 std::size_t cap) {
        if (ids.empty() || cfg_.recovery == RecoveryKind::None) return ids;

        if (cfg_.recovery == RecoveryKind::LowerDetection) {
            std::vector<TrackView> subset;
            for (TrackId id : ids) {
                for (const auto& v : views) {
                    if (v.id == id) subset.push_back(v);
                }
            }
            std::vector<int> rows(subset.size()), cols;
            for (std::size_t i = 0; i < subset.size(); ++i) rows[i] = static_cast<int>(i);
            for (std::size_t j = 0; j < detections.size(); ++j) {
                if (!det_used[j] && detections[j].confidence >= cfg_.ld_epsilon &&
                    detections[j].confidence < cfg_.det_thresh_high) {
                    cols.push_back(static_cast<int>(j));
                }
            }
            AssignmentSet extra;
            detail::match_round(subset, detections, rows, cols, cfg_.iou_match_thresh_second, extra);
            std::vector<TrackId> left;
            for (const auto& [id, j] : extra.pairs) {
                Track& t = by_id(id);
                const Detection& det = detections[static_cast<std::size_t>(j)];
                t.motion = kalman_update(t.motion, det.bbox, cfg_.kalman);
                t.append({det.bbox, frame, det.appearance, ObservationSource::Detector}, cap);
                det_used[static_cast<std::size_t>(j)] = 1;
            }
            for (int r : rows) left.push_back(subset[static_cast<std::size_t>(r)].id);
            std::sort(left.begin(), left.end());
            return left;
        }

        ProposalConfig pcfg;
        pcfg.neighborhood = cfg_.neighborhood;
        pcfg.toggles = cfg_.toggles;
        pcfg.frame_width = cfg_.frame_width;
        pcfg.frame_height = cfg_.frame_height;
        if (cfg_.recovery != RecoveryKind::Busca) pcfg.toggles.ctx = true;

        // Decisions are taken against the state at the start of recovery and applied afterwards.
        std::vector<std::pair<TrackId, Proposal>> accepted;
        std::vector<TrackId> left;
        for (TrackId id : ids) {
            Track& t = by_id(id);
            BBox predicted;
            for (const auto& v : views) {
                if (v.id == id) predicted = v.predicted;
            }
            std::optional<Proposal> chosen;
            if (cfg_.recovery == RecoveryKind::Busca) {
                if (t.observation_count >= cfg_.z) chosen = decide_busca(t, predicted, pool, appearance, frame, pcfg);
            } else {
                const auto props = build_proposals(t, predicted, pool,
                                                   cfg_.recovery == RecoveryKind::Mixed ? appearance : nullptr, frame, pcfg);
                chosen = cfg_.recovery == RecoveryKind::Iou ? decide_iou(t, props) : decide_mixed(t, props);
            }
            if (chosen) {
                accepted.emplace_back(id, std::move(*chosen));
            } else {
                left.push_back(id);
            }
        }
        for (auto& [id, cand] : accepted) accept_candidate(by_id(id), cand, frame, cap);
        return left;
    }

    // Accepts the motion candidate when no contextual proposal overlaps the last box more.
    static std::optional<Proposal> decide_iou(const Track& t, const std::vector<Proposal>& props) {
        const BBox& last = t.last().bbox;
        const Proposal* best = nullptr;
        double best_iou = 0.0;
        for (const auto& p : props) {
            if (p.kind != ProposalKind::Candidate && p.kind != ProposalKind::Contextual) continue;
            const double v = iou(p.bbox, last);
            if (v > best_iou) {
                best_iou = v;
                best = &p;
            }
        }
        if (best && best->kind == ProposalKind::Candidate) return *best;
        return std::nullopt;
    }

    // Drops proposals overlapping the last box by less than the gate, then picks by appearance.
    std::optional<Proposal> decide_mixed(const Track& t, const std::vector<Proposal>& props) const {
        const Observation& last = t.last();
        const Proposal* best = nullptr;
        double best_sim = -2.0;
        for (const auto& p : props) {
            if (p.kind != ProposalKind::Candidate && p.kind != ProposalKind::Contextual) continue;
            if (iou(p.bbox, last.bbox) < cfg_.mixed_iou_gate) continue;
            const double s = cosine_similarity(p.embedding, last.appearance);
            if (s > best_sim) {
                best_sim = s;
                best = &p;
            }
        }
        if (best && best->kind == ProposalKind::Candidate) return *best;
        return std::nullopt;
    }

    std::optional<Proposal> decide_busca(const Track& t, const BBox& predicted, std::span<const PoolEntry> pool,
                                         const AppearanceSource* appearance, FrameIndex frame,
                                         const ProposalConfig& pcfg) const {
        const auto props = build_proposals(t, predicted, pool, appearance, frame, pcfg);
        const auto window = track_window(t, cfg_.z);
        const Anchor anchor = Anchor::from(t.last().bbox, t.last().t);
        SteConfig ste = cfg_.ste;
        ste.d_model = model_config_.d_model;
        const TokenSequence seq = assemble(window, props, anchor, model_config_, ste, cfg_.toggles.ste);
        const Decision d = decider_(seq);
        if (d.outcome != DecisionOutcome::UpdateWithCandidate) return std::nullopt;
        for (const auto& p : props) {
            if (p.kind == ProposalKind::Candidate) return p;
        }
        return std::nullopt;
    }

    TrackerConfig cfg_;
    ModelConfig model_config_;
    BuscaDecider decider_;
    std::vector<Track> tracks_;
    TrackId next_id_ = 1;
    std::optional<FrameIndex> last_frame_;
};

}  // namespace busca
