#pragma once

// Synthetic MOT world: piecewise-linear pedestrian-like trajectories with
// depth-ordered occlusion, a detector that fails more often under occlusion,
// an analytic appearance field, and the training-sample builder for the
// decision model.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "busca/core.hpp"
#include "busca/features.hpp"
#include "busca/geometry.hpp"
#include "busca/random.hpp"
#include "busca/transformer/tokens.hpp"
#include "busca/transformer/train.hpp"

namespace busca {

struct DetectorModel {
    double miss_rate_base = 0.05;
    double miss_rate_occluded = 0.8;
    double occlusion_visibility = 0.5;  // below this a box counts as occluded
    double bbox_noise = 1.5;            // px, Gaussian std on cx, cy, w, h
    double confidence_noise = 0.03;
    double clutter_rate = 0.05;  // low-score duplicate boxes per ground-truth box
    double leaving_confidence_max = 0.1;  // score ceiling for objects whose center left the frame
};

struct SceneConfig {
    int width = 960;
    int height = 540;
    int n_objects = 20;
    int n_frames = 600;
    double speed_min = 0.5;  // px / frame
    double speed_max = 3.0;
    double jitter = 0.15;    // relative velocity perturbation per segment
    int segment_min = 30;    // frames per linear segment
    int segment_max = 90;
    double height_min = 60.0;
    double height_max = 160.0;
    std::vector<BBox> occluders;  // static scene occluders, always in front
    int feature_dim = 64;
    double appearance_noise = 0.5;        // noise scaled by (1 - visibility)
    double appearance_noise_floor = 0.1;  // noise present at full visibility
    DetectorModel detector;
    std::uint64_t seed = 7;
};

inline void validate(const SceneConfig& c) {
    if (c.width <= 0 || c.height <= 0 || c.n_frames <= 0 || c.n_objects < 0) {
        throw InvalidInput("SceneConfig: dimensions and counts must be positive");
    }
    for (double p : {c.detector.miss_rate_base, c.detector.miss_rate_occluded, c.detector.occlusion_visibility,
                     c.detector.clutter_rate}) {
        if (!(p >= 0.0 && p <= 1.0)) throw InvalidInput("SceneConfig: probabilities must lie in [0, 1]");
    }
    if (!(c.speed_min >= 0.0 && c.speed_max >= c.speed_min)) throw InvalidInput("SceneConfig: bad speed range");
    if (!(c.height_min > 0.0 && c.height_max >= c.height_min)) throw InvalidInput("SceneConfig: bad height range");
    if (c.segment_min < 1 || c.segment_max < c.segment_min) throw InvalidInput("SceneConfig: bad segment range");
    if (c.feature_dim <= 0) throw InvalidInput("SceneConfig: feature_dim must be positive");
}

struct Scene {
    SceneConfig config;
    std::vector<std::vector<GtBox>> frames;   // annotated boxes; frames[k] holds frame k + 1
    std::vector<std::vector<GtBox>> leaving;  // partly on screen with the center outside, not annotated
    std::map<TrackId, double> depth;         // larger is closer to the camera

    FrameIndex first_frame() const { return 1; }
    FrameIndex last_frame() const { return static_cast<FrameIndex>(frames.size()); }
    const std::vector<GtBox>& at(FrameIndex f) const { return frames.at(static_cast<std::size_t>(f - 1)); }
};

namespace detail {

/// Area of the union of `rects` clipped to `clip`.
inline double union_area(std::span<const BBox> rects, const BBox& clip) {
    std::vector<std::array<double, 4>> r;  // l, t, r, b
    for (const auto& b : rects) {
        const double l = std::max(b.left(), clip.left()), t = std::max(b.top(), clip.top());
        const double rr = std::min(b.right(), clip.right()), bb = std::min(b.bottom(), clip.bottom());
        if (rr > l && bb > t) r.push_back({l, t, rr, bb});
    }
    if (r.empty()) return 0.0;
    std::vector<double> xs, ys;
    for (const auto& q : r) {
        xs.push_back(q[0]);
        xs.push_back(q[2]);
        ys.push_back(q[1]);
        ys.push_back(q[3]);
    }
    std::sort(xs.begin(), xs.end());
    xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
    std::sort(ys.begin(), ys.end());
    ys.erase(std::unique(ys.begin(), ys.end()), ys.end());
    double area = 0.0;
    for (std::size_t i = 0; i + 1 < xs.size(); ++i) {
        const double mx = 0.5 * (xs[i] + xs[i + 1]);
        for (std::size_t j = 0; j + 1 < ys.size(); ++j) {
            const double my = 0.5 * (ys[j] + ys[j + 1]);
            for (const auto& q : r) {
                if (mx > q[0] && mx < q[2] && my > q[1] && my < q[3]) {
                    area += (xs[i + 1] - xs[i]) * (ys[j + 1] - ys[j]);
                    break;
                }
            }
        }
    }
    return area;
}

}  // namespace detail

inline Scene generate_scene(const SceneConfig& cfg) {
    validate(cfg);
    Scene scene;
    scene.config = cfg;
    scene.frames.resize(static_cast<std::size_t>(cfg.n_frames));
    scene.leaving.resize(static_cast<std::size_t>(cfg.n_frames));
    const double w_frame = cfg.width, h_frame = cfg.height;

    for (int i = 0; i < cfg.n_objects; ++i) {
        const TrackId id = i + 1;
        Rng rng(derive_seed(cfg.seed, 0x4f424a, id));
        const double h = rng.uniform(cfg.height_min, cfg.height_max);
        const double w = h * rng.uniform(0.35, 0.5);
        scene.depth[id] = h + 1e-6 * id;
        const int start = i < (cfg.n_objects + 1) / 2
                              ? 1
                              : static_cast<int>(rng.uniform_int(1, std::max<std::int64_t>(1, cfg.n_frames * 3 / 5)));
        double x = rng.uniform(w / 2, w_frame - w / 2);
        double y = rng.uniform(h / 2, h_frame - h / 2);
        const double speed = rng.uniform(cfg.speed_min, cfg.speed_max);
        const double angle = rng.uniform(-std::numbers::pi, std::numbers::pi);
        double vx = speed * std::cos(angle);
        double vy = 0.3 * speed * std::sin(angle);
        int segment_left = static_cast<int>(rng.uniform_int(cfg.segment_min, cfg.segment_max));
        for (int f = start; f <= cfg.n_frames; ++f) {
            if (f > start) {
                x += vx;
                y += vy;
                if (--segment_left <= 0) {
                    vx += cfg.jitter * speed * rng.normal();
                    vy += 0.3 * cfg.jitter * speed * rng.normal();
                    segment_left = static_cast<int>(rng.uniform_int(cfg.segment_min, cfg.segment_max));
                }
            }
            const bool centered = x >= 0.0 && x < w_frame && y >= 0.0 && y < h_frame;
            const bool on_screen = x + w / 2 > 0.0 && x - w / 2 < w_frame && y + h / 2 > 0.0 && y - h / 2 < h_frame;
            if (!on_screen) break;  // gone for good
            (centered ? scene.frames : scene.leaving)[static_cast<std::size_t>(f - 1)].push_back({id, {x, y, w, h}, 1.0});
        }
    }

    const BBox frame_box{w_frame / 2, h_frame / 2, w_frame, h_frame};
    for (std::size_t k = 0; k < scene.frames.size(); ++k) {
        auto& boxes = scene.frames[k];
        auto& leaving = scene.leaving[k];
        const auto by_id = [](const GtBox& a, const GtBox& b) { return a.id < b.id; };
        std::sort(boxes.begin(), boxes.end(), by_id);
        std::sort(leaving.begin(), leaving.end(), by_id);
        std::vector<GtBox> present(boxes);
        present.insert(present.end(), leaving.begin(), leaving.end());
        for (GtBox* g : [&] {
                 std::vector<GtBox*> all;
                 for (auto& b : boxes) all.push_back(&b);
                 for (auto& b : leaving) all.push_back(&b);
                 return all;
             }()) {
            std::vector<BBox> front(cfg.occluders.begin(), cfg.occluders.end());
            for (const auto& o : present) {
                if (scene.depth.at(o.id) > scene.depth.at(g->id)) front.push_back(o.bbox);
            }
            const double on_frame = intersection_area(g->bbox, frame_box);
            std::vector<BBox> clipped_front;
            for (const auto& b : front) {
                const double l = std::max(b.left(), 0.0), t = std::max(b.top(), 0.0);
                const double r = std::min(b.right(), w_frame), bt = std::min(b.bottom(), h_frame);
                if (r > l && bt > t) clipped_front.push_back(BBox::from_tlwh(l, t, r - l, bt - t));
            }
            const double hidden = detail::union_area(clipped_front, g->bbox);
            double vis = std::clamp((on_frame - hidden) / g->bbox.area(), 0.0, 1.0);
            if (vis < 1e-9) vis = 0.0;  // rounding left over from the area sums
            if (vis > 1.0 - 1e-9) vis = 1.0;
            g->visibility = vis;
        }
    }
    return scene;
}

/// Per-frame detections in ground-truth order, each duplicate right after its
/// object, then weak boxes on unannotated objects leaving the frame.
inline std::vector<std::vector<Detection>> inject_detector(const Scene& scene) {
    const SceneConfig& cfg = scene.config;
    const DetectorModel& det = cfg.detector;
    std::vector<std::vector<Detection>> out(scene.frames.size());
    for (std::size_t k = 0; k < scene.frames.size(); ++k) {
        Rng rng(derive_seed(cfg.seed, 0x444554, k));
        for (const auto& g : scene.frames[k]) {
            const bool occluded = g.visibility < det.occlusion_visibility;
            const bool missed = rng.bernoulli(occluded ? det.miss_rate_occluded : det.miss_rate_base);
            const double n0 = rng.normal(), n1 = rng.normal(), n2 = rng.normal(), n3 = rng.normal();
            const double cn = rng.normal();
            const bool clutter = rng.bernoulli(det.clutter_rate);
            const double c0 = rng.uniform(), c1 = rng.uniform(), c2 = rng.uniform(), c3 = rng.uniform();
            if (!missed) {
                Detection d;
                d.bbox = {g.bbox.cx + det.bbox_noise * n0, g.bbox.cy + det.bbox_noise * n1,
                          std::max(2.0, g.bbox.w + det.bbox_noise * n2), std::max(2.0, g.bbox.h + det.bbox_noise * n3)};
                d.confidence = std::clamp(0.95 * (0.4 + 0.6 * g.visibility) + det.confidence_noise * cn, 0.15, 1.0);
                out[k].push_back(std::move(d));
            }
            if (clutter) {
                // low-score near-duplicate of the object, as left over by non-maximum suppression
                Detection d;
                const double scale = 0.85 + 0.3 * c3;
                d.bbox = {g.bbox.cx + (c0 - 0.5) * 0.3 * g.bbox.w, g.bbox.cy + (c2 - 0.5) * 0.2 * g.bbox.h,
                          g.bbox.w * scale, g.bbox.h * scale};
                d.confidence = 0.01 + 0.089 * c1;
                out[k].push_back(std::move(d));
            }
        }
        for (const auto& g : scene.leaving[k]) {
            const bool missed = rng.bernoulli(det.miss_rate_base);
            const double n0 = rng.normal(), n1 = rng.normal(), n2 = rng.normal(), n3 = rng.normal();
            const double u = rng.uniform();
            if (missed || g.visibility <= 0.0) continue;
            Detection d;
            d.bbox = {g.bbox.cx + det.bbox_noise * n0, g.bbox.cy + det.bbox_noise * n1,
                      std::max(2.0, g.bbox.w + det.bbox_noise * n2), std::max(2.0, g.bbox.h + det.bbox_noise * n3)};
            d.confidence = 0.01 + (det.leaving_confidence_max - 0.01) * u;
            out[k].push_back(std::move(d));
        }
    }
    return out;
}

/// Analytic appearance field of a synthetic scene. The feature of a box is the
/// coverage-weighted mix of what is visible inside it: static occluders, objects
/// front to back, and background. Each object contributes a persistent identity
/// vector plus per-frame noise that grows as its visibility drops.
class SyntheticAppearance final : public AppearanceSource {
public:
    explicit SyntheticAppearance(std::shared_ptr<const Scene> scene) : scene_(std::move(scene)) {
        const SceneConfig& cfg = scene_->config;
        dim_ = cfg.feature_dim;
        background_ = unit_vector(derive_seed(cfg.seed, 0x424b47));
        for (std::size_t i = 0; i < cfg.occluders.size(); ++i) {
            occluder_vectors_.push_back(unit_vector(derive_seed(cfg.seed, 0x4f4343, i)));
        }
        for (const auto& [id, _] : scene_->depth) identity_[id] = unit_vector(derive_seed(cfg.seed, 0x494431, id));
    }

    int dim() const override { return dim_; }
    const Scene& scene() const { return *scene_; }

    FeatureVector at(FrameIndex frame, const BBox& box) const override {
        if (!box.valid()) throw InvalidInput("SyntheticAppearance: invalid box");
        const SceneConfig& cfg = scene_->config;
        struct Layer {
            BBox bbox;
            const FeatureVector* base;
            TrackId id;  // 0 for occluders
            double visibility;
        };
        std::vector<Layer> layers;
        for (std::size_t i = 0; i < cfg.occluders.size(); ++i) {
            if (intersection_area(box, cfg.occluders[i]) > 0.0) {
                layers.push_back({cfg.occluders[i], &occluder_vectors_[i], 0, 1.0});
            }
        }
        std::vector<const GtBox*> objs;
        if (frame >= scene_->first_frame() && frame <= scene_->last_frame()) {
            const auto k = static_cast<std::size_t>(frame - 1);
            for (const auto* list : {&scene_->frames[k], &scene_->leaving[k]}) {
                for (const auto& g : *list) {
                    if (intersection_area(box, g.bbox) > 0.0) objs.push_back(&g);
                }
            }
        }
        std::sort(objs.begin(), objs.end(), [&](const GtBox* a, const GtBox* b) {
            return scene_->depth.at(a->id) > scene_->depth.at(b->id);
        });
        for (const GtBox* g : objs) layers.push_back({g->bbox, &identity_.at(g->id), g->id, g->visibility});

        // Only the part of the box inside the frame can show objects.
        const double fl = std::max(box.left(), 0.0), ft = std::max(box.top(), 0.0);
        const double fr = std::min(box.right(), static_cast<double>(cfg.width));
        const double fb = std::min(box.bottom(), static_cast<double>(cfg.height));
        std::vector<double> acc(static_cast<std::size_t>(dim_), 0.0);
        double covered = 0.0;
        if (fr > fl && fb > ft) {
            const BBox clip = BBox::from_tlwh(fl, ft, fr - fl, fb - ft);
            std::vector<BBox> seen;
            for (const auto& layer : layers) {
                seen.push_back(layer.bbox);
                const double now = detail::union_area(seen, clip);
                const double weight = (now - covered) / box.area();
                covered = now;
                if (weight <= 0.0) continue;
                for (int i = 0; i < dim_; ++i) acc[static_cast<std::size_t>(i)] += weight * (*layer.base)[static_cast<std::size_t>(i)];
                if (layer.id != 0) {
                    const double amp = cfg.appearance_noise_floor + cfg.appearance_noise * (1.0 - layer.visibility);
                    Rng rng(derive_seed(cfg.seed, 0x4e4f4953, frame, layer.id));
                    const double s = amp / std::sqrt(static_cast<double>(dim_));
                    for (int i = 0; i < dim_; ++i) acc[static_cast<std::size_t>(i)] += weight * s * rng.normal();
                }
            }
        }
        const double bg = std::max(0.0, 1.0 - covered / box.area());
        FeatureVector out(static_cast<std::size_t>(dim_));
        for (int i = 0; i < dim_; ++i) {
            out[static_cast<std::size_t>(i)] =
                static_cast<float>(acc[static_cast<std::size_t>(i)] + bg * background_[static_cast<std::size_t>(i)]);
        }
        normalize_in_place(out);
        return out;
    }

private:
    FeatureVector unit_vector(std::uint64_t seed) const {
        Rng rng(seed);
        FeatureVector v(static_cast<std::size_t>(dim_));
        for (float& x : v) x = static_cast<float>(rng.normal());
        normalize_in_place(v);
        return v;
    }

    std::shared_ptr<const Scene> scene_;
    int dim_ = 0;
    FeatureVector background_;
    std::vector<FeatureVector> occluder_vectors_;
    std::map<TrackId, FeatureVector> identity_;
};

// ---------------------------------------------------------------------------
// Training samples

struct GtEntry {
    TrackId id = 0;
    BBox bbox;
    double visibility = 1.0;
    FeatureVector appearance;
};

/// Annotated boxes with appearance, indexed by frame and by identity.
struct TrainingDataset {
    std::map<FrameIndex, std::vector<GtEntry>> frames;
    std::map<TrackId, std::map<FrameIndex, std::size_t>> tracks;  // id -> frame -> index in frames[frame]

    void add(FrameIndex f, GtEntry e) {
        auto& v = frames[f];
        tracks[e.id][f] = v.size();
        v.push_back(std::move(e));
    }

    const GtEntry* find(TrackId id, FrameIndex f) const {
        const auto it = tracks.find(id);
        if (it == tracks.end()) return nullptr;
        const auto jt = it->second.find(f);
        if (jt == it->second.end()) return nullptr;
        return &frames.at(f)[jt->second];
    }
};

inline TrainingDataset make_dataset(const Scene& scene, const AppearanceSource& appearance) {
    TrainingDataset ds;
    for (FrameIndex f = scene.first_frame(); f <= scene.last_frame(); ++f) {
        for (const auto& g : scene.at(f)) ds.add(f, {g.id, g.bbox, g.visibility, appearance.at(f, g.bbox)});
    }
    return ds;
}

struct BuilderConfig {
    int z = 11;
    int max_gap = 10;      // frames between consecutive window observations
    int target_range = 20; // the target frame lies this many frames after the window at most
    int n_proposals = 5;
    double negative_iou = 0.5;  // negatives must overlap the positive less than this
    double p_no_positive = 0.15;
    double p_eliminate = 0.01;
    double p_drop_when_eliminating = 0.5;
    double p_alter = 0.01;  // per window observation
    double p_replace_given_alter = 0.5;
    double halluc_fraction = 0.05;
    NeighborhoodParams neighborhood;
};

enum class TargetKind { Proposal, Miss, Halluc };

struct TrainingSample {
    TrackId identity = 0;
    std::vector<Observation> window;
    std::vector<TrackId> window_ids;  // identity behind each window observation
    FrameIndex target_frame = 0;
    std::vector<Observation> proposals;
    std::vector<TrackId> proposal_ids;
    TargetKind target = TargetKind::Miss;
    int target_index = -1;  // into proposals when target == Proposal

    // What the random draws did, for bookkeeping and tests.
    int window_drawn = 0;
    int altered = 0;
    int replaced = 0;
    bool no_positive_branch = false;
    bool elimination_branch = false;
};

/// Randomness used by the builder; replaceable so tests can force branches.
struct BuilderDraws {
    std::function<bool()> no_positive;
    std::function<bool()> eliminate;
    std::function<bool()> drop_proposal;
    std::function<bool()> alter;
    std::function<bool()> replace;
};

inline BuilderDraws default_draws(Rng& rng, const BuilderConfig& cfg) {
    return {[&rng, p = cfg.p_no_positive] { return rng.bernoulli(p); },
            [&rng, p = cfg.p_eliminate] { return rng.bernoulli(p); },
            [&rng, p = cfg.p_drop_when_eliminating] { return rng.bernoulli(p); },
            [&rng, p = cfg.p_alter] { return rng.bernoulli(p); },
            [&rng, p = cfg.p_replace_given_alter] { return rng.bernoulli(p); }};
}

/// Draws one training sample: a track window of one identity, a later target
/// frame, and nearby annotated objects as proposals.
inline TrainingSample build_training_sample(const TrainingDataset& ds, Rng& rng, const BuilderConfig& cfg,
                                            const BuilderDraws& draws) {
    std::vector<TrackId> eligible;
    for (const auto& [id, frames] : ds.tracks) {
        if (static_cast<int>(frames.size()) > cfg.z) eligible.push_back(id);
    }
    if (ds.tracks.size() < 2 || eligible.empty()) {
        throw InvalidInput("build_training_sample: dataset needs at least two identities and one long enough track");
    }

    for (int attempt = 0; attempt < 10000; ++attempt) {
        const TrackId id = eligible[rng.uniform_int(eligible.size())];
        const auto& life = ds.tracks.at(id);
        std::vector<FrameIndex> offsets{0};
        for (int i = 1; i < cfg.z; ++i) offsets.push_back(offsets.back() + rng.uniform_int(1, cfg.max_gap));
        const FrameIndex first = life.begin()->first;
        const FrameIndex last = life.rbegin()->first;
        if (first + offsets.back() + 1 > last) continue;
        const FrameIndex start = rng.uniform_int(first, last - offsets.back() - 1);
        bool ok = true;
        for (auto o : offsets) ok = ok && life.contains(start + o);
        if (!ok) continue;
        const FrameIndex t_last = start + offsets.back();
        std::vector<FrameIndex> targets;
        for (int d = 1; d <= cfg.target_range; ++d) {
            if (life.contains(t_last + d)) targets.push_back(t_last + d);
        }
        if (targets.empty()) continue;
        const FrameIndex t_target = targets[rng.uniform_int(targets.size())];

        TrainingSample s;
        s.identity = id;
        s.target_frame = t_target;
        s.window_drawn = cfg.z;
        for (auto o : offsets) {
            const FrameIndex f = start + o;
            const GtEntry* e = ds.find(id, f);
            Observation obs{e->bbox, f, e->appearance, ObservationSource::Detector};
            TrackId owner = id;
            if (draws.alter()) {
                ++s.altered;
                const GtEntry* other = nullptr;
                if (draws.replace()) {
                    double best = std::numeric_limits<double>::infinity();
                    for (const auto& cand : ds.frames.at(f)) {
                        if (cand.id == id) continue;
                        const double dist = neighbor_distance(e->bbox, cand.bbox);
                        if (dist < best) {
                            best = dist;
                            other = &cand;
                        }
                    }
                }
                if (!other) continue;  // removed
                ++s.replaced;
                obs = {other->bbox, f, other->appearance, ObservationSource::Detector};
                owner = other->id;
            }
            s.window.push_back(std::move(obs));
            s.window_ids.push_back(owner);
        }
        if (s.window.empty()) continue;

        const int foreign = static_cast<int>(std::count_if(s.window_ids.begin(), s.window_ids.end(),
                                                           [&](TrackId o) { return o != id; }));
        const bool corrupted = static_cast<double>(foreign) >= cfg.halluc_fraction * static_cast<double>(s.window.size()) &&
                               foreign > 0;

        const BBox anchor = s.window.back().bbox;
        const GtEntry* positive = ds.find(id, t_target);
        s.no_positive_branch = draws.no_positive();
        const double radius = neighbor_radius(anchor, cfg.neighborhood);
        std::vector<std::pair<double, const GtEntry*>> near;
        for (const auto& cand : ds.frames.at(t_target)) {
            if (cand.id == id) continue;
            const double dist = neighbor_distance(anchor, cand.bbox);
            if (dist >= radius) continue;
            if (iou(cand.bbox, positive->bbox) >= cfg.negative_iou) continue;
            near.emplace_back(dist, &cand);
        }
        std::sort(near.begin(), near.end(), [](const auto& a, const auto& b) {
            return a.first != b.first ? a.first < b.first : a.second->id < b.second->id;
        });
        const std::size_t n_neg = static_cast<std::size_t>(cfg.n_proposals - (s.no_positive_branch ? 0 : 1));
        std::vector<const GtEntry*> chosen;
        for (std::size_t i = 0; i < near.size() && i < n_neg; ++i) chosen.push_back(near[i].second);
        if (!s.no_positive_branch) chosen.push_back(positive);
        rng.shuffle(chosen);

        s.elimination_branch = draws.eliminate();
        for (const GtEntry* g : chosen) {
            if (s.elimination_branch && draws.drop_proposal()) continue;
            if (g == positive) s.target_index = static_cast<int>(s.proposals.size());
            s.proposals.push_back({g->bbox, t_target, g->appearance, ObservationSource::Detector});
            s.proposal_ids.push_back(g->id);
        }

        // With no usable positive [Miss.] is the answer; otherwise a corrupted window is [Halluc.].
        if (s.target_index < 0) {
            s.target = TargetKind::Miss;
        } else if (corrupted) {
            s.target = TargetKind::Halluc;
        } else {
            s.target = TargetKind::Proposal;
        }
        return s;
    }
    throw InvalidInput("build_training_sample: no identity admits a valid window");
}

inline TrainingSample build_training_sample(const TrainingDataset& ds, Rng& rng, const BuilderConfig& cfg = {}) {
    return build_training_sample(ds, rng, cfg, default_draws(rng, cfg));
}

/// Model input and label for a sample. Empty when the label has no
/// representation under the toggles (e.g. a [Miss.] target with the token disabled).
inline std::optional<LabeledSequence> to_labeled_sequence(const TrainingSample& s, const ModelConfig& model,
                                                          const SteConfig& ste, const ProposalToggles& toggles) {
    std::vector<Proposal> props;
    for (const auto& p : s.proposals) {
        Proposal q;
        q.kind = ProposalKind::Contextual;
        q.bbox = p.bbox;
        q.t = p.t;
        q.embedding = p.appearance;
        detail::push_with_sep(props, std::move(q));
    }
    const Observation& last = s.window.back();
    int miss_index = -1, halluc_index = -1;
    const int n = static_cast<int>(s.proposals.size());
    if (toggles.mss) {
        Proposal miss;
        miss.kind = ProposalKind::LearnedMiss;
        miss.bbox = last.bbox;
        miss.t = last.t;
        detail::push_with_sep(props, std::move(miss));
        miss_index = n;
    }
    if (toggles.hlc) {
        Proposal h;
        h.kind = ProposalKind::LearnedHalluc;
        h.bbox = last.bbox;
        h.t = last.t;
        h.saturated = true;
        detail::push_with_sep(props, std::move(h));
        halluc_index = n + (toggles.mss ? 1 : 0);
    }
    int target = -1;
    switch (s.target) {
        case TargetKind::Proposal: target = s.target_index; break;
        case TargetKind::Miss: target = miss_index; break;
        case TargetKind::Halluc: target = halluc_index >= 0 ? halluc_index : s.target_index; break;
    }
    if (target < 0) return std::nullopt;
    SteConfig ste_cfg = ste;
    ste_cfg.d_model = model.d_model;
    LabeledSequence out;
    out.tokens = assemble(s.window, props, Anchor::from(last.bbox, last.t), model, ste_cfg, toggles.ste);
    out.target = target;
    if (out.tokens.choices() < 2) return std::nullopt;
    return out;
}

}  // namespace busca
