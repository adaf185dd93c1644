#include <gtest/gtest.h>

#include <set>

#include "busca/mot_io.hpp"
#include "busca/synth.hpp"
#include "busca/tracker.hpp"
#include "busca/workflow.hpp"
#include "scene_fixtures.hpp"
#include "test_support.hpp"

using namespace busca;

namespace {

constexpr int kDim = 4;

class FlatAppearance final : public AppearanceSource {
public:
    int dim() const override { return kDim; }
    FeatureVector at(FrameIndex, const BBox&) const override { return {0.5f, 0.5f, 0.5f, 0.5f}; }
};

Detection det(double cx, double cy, double conf = 0.9) {
    return {{cx, cy, 20, 40}, conf, FeatureVector(kDim, 0.5f)};
}

ModelConfig busca_model_config() {
    ModelConfig c;
    c.d_model = 12;
    c.n_layers = 1;
    c.n_heads = 2;
    c.ffn_dim = 8;
    c.feature_dim = kDim;
    return c;
}

Decision always(ProposalKind pick) {
    return [pick] {
        Decision d;
        d.kinds = {pick};
        d.probabilities = {1.0};
        d.logits = {0.0};
        d.argmax = 0;
        d.argmax_kind = pick;
        d.outcome = pick == ProposalKind::Candidate ? DecisionOutcome::UpdateWithCandidate : DecisionOutcome::Pause;
        return d;
    }();
}

std::vector<TrackId> ids(const FrameResult& r) {
    std::vector<TrackId> out;
    for (const auto& e : r.entries) out.push_back(e.id);
    return out;
}

// One object moving right, undetected at frame `gap`.
std::vector<FrameResult> run_gap(Tracker& tracker, int frames, int gap, const AppearanceSource* app) {
    std::vector<FrameResult> out;
    for (int f = 1; f <= frames; ++f) {
        std::vector<Detection> d;
        if (f != gap) d.push_back(det(100.0 + 3.0 * f, 100.0));
        out.push_back(tracker.step(f, d, app));
    }
    return out;
}

std::vector<FrameResult> run_scene(const TrackerConfig& cfg, const std::map<FrameIndex, std::vector<Detection>>& dets,
                                   FrameIndex last, const AppearanceSource* app, const DecisionModel<float>* model) {
    return track_sequence(cfg, dets, 1, last, app, model);
}

}  // namespace

TEST(Associate, NoDetections) {
    const std::vector<TrackView> views{{1, {10, 10, 5, 5}, TrackState::Active}, {2, {50, 50, 5, 5}, TrackState::Paused}};
    const AssignmentSet a = associate(std::vector<Detection>{}, views, TrackerConfig{});
    EXPECT_TRUE(a.pairs.empty());
    EXPECT_EQ(a.unmatched_tracks, (std::vector<TrackId>{1, 2}));
}

TEST(Associate, ExactOverlap) {
    const std::vector<TrackView> views{{4, {10, 10, 5, 5}, TrackState::Active}};
    const std::vector<Detection> dets{{{10, 10, 5, 5}, 0.9, {}}};
    const AssignmentSet a = associate(dets, views, TrackerConfig{});
    EXPECT_EQ(a.pairs, (std::vector<std::pair<TrackId, int>>{{4, 0}}));
    EXPECT_TRUE(a.unmatched_tracks.empty());
    EXPECT_TRUE(a.unmatched_detections.empty());
}

TEST(Associate, ThreeByThreeMatchesEnumeration) {
    Rng rng(21);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<TrackView> views;
        std::vector<Detection> dets;
        for (int i = 0; i < 3; ++i) {
            const double x = rng.uniform(0, 60), y = rng.uniform(0, 60);
            views.push_back({i + 1, {x, y, 20, 20}, TrackState::Active});
            dets.push_back({{x + rng.normal(0, 6), y + rng.normal(0, 6), 20 * rng.uniform(0.8, 1.2), 20}, 0.9, {}});
        }
        const AssignmentSet a = associate(dets, views, TrackerConfig{});
        Eigen::MatrixXd c(3, 3);
        for (int i = 0; i < 3; ++i) {
            for (int j = 0; j < 3; ++j) c(i, j) = 1.0 - iou(views[static_cast<std::size_t>(i)].predicted, dets[static_cast<std::size_t>(j)].bbox);
        }
        const auto want = busca::testing::brute_force_assignment(c, 0.7);
        double total = 0.0;
        for (const auto& [id, j] : a.pairs) total += c(id - 1, j);
        ASSERT_EQ(static_cast<int>(a.pairs.size()), want.pairs);
        ASSERT_NEAR(total, want.cost, 1e-12);
    }
}

TEST(Associate, SecondRoundUsesLowScoresForActiveTracksOnly) {
    const std::vector<TrackView> views{{1, {10, 10, 20, 20}, TrackState::Active},
                                       {2, {100, 10, 20, 20}, TrackState::Paused}};
    const std::vector<Detection> dets{{{11, 10, 20, 20}, 0.3, {}}, {{101, 10, 20, 20}, 0.3, {}}};
    const AssignmentSet a = associate(dets, views, TrackerConfig{});
    EXPECT_EQ(a.pairs, (std::vector<std::pair<TrackId, int>>{{1, 0}}));
    EXPECT_EQ(a.unmatched_tracks, (std::vector<TrackId>{2}));
    EXPECT_EQ(a.unmatched_detections, (std::vector<int>{1}));
}

TEST(Step, BirthsAndIds) {
    Tracker t(TrackerConfig{});
    const auto r = t.step(1, std::vector<Detection>{det(10, 10), det(100, 10), det(200, 10), det(300, 10, 0.5)});
    EXPECT_EQ(ids(r), (std::vector<TrackId>{1, 2, 3}));
    for (const auto& e : r.entries) EXPECT_FALSE(e.recovered);
}

TEST(Step, FramesMustIncrease) {
    Tracker t(TrackerConfig{});
    t.step(5, std::vector<Detection>{});
    EXPECT_THROW(t.step(5, std::vector<Detection>{}), InvalidInput);
    EXPECT_THROW(t.step(3, std::vector<Detection>{}), InvalidInput);
    EXPECT_NO_THROW(t.step(9, std::vector<Detection>{}));
}

TEST(Step, ConfigurationErrors) {
    TrackerConfig cfg;
    cfg.recovery = RecoveryKind::Busca;
    EXPECT_THROW(Tracker{cfg}, InvalidInput);
    cfg.recovery = RecoveryKind::Mixed;
    Tracker mixed(cfg);
    EXPECT_THROW(mixed.step(1, std::vector<Detection>{}), InvalidInput);
    cfg.det_thresh_high = 1.5;
    EXPECT_THROW(Tracker{cfg}, InvalidInput);
    EXPECT_THROW(parse_recovery("sometimes"), InvalidInput);
    for (auto k : {RecoveryKind::None, RecoveryKind::LowerDetection, RecoveryKind::Iou, RecoveryKind::Mixed,
                   RecoveryKind::Busca}) {
        EXPECT_EQ(parse_recovery(to_string(k)), k);
    }
}

TEST(Step, BaselineLeavesAGap) {
    Tracker t(TrackerConfig{});
    const auto out = run_gap(t, 8, 5, nullptr);
    EXPECT_TRUE(out[4].entries.empty());
    EXPECT_EQ(ids(out[5]), (std::vector<TrackId>{1}));
}

TEST(Step, AcceptingDeciderBridgesTheGap) {
    TrackerConfig cfg;
    cfg.recovery = RecoveryKind::Busca;
    cfg.z = 1;
    Tracker t(cfg, busca_model_config(), [](const TokenSequence&) { return always(ProposalKind::Candidate); });
    const FlatAppearance app;
    const auto out = run_gap(t, 8, 5, &app);
    for (const auto& r : out) ASSERT_EQ(ids(r), (std::vector<TrackId>{1})) << "frame " << r.frame;
    EXPECT_TRUE(out[4].entries[0].recovered);
    EXPECT_FALSE(out[5].entries[0].recovered);
    const auto& tr = t.tracks().front();
    for (std::size_t i = 1; i < tr.history.size(); ++i) EXPECT_LT(tr.history[i - 1].t, tr.history[i].t);
}

TEST(Step, RefusingDeciderPauses) {
    TrackerConfig cfg;
    cfg.recovery = RecoveryKind::Busca;
    cfg.z = 1;
    for (auto pick : {ProposalKind::LearnedMiss, ProposalKind::LearnedHalluc, ProposalKind::Contextual}) {
        Tracker t(cfg, busca_model_config(), [pick](const TokenSequence&) { return always(pick); });
        const FlatAppearance app;
        const auto out = run_gap(t, 8, 5, &app);
        EXPECT_TRUE(out[4].entries.empty());
        EXPECT_EQ(ids(out[5]), (std::vector<TrackId>{1}));
    }
}

TEST(Step, ShortTracksSkipTheDecider) {
    TrackerConfig cfg;
    cfg.recovery = RecoveryKind::Busca;
    cfg.z = 11;
    int calls = 0;
    Tracker t(cfg, busca_model_config(), [&](const TokenSequence&) {
        ++calls;
        return always(ProposalKind::Candidate);
    });
    const FlatAppearance app;
    const auto out = run_gap(t, 8, 5, &app);
    EXPECT_EQ(calls, 0);
    EXPECT_TRUE(out[4].entries.empty());
}

TEST(Step, DeciderSeesTheFullToken) {
    TrackerConfig cfg;
    cfg.recovery = RecoveryKind::Busca;
    cfg.z = 3;
    TokenSequence seen;
    Tracker t(cfg, busca_model_config(), [&](const TokenSequence& s) {
        seen = s;
        return always(ProposalKind::Candidate);
    });
    const FlatAppearance app;
    run_gap(t, 6, 5, &app);
    // 3 window observations, then candidate, Miss and Halluc each with a delimiter
    EXPECT_EQ(seen.size(), 9);
    EXPECT_EQ(seen.choices(), 3);
}

TEST(Step, KalmanUpdateFlag) {
    for (bool update : {false, true}) {
        TrackerConfig cfg;
        cfg.recovery = RecoveryKind::Busca;
        cfg.z = 1;
        cfg.busca_updates_kalman = update;
        Tracker t(cfg, busca_model_config(), [](const TokenSequence&) { return always(ProposalKind::Candidate); });
        const FlatAppearance app;
        run_gap(t, 5, 5, &app);
        const auto& tr = t.tracks().front();
        // a filter update shrinks the position variance below the pure prediction
        Tracker ref(TrackerConfig{});
        run_gap(ref, 5, 5, nullptr);
        const double predicted_var = ref.tracks().front().motion.covariance(0, 0);
        if (update) {
            EXPECT_LT(tr.motion.covariance(0, 0), predicted_var);
        } else {
            EXPECT_DOUBLE_EQ(tr.motion.covariance(0, 0), predicted_var);
        }
    }
}

TEST(Step, LowerDetectionUsesLeftoverBoxes) {
    TrackerConfig cfg;
    cfg.recovery = RecoveryKind::LowerDetection;
    Tracker ld(cfg);
    Tracker none(TrackerConfig{});
    for (int f = 1; f <= 6; ++f) {
        // At frame 5 only a weak box below the second-round threshold remains.
        std::vector<Detection> d{f == 5 ? det(100.0 + 3.0 * f, 100.0, 0.05) : det(100.0 + 3.0 * f, 100.0)};
        const auto a = ld.step(f, d);
        const auto b = none.step(f, d);
        if (f == 5) {
            EXPECT_EQ(ids(a), (std::vector<TrackId>{1}));
            EXPECT_FALSE(a.entries[0].recovered);
            EXPECT_TRUE(b.entries.empty());
        }
    }
}

TEST(Step, IouRecoveryAcceptsTheCandidate) {
    TrackerConfig cfg;
    cfg.recovery = RecoveryKind::Iou;
    Tracker t(cfg);
    const auto out = run_gap(t, 8, 5, nullptr);
    ASSERT_EQ(ids(out[4]), (std::vector<TrackId>{1}));
    EXPECT_TRUE(out[4].entries[0].recovered);
}

TEST(Step, MixedRecoveryNeedsAppearanceAgreement) {
    TrackerConfig cfg;
    cfg.recovery = RecoveryKind::Mixed;
    Tracker t(cfg);
    const FlatAppearance app;
    const auto out = run_gap(t, 8, 5, &app);
    ASSERT_EQ(ids(out[4]), (std::vector<TrackId>{1}));
    EXPECT_TRUE(out[4].entries[0].recovered);
}

TEST(Step, PausedTracksTerminateAfterMaxAge) {
    TrackerConfig cfg;
    cfg.max_age = 3;
    Tracker t(cfg);
    t.step(1, std::vector<Detection>{det(100, 100)});
    // unmatched in frames 2..4 is allowed, a fourth miss ends it
    for (int f = 2; f <= 4; ++f) t.step(f, std::vector<Detection>{});
    EXPECT_EQ(t.tracks().size(), 1u);
    t.step(5, std::vector<Detection>{});
    EXPECT_TRUE(t.tracks().empty());
    const auto r = t.step(6, std::vector<Detection>{det(100, 100)});
    EXPECT_EQ(ids(r), (std::vector<TrackId>{2}));
}

TEST(Step, PausedTrackResumesWithItsId) {
    Tracker t(TrackerConfig{});
    t.step(1, std::vector<Detection>{det(100, 100)});
    t.step(2, std::vector<Detection>{});
    t.step(3, std::vector<Detection>{});
    const auto r = t.step(4, std::vector<Detection>{det(100, 100)});
    EXPECT_EQ(ids(r), (std::vector<TrackId>{1}));
}

class SceneRuns : public ::testing::Test {
protected:
    void SetUp() override {
        SceneConfig sc;
        sc.n_objects = 10;
        sc.n_frames = 120;
        sc.feature_dim = 8;
        sc.seed = 3;
        scene = std::make_shared<Scene>(generate_scene(sc));
        appearance = std::make_unique<SyntheticAppearance>(scene);
        dets = scene_detections(*scene, *appearance);
        model_cfg = busca_model_config();
        model_cfg.feature_dim = 8;
        model = init_model<float>(model_cfg, 4);
        cfg.frame_width = sc.width;
        cfg.frame_height = sc.height;
        cfg.ste.d_model = model_cfg.d_model;
    }

    std::shared_ptr<Scene> scene;
    std::unique_ptr<SyntheticAppearance> appearance;
    std::map<FrameIndex, std::vector<Detection>> dets;
    ModelConfig model_cfg;
    DecisionModel<float> model;
    TrackerConfig cfg;
};

TEST_F(SceneRuns, OutputsAreDeterministicAndWellFormed) {
    for (auto k : {RecoveryKind::None, RecoveryKind::LowerDetection, RecoveryKind::Iou, RecoveryKind::Mixed,
                   RecoveryKind::Busca}) {
        cfg.recovery = k;
        cfg.z = 3;
        const auto* m = k == RecoveryKind::Busca ? &model : nullptr;
        const auto a = run_scene(cfg, dets, scene->last_frame(), appearance.get(), m);
        const auto b = run_scene(cfg, dets, 10, appearance.get(), m);
        EXPECT_EQ(format_results(a), format_results(run_scene(cfg, dets, scene->last_frame(), appearance.get(), m)));
        std::set<TrackId> seen_ids;
        TrackId max_seen = 0;
        std::map<TrackId, FrameIndex> last_seen;
        for (const auto& r : a) {
            std::set<TrackId> frame_ids;
            for (const auto& e : r.entries) {
                ASSERT_TRUE(frame_ids.insert(e.id).second) << "duplicate id in frame " << r.frame;
                ASSERT_TRUE(e.bbox.valid());
                if (!seen_ids.contains(e.id)) {
                    ASSERT_GT(e.id, max_seen) << "id reused";
                    max_seen = e.id;
                    seen_ids.insert(e.id);
                }
            }
        }
        EXPECT_EQ(format_results(a).rfind(format_results(b), 0), 0u) << to_string(k);
    }
}

TEST_F(SceneRuns, PerfectDetectorMakesRecoveryIrrelevant) {
    const auto perfect = busca::testing::perfect_detections(*scene, *appearance);
    cfg.recovery = RecoveryKind::None;
    const std::string base = format_results(run_scene(cfg, perfect, scene->last_frame(), appearance.get(), nullptr));
    EXPECT_FALSE(base.empty());
    for (auto k : {RecoveryKind::LowerDetection, RecoveryKind::Iou, RecoveryKind::Mixed, RecoveryKind::Busca}) {
        cfg.recovery = k;
        cfg.z = 1;
        const auto* m = k == RecoveryKind::Busca ? &model : nullptr;
        EXPECT_EQ(format_results(run_scene(cfg, perfect, scene->last_frame(), appearance.get(), m)), base)
            << to_string(k);
    }
}
