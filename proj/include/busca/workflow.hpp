#pragma once

// End-to-end helpers shared by the command-line tool and the acceptance runs:
// training data from synthetic scenes, model training and sequence tracking.

#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <vector>

#include "busca/config.hpp"
#include "busca/synth.hpp"
#include "busca/tracker.hpp"
#include "busca/transformer/train.hpp"

namespace busca {

/// Appends `other` with identities and frames shifted so they never collide with `into`.
inline void merge_dataset(TrainingDataset& into, const TrainingDataset& other) {
    TrackId id_shift = 0;
    FrameIndex frame_shift = 0;
    if (!into.tracks.empty()) id_shift = into.tracks.rbegin()->first;
    if (!into.frames.empty()) frame_shift = into.frames.rbegin()->first + 1000;
    for (const auto& [f, entries] : other.frames) {
        for (GtEntry e : entries) {
            e.id += id_shift;
            into.add(f + frame_shift, std::move(e));
        }
    }
}

/// Scene used for training set `k`; never the benchmark scene of the same seed.
inline SceneConfig training_scene_config(const RunConfig& cfg, int k) {
    SceneConfig sc = cfg.scene;
    sc.seed = derive_seed(cfg.seed, 0x5452534e, k);
    return sc;
}

inline TrainingDataset synthetic_training_dataset(const RunConfig& cfg) {
    TrainingDataset ds;
    for (int k = 0; k < cfg.train_scenes; ++k) {
        auto scene = std::make_shared<Scene>(generate_scene(training_scene_config(cfg, k)));
        SyntheticAppearance appearance(scene);
        merge_dataset(ds, make_dataset(*scene, appearance));
    }
    return ds;
}

struct SequenceDraw {
    std::vector<LabeledSequence> sequences;
    long miss_targets = 0;
    long halluc_targets = 0;
    long skipped = 0;  // labels without a representation under the toggles
};

/// Draws `n` usable labelled sequences from the builder.
inline SequenceDraw draw_sequences(const TrainingDataset& ds, int n, const RunConfig& cfg, std::uint64_t seed) {
    SequenceDraw out;
    Rng rng(seed);
    while (static_cast<int>(out.sequences.size()) < n) {
        const TrainingSample s = build_training_sample(ds, rng, cfg.builder);
        auto seq = to_labeled_sequence(s, cfg.model, cfg.tracker.ste, cfg.tracker.toggles);
        if (!seq) {
            ++out.skipped;
            if (out.skipped > 100L * n + 1000) {
                throw InvalidInput("draw_sequences: the toggles leave almost no representable labels");
            }
            continue;
        }
        out.miss_targets += s.target == TargetKind::Miss;
        out.halluc_targets += s.target == TargetKind::Halluc;
        out.sequences.push_back(std::move(*seq));
    }
    return out;
}

struct TrainingRun {
    TrainResult<float> result;
    double train_accuracy = 0.0;
    double holdout_accuracy = 0.0;
    std::size_t train_size = 0;
    std::size_t holdout_size = 0;
};

/// Trains on `train.samples` sequences and reports accuracy on a further
/// `train.holdout_fraction * train.samples` sequences from an independent stream.
inline TrainingRun train_model(const TrainingDataset& ds, const RunConfig& cfg,
                               const std::function<void(int, double)>& on_epoch = {}) {
    const SequenceDraw draw = draw_sequences(ds, cfg.train_samples, cfg, derive_seed(cfg.seed, 0x53414d50));
    const int n_held = static_cast<int>(std::lround(cfg.holdout_fraction * cfg.train_samples));
    const SequenceDraw held = n_held > 0 ? draw_sequences(ds, n_held, cfg, derive_seed(cfg.seed, 0x484f4c44)) : SequenceDraw{};
    TrainingRun run{train(draw.sequences, init_model<float>(cfg.model, derive_seed(cfg.seed, 0x494e4954)), cfg.train,
                          on_epoch),
                    0.0, 0.0, draw.sequences.size(), held.sequences.size()};
    run.train_accuracy = accuracy(run.result.model, draw.sequences);
    run.holdout_accuracy = held.sequences.empty() ? 0.0 : accuracy(run.result.model, held.sequences);
    return run;
}

/// Runs the tracker over frames first..last; frames without detections are still stepped.
inline std::vector<FrameResult> track_sequence(const TrackerConfig& cfg,
                                               const std::map<FrameIndex, std::vector<Detection>>& detections,
                                               FrameIndex first, FrameIndex last, const AppearanceSource* appearance,
                                               const DecisionModel<float>* model) {
    Tracker tracker(cfg, model);
    std::vector<FrameResult> out;
    static const std::vector<Detection> none;
    for (FrameIndex f = first; f <= last; ++f) {
        const auto it = detections.find(f);
        out.push_back(tracker.step(f, it == detections.end() ? none : it->second, appearance));
    }
    return out;
}

/// Detections of a synthetic scene with appearance filled in from its field.
inline std::map<FrameIndex, std::vector<Detection>> scene_detections(const Scene& scene,
                                                                     const AppearanceSource& appearance) {
    std::map<FrameIndex, std::vector<Detection>> out;
    const auto per_frame = inject_detector(scene);
    for (std::size_t k = 0; k < per_frame.size(); ++k) {
        const FrameIndex f = static_cast<FrameIndex>(k) + 1;
        auto& v = out[f];
        for (Detection d : per_frame[k]) {
            d.appearance = appearance.at(f, d.bbox);
            v.push_back(std::move(d));
        }
    }
    return out;
}

inline FrameBoxes scene_ground_truth(const Scene& scene) {
    FrameBoxes gt;
    for (FrameIndex f = scene.first_frame(); f <= scene.last_frame(); ++f) {
        auto& v = gt[f];
        v = scene.at(f);
    }
    return gt;
}

}  // namespace busca
