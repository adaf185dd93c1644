#pragma once

// Flat "key = value" run configuration. Dotted keys address every tunable of
// the scene, tracker, model, training and sample builder. '#' starts a comment.
// Unknown keys are rejected. BUSCA_SEED in the environment overrides `seed`.

#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "busca/core.hpp"
#include "busca/synth.hpp"
#include "busca/tracker.hpp"
#include "busca/transformer/model.hpp"
#include "busca/transformer/train.hpp"

namespace busca {

struct RunConfig {
    std::uint64_t seed = 7;
    SceneConfig scene;
    TrackerConfig tracker;
    ModelConfig model;
    TrainConfig train;
    BuilderConfig builder;
    int train_samples = 5000;       // training sequences drawn by `train`
    double holdout_fraction = 0.2;  // extra sequences, relative to train_samples, for held-out accuracy
    int train_scenes = 4;         // synthetic scenes generated when `train` has no --data
};

/// Configuration sized for desk-scale runs: a reduced model over 64-d
/// synthetic features and a faster learning schedule.
inline RunConfig desk_defaults() {
    RunConfig c;
    c.model.d_model = 96;
    c.model.n_layers = 2;
    c.model.n_heads = 4;
    c.model.ffn_dim = 192;
    c.model.feature_dim = 64;
    c.scene.feature_dim = 64;
    c.train.learning_rate = 1e-3;
    c.train.batch_size = 32;
    c.train.lr_drop_epoch = 20;
    return c;
}

struct ConfigKey {
    std::string key;
    std::string doc;
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, std::string_view)> set;
};

namespace detail {

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

template <class T>
T parse_value(std::string_view text) {
    const std::string s = trim(text);
    if constexpr (std::is_same_v<T, bool>) {
        if (s == "true" || s == "1" || s == "on" || s == "yes") return true;
        if (s == "false" || s == "0" || s == "off" || s == "no") return false;
        throw InvalidInput("expected a boolean, got '" + s + "'");
    } else {
        T v{};
        const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size()) {
            throw InvalidInput("expected a number, got '" + s + "'");
        }
        return v;
    }
}

template <class T>
std::string show_value(const T& v) {
    if constexpr (std::is_same_v<T, bool>) {
        return v ? "true" : "false";
    } else {
        char buf[64];
        const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
        return std::string(buf, ptr);
    }
}

template <class T, class Access>
ConfigKey bind(std::string key, std::string doc, Access access) {
    return {std::move(key), std::move(doc),
            [access](const RunConfig& c) { return show_value<T>(access(const_cast<RunConfig&>(c))); },
            [access](RunConfig& c, std::string_view v) { access(c) = parse_value<T>(v); }};
}

// "cx:cy:w:h;cx:cy:w:h"
inline std::vector<BBox> parse_boxes(std::string_view text) {
    std::vector<BBox> out;
    std::string s = trim(text);
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ';')) {
        if (trim(item).empty()) continue;
        std::stringstream is(item);
        std::string part;
        std::vector<double> v;
        while (std::getline(is, part, ':')) v.push_back(parse_value<double>(part));
        if (v.size() != 4 || !(v[2] > 0.0) || !(v[3] > 0.0)) {
            throw InvalidInput("expected boxes as cx:cy:w:h separated by ';', got '" + item + "'");
        }
        out.push_back({v[0], v[1], v[2], v[3]});
    }
    return out;
}

inline std::string show_boxes(const std::vector<BBox>& boxes) {
    std::string out;
    for (const auto& b : boxes) {
        if (!out.empty()) out += ";";
        out += show_value(b.cx) + ":" + show_value(b.cy) + ":" + show_value(b.w) + ":" + show_value(b.h);
    }
    return out;
}

}  // namespace detail

#define BUSCA_KEY(T, name, expr, doc) detail::bind<T>(name, doc, [](RunConfig& c) -> T& { return expr; })

inline const std::vector<ConfigKey>& config_keys() {
    static const std::vector<ConfigKey> keys = [] {
        std::vector<ConfigKey> k{
            BUSCA_KEY(std::uint64_t, "seed", c.seed, "master seed for scenes, sampling and training"),
            BUSCA_KEY(int, "scene.width", c.scene.width, "frame width in pixels"),
            BUSCA_KEY(int, "scene.height", c.scene.height, "frame height in pixels"),
            BUSCA_KEY(int, "scene.n_objects", c.scene.n_objects, "objects in the synthetic scene"),
            BUSCA_KEY(int, "scene.n_frames", c.scene.n_frames, "frames in the synthetic scene"),
            BUSCA_KEY(double, "scene.speed_min", c.scene.speed_min, "minimum object speed, px/frame"),
            BUSCA_KEY(double, "scene.speed_max", c.scene.speed_max, "maximum object speed, px/frame"),
            BUSCA_KEY(double, "scene.jitter", c.scene.jitter, "relative velocity change between segments"),
            BUSCA_KEY(int, "scene.segment_min", c.scene.segment_min, "shortest linear segment, frames"),
            BUSCA_KEY(int, "scene.segment_max", c.scene.segment_max, "longest linear segment, frames"),
            BUSCA_KEY(double, "scene.height_min", c.scene.height_min, "smallest object height, px"),
            BUSCA_KEY(double, "scene.height_max", c.scene.height_max, "largest object height, px"),
            BUSCA_KEY(int, "scene.feature_dim", c.scene.feature_dim, "synthetic appearance dimension"),
            BUSCA_KEY(double, "scene.appearance_noise", c.scene.appearance_noise,
                      "appearance noise added in proportion to occlusion"),
            BUSCA_KEY(double, "scene.appearance_noise_floor", c.scene.appearance_noise_floor,
                      "appearance noise at full visibility"),
            BUSCA_KEY(double, "detector.miss_rate_base", c.scene.detector.miss_rate_base,
                      "miss probability of a visible object"),
            BUSCA_KEY(double, "detector.miss_rate_occluded", c.scene.detector.miss_rate_occluded,
                      "miss probability of an occluded object"),
            BUSCA_KEY(double, "detector.occlusion_visibility", c.scene.detector.occlusion_visibility,
                      "visibility below which an object counts as occluded"),
            BUSCA_KEY(double, "detector.bbox_noise", c.scene.detector.bbox_noise, "box noise std, px"),
            BUSCA_KEY(double, "detector.confidence_noise", c.scene.detector.confidence_noise, "score noise std"),
            BUSCA_KEY(double, "detector.clutter_rate", c.scene.detector.clutter_rate,
                      "low-score spurious boxes per object and frame"),
            BUSCA_KEY(double, "tracker.det_thresh_high", c.tracker.det_thresh_high, "first-round detection score"),
            BUSCA_KEY(double, "tracker.det_thresh_low", c.tracker.det_thresh_low, "second-round detection score"),
            BUSCA_KEY(double, "tracker.iou_match_thresh", c.tracker.iou_match_thresh, "first-round IoU gate"),
            BUSCA_KEY(double, "tracker.iou_match_thresh_second", c.tracker.iou_match_thresh_second,
                      "second-round and LD IoU gate"),
            BUSCA_KEY(double, "tracker.new_track_thresh", c.tracker.new_track_thresh, "score needed to start a track"),
            BUSCA_KEY(int, "tracker.max_age", c.tracker.max_age, "paused frames before a track is dropped"),
            BUSCA_KEY(double, "tracker.ld_epsilon", c.tracker.ld_epsilon, "lowest score LD recovery accepts"),
            BUSCA_KEY(double, "tracker.mixed_iou_gate", c.tracker.mixed_iou_gate, "IoU gate of Mixed recovery"),
            BUSCA_KEY(int, "tracker.z", c.tracker.z, "track window length"),
            BUSCA_KEY(int, "tracker.history_cap", c.tracker.history_cap, "stored observations per track, 0 = 4z"),
            BUSCA_KEY(bool, "tracker.busca_updates_kalman", c.tracker.busca_updates_kalman,
                      "feed accepted candidates back into the motion model"),
            BUSCA_KEY(double, "neighborhood.zeta", c.tracker.neighborhood.zeta, "neighborhood radius growth"),
            BUSCA_KEY(int, "neighborhood.q_max", c.tracker.neighborhood.q_max, "contextual proposals kept"),
            BUSCA_KEY(bool, "toggles.hlc", c.tracker.toggles.hlc, "[Halluc.] token"),
            BUSCA_KEY(bool, "toggles.mss", c.tracker.toggles.mss, "[Miss.] token"),
            BUSCA_KEY(bool, "toggles.ste", c.tracker.toggles.ste, "spatiotemporal encoding"),
            BUSCA_KEY(bool, "toggles.ctx", c.tracker.toggles.ctx, "contextual proposals"),
            BUSCA_KEY(double, "ste.sigma_t", c.tracker.ste.sigma_t, "time scale of the encoding"),
            BUSCA_KEY(double, "ste.sigma_s", c.tracker.ste.sigma_s, "size scale of the encoding"),
            BUSCA_KEY(double, "ste.sigma_d", c.tracker.ste.sigma_d, "distance scale of the encoding"),
            BUSCA_KEY(double, "ste.epsilon_d", c.tracker.ste.epsilon_d, "floor on the normalized distance"),
            BUSCA_KEY(double, "kalman.std_weight_position", c.tracker.kalman.std_weight_position,
                      "position noise per unit height"),
            BUSCA_KEY(double, "kalman.std_weight_velocity", c.tracker.kalman.std_weight_velocity,
                      "velocity noise per unit height"),
            BUSCA_KEY(int, "model.d_model", c.model.d_model, "token width"),
            BUSCA_KEY(int, "model.n_layers", c.model.n_layers, "encoder layers"),
            BUSCA_KEY(int, "model.n_heads", c.model.n_heads, "attention heads"),
            BUSCA_KEY(int, "model.ffn_dim", c.model.ffn_dim, "feed-forward width"),
            BUSCA_KEY(double, "model.dropout", c.model.dropout, "dropout rate during training"),
            BUSCA_KEY(int, "model.feature_dim", c.model.feature_dim, "appearance dimension F"),
            BUSCA_KEY(double, "model.label_smoothing", c.model.label_smoothing, "label smoothing of the loss"),
            BUSCA_KEY(int, "model.head_hidden", c.model.head_hidden, "head MLP width, 0 = d_model"),
            BUSCA_KEY(double, "model.init_std", c.model.init_std, "std of initial weights"),
            BUSCA_KEY(int, "train.epochs", c.train.epochs, "training epochs"),
            BUSCA_KEY(int, "train.batch_size", c.train.batch_size, "sequences per optimizer step"),
            BUSCA_KEY(double, "train.learning_rate", c.train.learning_rate, "AdamW learning rate"),
            BUSCA_KEY(double, "train.weight_decay", c.train.weight_decay, "AdamW decoupled weight decay"),
            BUSCA_KEY(int, "train.lr_drop_epoch", c.train.lr_drop_epoch, "epoch at which the rate drops"),
            BUSCA_KEY(double, "train.lr_drop_factor", c.train.lr_drop_factor, "rate multiplier after the drop"),
            BUSCA_KEY(int, "train.samples", c.train_samples, "training sequences to draw"),
            BUSCA_KEY(double, "train.holdout_fraction", c.holdout_fraction, "held-out sequences per training sequence"),
            BUSCA_KEY(int, "train.scenes", c.train_scenes, "synthetic scenes used when no data is given"),
            BUSCA_KEY(int, "builder.max_gap", c.builder.max_gap, "largest gap between window observations"),
            BUSCA_KEY(int, "builder.target_range", c.builder.target_range, "frames after the window for the target"),
            BUSCA_KEY(int, "builder.n_proposals", c.builder.n_proposals, "proposals per sample"),
            BUSCA_KEY(double, "builder.p_no_positive", c.builder.p_no_positive, "chance of leaving out the positive"),
            BUSCA_KEY(double, "builder.p_eliminate", c.builder.p_eliminate, "chance of thinning the proposals"),
            BUSCA_KEY(double, "builder.p_alter", c.builder.p_alter, "chance of altering a window observation"),
            BUSCA_KEY(double, "builder.halluc_fraction", c.builder.halluc_fraction,
                      "foreign share of a window that makes it corrupted"),
        };
        k.push_back({"scene.occluders", "static occluders as cx:cy:w:h;...",
                     [](const RunConfig& c) { return detail::show_boxes(c.scene.occluders); },
                     [](RunConfig& c, std::string_view v) { c.scene.occluders = detail::parse_boxes(v); }});
        k.push_back({"tracker.recovery", "none, ld, iou, mixed or busca",
                     [](const RunConfig& c) { return to_string(c.tracker.recovery); },
                     [](RunConfig& c, std::string_view v) { c.tracker.recovery = parse_recovery(detail::trim(v)); }});
        return k;
    }();
    return keys;
}

#undef BUSCA_KEY

inline void set_config_value(RunConfig& cfg, std::string_view key, std::string_view value) {
    for (const auto& k : config_keys()) {
        if (k.key == key) {
            try {
                k.set(cfg, value);
            } catch (const InvalidInput& e) {
                throw InvalidInput("config key '" + std::string(key) + "': " + e.what());
            }
            return;
        }
    }
    throw InvalidInput("unknown config key '" + std::string(key) + "'");
}

/// Keeps derived fields consistent: seeds, feature dimension, frame size and STE width.
inline void finalize(RunConfig& cfg) {
    cfg.scene.seed = cfg.seed;
    cfg.train.seed = derive_seed(cfg.seed, 0x545241494e);
    cfg.tracker.frame_width = cfg.scene.width;
    cfg.tracker.frame_height = cfg.scene.height;
    cfg.tracker.ste.d_model = cfg.model.d_model;
    cfg.builder.z = cfg.tracker.z;
    cfg.builder.neighborhood = cfg.tracker.neighborhood;
    validate(cfg.scene);
    validate(cfg.tracker);
    validate(cfg.model);
    if (cfg.train_samples < 1) throw InvalidInput("train.samples must be >= 1");
    if (!(cfg.holdout_fraction >= 0.0 && cfg.holdout_fraction < 1.0)) {
        throw InvalidInput("train.holdout_fraction must lie in [0, 1)");
    }
}

inline RunConfig parse_config_text(std::string_view text, RunConfig base = desk_defaults(), bool use_env = true) {
    std::size_t line_no = 0;
    while (!text.empty()) {
        const std::size_t nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        if (detail::trim(line).empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw InvalidInput("config line " + std::to_string(line_no) + ": expected key = value");
        }
        try {
            set_config_value(base, detail::trim(line.substr(0, eq)), line.substr(eq + 1));
        } catch (const InvalidInput& e) {
            throw InvalidInput("config line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    if (use_env) {
        if (const char* env = std::getenv("BUSCA_SEED"); env && *env) {
            try {
                base.seed = detail::parse_value<std::uint64_t>(env);
            } catch (const InvalidInput& e) {
                throw InvalidInput(std::string("BUSCA_SEED: ") + e.what());
            }
        }
    }
    finalize(base);
    return base;
}

inline RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InvalidInput("cannot open config " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    try {
        return parse_config_text(ss.str());
    } catch (const InvalidInput& e) {
        throw InvalidInput(path.string() + ": " + e.what());
    }
}

/// Every key with its current value, one "key = value  # doc" line each.
inline std::string format_config(const RunConfig& cfg) {
    std::string out;
    for (const auto& k : config_keys()) out += k.key + " = " + k.get(cfg) + "  # " + k.doc + "\n";
    return out;
}

}  // namespace busca
