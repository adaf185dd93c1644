// busca: simulate, train, track, eval and ablate from the command line.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "busca/busca.hpp"
#include "busca/workflow.hpp"

namespace fs = std::filesystem;
using namespace busca;

namespace {

std::string read_text(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw InvalidInput("cannot open " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct ConfigFlags {
    std::string path;
    std::vector<std::string> sets;
    std::optional<std::uint64_t> seed;

    void add_to(CLI::App* app) {
        app->add_option("--config", path, "key = value configuration file")->check(CLI::ExistingFile);
        app->add_option("--set", sets, "override one key, as key=value (repeatable)");
        app->add_option("--seed", seed, "master seed; overrides BUSCA_SEED and the config");
    }

    RunConfig load() const {
        std::string text;
        if (!path.empty()) text = read_text(path);
        for (const auto& s : sets) text += "\n" + s;
        RunConfig cfg = parse_config_text(text);
        if (seed) {
            cfg.seed = *seed;
            finalize(cfg);
        }
        return cfg;
    }
};

// Features keyed by (frame, index within the frame in file order).
FeatureMap features_of(const std::map<FrameIndex, std::vector<Detection>>& dets) {
    FeatureMap out;
    for (const auto& [f, v] : dets) {
        for (std::size_t j = 0; j < v.size(); ++j) {
            out[{static_cast<std::uint32_t>(f), static_cast<std::uint32_t>(j)}] = v[j].appearance;
        }
    }
    return out;
}

void simulate(const RunConfig& cfg, const fs::path& out) {
    fs::create_directories(out);
    auto scene = std::make_shared<Scene>(generate_scene(cfg.scene));
    SyntheticAppearance appearance(scene);
    const auto dets = scene_detections(*scene, appearance);
    const FrameBoxes gt = scene_ground_truth(*scene);
    FeatureMap gt_features;
    for (const auto& [f, v] : gt) {
        for (std::size_t j = 0; j < v.size(); ++j) {
            gt_features[{static_cast<std::uint32_t>(f), static_cast<std::uint32_t>(j)}] = appearance.at(f, v[j].bbox);
        }
    }
    write_text(out / "gt.txt", format_gt(gt));
    write_text(out / "det.txt", format_detections(dets));
    write_features(out / "det_features.busf", cfg.scene.feature_dim, features_of(dets));
    write_features(out / "gt_features.busf", cfg.scene.feature_dim, gt_features);
    write_text(out / "config.txt", format_config(cfg));
    long n_gt = 0, n_det = 0;
    for (const auto& [f, v] : gt) n_gt += static_cast<long>(v.size());
    for (const auto& [f, v] : dets) n_det += static_cast<long>(v.size());
    std::cout << "frames " << scene->last_frame() << ", ground-truth boxes " << n_gt << ", detections " << n_det
              << " -> " << out.string() << "\n";
}

// Training data from simulate-style directories (gt.txt + gt_features.busf).
TrainingDataset dataset_from_dirs(const std::vector<std::string>& dirs, int feature_dim) {
    TrainingDataset all;
    for (const auto& d : dirs) {
        const FrameBoxes gt = to_frame_boxes(parse_mot(fs::path(d) / "gt.txt"), true);
        const FeatureMap feats = load_features(fs::path(d) / "gt_features.busf", feature_dim);
        TrainingDataset ds;
        for (const auto& [f, v] : gt) {
            for (std::size_t j = 0; j < v.size(); ++j) {
                const auto it = feats.find({static_cast<std::uint32_t>(f), static_cast<std::uint32_t>(j)});
                if (it == feats.end()) {
                    throw InvalidInput(d + ": no appearance for ground-truth box " + std::to_string(j) + " of frame " +
                                       std::to_string(f));
                }
                ds.add(f, {v[j].id, v[j].bbox, v[j].visibility, it->second});
            }
        }
        merge_dataset(all, ds);
    }
    return all;
}

TrainingDataset training_data(const RunConfig& cfg, const std::vector<std::string>& dirs) {
    return dirs.empty() ? synthetic_training_dataset(cfg) : dataset_from_dirs(dirs, cfg.model.feature_dim);
}

void write_loss_csv(const fs::path& path, const std::vector<double>& loss) {
    std::string text = "epoch,loss\n";
    for (std::size_t e = 0; e < loss.size(); ++e) text += std::to_string(e) + "," + detail::format_number(loss[e]) + "\n";
    write_text(path, text);
}

TrainingRun train_verbose(const TrainingDataset& ds, const RunConfig& cfg) {
    return train_model(ds, cfg, [](int epoch, double loss) {
        std::cerr << "epoch " << epoch << " loss " << loss << "\n";
    });
}

/// Appearance for motion candidates: image frames when given, else the synthetic field of the configured scene.
std::unique_ptr<AppearanceSource> appearance_source(const RunConfig& cfg, const std::string& frames) {
    if (!frames.empty()) {
        return std::make_unique<ImageSequenceAppearance>(
            frames, AppearanceExtractor(cfg.model.feature_dim, derive_seed(cfg.seed, 0x455854)));
    }
    return std::make_unique<SyntheticAppearance>(std::make_shared<Scene>(generate_scene(cfg.scene)));
}

std::map<FrameIndex, std::vector<Detection>> load_detections(const fs::path& dets_path, const std::string& features_path,
                                                             const AppearanceSource& appearance, int feature_dim) {
    auto dets = to_detections(parse_mot(dets_path));
    if (!features_path.empty()) {
        const FeatureMap feats = load_features(features_path, feature_dim);
        for (auto& [f, v] : dets) {
            for (std::size_t j = 0; j < v.size(); ++j) {
                const auto it = feats.find({static_cast<std::uint32_t>(f), static_cast<std::uint32_t>(j)});
                if (it == feats.end()) {
                    throw InvalidInput(features_path + ": no feature for detection " + std::to_string(j) + " of frame " +
                                       std::to_string(f));
                }
                v[j].appearance = it->second;
            }
        }
    } else {
        for (auto& [f, v] : dets) {
            for (auto& d : v) d.appearance = appearance.at(f, d.bbox);
        }
    }
    return dets;
}

FrameIndex last_frame(const RunConfig& cfg, const std::map<FrameIndex, std::vector<Detection>>& dets,
                      bool synthetic) {
    FrameIndex last = dets.empty() ? 0 : dets.rbegin()->first;
    if (synthetic) last = std::max<FrameIndex>(last, cfg.scene.n_frames);
    return last;
}

struct AblationRow {
    int line;
    bool hlc, mss, ste, ctx;
};

const std::vector<AblationRow>& ablation_rows() {
    static const std::vector<AblationRow> rows{
        {1, false, false, false, false}, {2, true, false, false, false}, {3, false, true, false, false},
        {4, true, true, false, false},   {5, true, true, true, false},   {6, true, true, false, true},
        {7, true, true, true, true},
    };
    return rows;
}

ProposalToggles parse_toggles(const std::string& text) {
    ProposalToggles t{false, false, false, false};
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = detail::trim(item);
        if (item == "hlc") t.hlc = true;
        else if (item == "mss") t.mss = true;
        else if (item == "ste") t.ste = true;
        else if (item == "ctx") t.ctx = true;
        else if (!item.empty()) throw InvalidInput("unknown toggle '" + item + "' (expected hlc, mss, ste, ctx)");
    }
    return t;
}

void ablate(RunConfig cfg, const std::string& toggles_text, const std::vector<std::string>& dirs, const fs::path& out) {
    const ProposalToggles allowed = parse_toggles(toggles_text);
    auto scene = std::make_shared<Scene>(generate_scene(cfg.scene));
    SyntheticAppearance appearance(scene);
    const auto dets = scene_detections(*scene, appearance);
    const FrameBoxes gt = scene_ground_truth(*scene);

    std::string csv = "line,hlc,mss,ste,ctx,mota,idf1,fn,fp,idsw,mota_delta,fn_delta,fp_delta\n";
    std::optional<MetricsReport> baseline;
    std::optional<TrainingDataset> data;
    for (const auto& row : ablation_rows()) {
        if ((row.hlc && !allowed.hlc) || (row.mss && !allowed.mss) || (row.ste && !allowed.ste) ||
            (row.ctx && !allowed.ctx)) {
            continue;
        }
        TrackerConfig tc = cfg.tracker;
        std::optional<TrainingRun> run;
        if (row.line == 1) {
            tc.recovery = RecoveryKind::None;
        } else {
            if (!data) data = training_data(cfg, dirs);
            RunConfig rc = cfg;
            rc.tracker.toggles = {row.hlc, row.mss, row.ste, row.ctx};
            std::cerr << "line " << row.line << ": training\n";
            run = train_verbose(*data, rc);
            tc = rc.tracker;
            tc.recovery = RecoveryKind::Busca;
        }
        const auto results = track_sequence(tc, dets, scene->first_frame(), scene->last_frame(), &appearance,
                                            run ? &run->result.model : nullptr);
        const MetricsReport rep = evaluate(gt, to_frame_boxes(results));
        if (row.line == 1) baseline = rep;
        auto b = [](bool v) { return std::string(v ? "1" : "0"); };
        csv += std::to_string(row.line) + "," + b(row.hlc) + "," + b(row.mss) + "," + b(row.ste) + "," + b(row.ctx) +
               "," + detail::format_number(rep.clear.mota) + "," + detail::format_number(rep.id.idf1) + "," +
               std::to_string(rep.clear.fn) + "," + std::to_string(rep.clear.fp) + "," + std::to_string(rep.clear.idsw);
        if (baseline) {
            csv += "," + detail::format_number(rep.clear.mota - baseline->clear.mota) + "," +
                   std::to_string(rep.clear.fn - baseline->clear.fn) + "," +
                   std::to_string(rep.clear.fp - baseline->clear.fp) + "\n";
        } else {
            csv += ",,,\n";
        }
    }
    write_text(out, csv);
    std::cout << csv;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Online multi-object tracking with learned recovery of missed objects"};
    app.require_subcommand(1);

    ConfigFlags sim_cfg, train_cfg, track_cfg, ablate_cfg;
    std::string sim_out;
    auto* sim = app.add_subcommand("simulate", "generate a synthetic scene: gt.txt, det.txt and appearance features");
    sim_cfg.add_to(sim);
    sim->add_option("--out", sim_out, "output directory")->required();

    std::vector<std::string> train_data;
    std::string train_out, train_loss;
    auto* tr = app.add_subcommand("train", "train the decision model");
    train_cfg.add_to(tr);
    auto* data_opt = tr->add_option("--data", train_data, "simulate output directory (repeatable)")
                         ->check(CLI::ExistingDirectory);
    int train_scenes = 0;
    tr->add_option("--scenes", train_scenes, "generate this many synthetic training scenes")->excludes(data_opt);
    tr->add_option("--out", train_out, "model file (.busm)")->required();
    tr->add_option("--loss-csv", train_loss, "loss curve CSV (default: <out>.loss.csv)");

    std::string track_dets, track_features, track_model, track_recovery, track_out, track_frames;
    auto* tk = app.add_subcommand("track", "run the online tracker over a detection file");
    track_cfg.add_to(tk);
    tk->add_option("--dets", track_dets, "detections, MOTChallenge text format")->required()->check(CLI::ExistingFile);
    tk->add_option("--features", track_features, "detection appearance (BUSF)")->check(CLI::ExistingFile);
    tk->add_option("--model", track_model, "decision model (BUSM)")->check(CLI::ExistingFile);
    tk->add_option("--recovery", track_recovery, "none, ld, iou, mixed or busca (default: tracker.recovery)");
    tk->add_option("--frames", track_frames, "directory of frames 000001.ppm, ... for candidate appearance")
        ->check(CLI::ExistingDirectory);
    tk->add_option("--out", track_out, "results file")->required();

    std::string eval_gt, eval_results, eval_out, eval_baseline;
    int eval_bins = 4;
    auto* ev = app.add_subcommand("eval", "CLEAR-MOT and IDF1 of a results file");
    ev->add_option("--gt", eval_gt, "ground truth")->required()->check(CLI::ExistingFile);
    ev->add_option("--results", eval_results, "tracker results")->required()->check(CLI::ExistingFile);
    ev->add_option("--baseline", eval_baseline,
                   "baseline results; adds the visibility histogram of boxes found only by --results")
        ->check(CLI::ExistingFile);
    ev->add_option("--bins", eval_bins, "visibility bins")->check(CLI::PositiveNumber);
    ev->add_option("--out", eval_out, "report CSV")->required();

    std::string ablate_toggles = "hlc,mss,ste,ctx", ablate_out;
    std::vector<std::string> ablate_data;
    auto* ab = app.add_subcommand("ablate", "component ablation on the configured synthetic scene");
    ablate_cfg.add_to(ab);
    ab->add_option("--toggles", ablate_toggles, "components that may be enabled, e.g. hlc,mss,ste,ctx");
    ab->add_option("--data", ablate_data, "training data directories (default: synthetic scenes)")
        ->check(CLI::ExistingDirectory);
    ab->add_option("--out", ablate_out, "table CSV")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (sim->parsed()) {
            simulate(sim_cfg.load(), sim_out);
        } else if (tr->parsed()) {
            RunConfig cfg = train_cfg.load();
            if (train_scenes > 0) cfg.train_scenes = train_scenes;
            const TrainingDataset ds = training_data(cfg, train_data);
            const TrainingRun run = train_verbose(ds, cfg);
            save_model(run.result.model, train_out);
            fs::path loss = train_loss.empty() ? fs::path(train_out).replace_extension(".loss.csv") : fs::path(train_loss);
            write_loss_csv(loss, run.result.epoch_loss);
            std::cout << "train accuracy " << run.train_accuracy << ", held-out accuracy " << run.holdout_accuracy
                      << " (" << run.holdout_size << " sequences) -> " << train_out << "\n";
        } else if (tk->parsed()) {
            RunConfig cfg = track_cfg.load();
            if (!track_recovery.empty()) cfg.tracker.recovery = parse_recovery(track_recovery);
            if (cfg.tracker.recovery == RecoveryKind::Busca && track_model.empty()) {
                throw InvalidInput("--recovery busca needs --model");
            }
            if (cfg.tracker.recovery != RecoveryKind::Busca && !track_model.empty()) {
                throw InvalidInput("--model is only used with --recovery busca (got '" +
                                   to_string(cfg.tracker.recovery) + "')");
            }
            std::optional<DecisionModel<float>> model;
            if (!track_model.empty()) model = load_model<float>(track_model, cfg.model);
            const auto appearance = appearance_source(cfg, track_frames);
            const auto dets = load_detections(track_dets, track_features, *appearance, cfg.model.feature_dim);
            const auto results = track_sequence(cfg.tracker, dets, 1, last_frame(cfg, dets, track_frames.empty()),
                                                appearance.get(), model ? &*model : nullptr);
            write_results(results, track_out);
            long boxes = 0, recovered = 0;
            for (const auto& fr : results) {
                boxes += static_cast<long>(fr.entries.size());
                for (const auto& e : fr.entries) recovered += e.recovered;
            }
            std::cout << "recovery " << to_string(cfg.tracker.recovery) << ": " << boxes << " boxes, " << recovered
                      << " recovered -> " << track_out << "\n";
        } else if (ev->parsed()) {
            const FrameBoxes gt = to_frame_boxes(parse_mot(eval_gt), true);
            const FrameBoxes hyp = to_frame_boxes(parse_mot(eval_results), false);
            MetricsReport rep = evaluate(gt, hyp);
            if (!eval_baseline.empty()) {
                rep.rescued = rescued_by_visibility(gt, to_frame_boxes(parse_mot(eval_baseline), false), hyp, eval_bins);
            }
            write_text(eval_out, format_report_csv(rep));
            std::cout << format_report_table(rep);
        } else if (ab->parsed()) {
            ablate(ablate_cfg.load(), ablate_toggles, ablate_data, ablate_out);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
