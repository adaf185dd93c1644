#pragma once

// CLEAR-MOT (MOTA, FP, FN, IDSW), IDF1, track-length statistics and the
// visibility histogram of boxes one hypothesis finds and another misses.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "busca/core.hpp"
#include "busca/geometry.hpp"
#include "busca/hungarian.hpp"

namespace busca {

struct ClearMot {
    long gt_count = 0;
    long matches = 0;
    long fp = 0;
    long fn = 0;
    long idsw = 0;
    double mota = 1.0;  // -inf when there is no ground truth but false positives exist
};

struct IdMeasures {
    long idtp = 0;
    long idfp = 0;
    long idfn = 0;
    double idf1 = 1.0;
};

struct TrackLengthStats {
    std::vector<long> lengths;  // per hypothesis id, ascending id
    double median = 0.0;
    double mean = 0.0;
};

struct MetricsReport {
    ClearMot clear;
    IdMeasures id;
    TrackLengthStats lengths;
    std::vector<long> rescued;  // optional visibility histogram
};

namespace detail {

inline void check_unique_ids(const FrameBoxes& boxes, const char* what) {
    for (const auto& [frame, v] : boxes) {
        std::set<TrackId> seen;
        for (const auto& b : v) {
            if (!seen.insert(b.id).second) {
                throw InvalidInput(std::string(what) + ": id " + std::to_string(b.id) + " appears twice in frame " +
                                   std::to_string(frame));
            }
        }
    }
}

inline double iou_gate(double iou_threshold) {
    return std::nextafter(1.0 - iou_threshold, std::numeric_limits<double>::infinity());
}

/// Per-frame CLEAR matching. Calls `on_match(frame, gt_index, hyp_index)` for each match.
template <class OnFrame>
void clear_matching(const FrameBoxes& gt, const FrameBoxes& hyp, double iou_threshold, OnFrame on_frame) {
    std::map<TrackId, TrackId> last_hyp;  // gt id -> hyp id it was last matched to
    std::set<FrameIndex> frames;
    for (const auto& [f, _] : gt) frames.insert(f);
    for (const auto& [f, _] : hyp) frames.insert(f);
    static const std::vector<GtBox> empty;
    for (FrameIndex f : frames) {
        const auto git = gt.find(f);
        const auto hit = hyp.find(f);
        const auto& g = git == gt.end() ? empty : git->second;
        const auto& h = hit == hyp.end() ? empty : hit->second;
        std::vector<int> g_match(g.size(), -1), h_match(h.size(), -1);

        // keep last correspondences that still clear the gate
        for (std::size_t i = 0; i < g.size(); ++i) {
            const auto it = last_hyp.find(g[i].id);
            if (it == last_hyp.end()) continue;
            for (std::size_t j = 0; j < h.size(); ++j) {
                if (h[j].id == it->second && h_match[j] < 0 && iou(g[i].bbox, h[j].bbox) >= iou_threshold) {
                    g_match[i] = static_cast<int>(j);
                    h_match[j] = static_cast<int>(i);
                }
            }
        }
        std::vector<int> gr, hc;
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (g_match[i] < 0) gr.push_back(static_cast<int>(i));
        }
        for (std::size_t j = 0; j < h.size(); ++j) {
            if (h_match[j] < 0) hc.push_back(static_cast<int>(j));
        }
        if (!gr.empty() && !hc.empty()) {
            Eigen::MatrixXd cost(static_cast<Eigen::Index>(gr.size()), static_cast<Eigen::Index>(hc.size()));
            for (std::size_t a = 0; a < gr.size(); ++a) {
                for (std::size_t b = 0; b < hc.size(); ++b) {
                    cost(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) =
                        1.0 - iou(g[static_cast<std::size_t>(gr[a])].bbox, h[static_cast<std::size_t>(hc[b])].bbox);
                }
            }
            for (const auto& [a, b] : hungarian(cost, iou_gate(iou_threshold))) {
                g_match[static_cast<std::size_t>(gr[static_cast<std::size_t>(a)])] = hc[static_cast<std::size_t>(b)];
                h_match[static_cast<std::size_t>(hc[static_cast<std::size_t>(b)])] = gr[static_cast<std::size_t>(a)];
            }
        }
        on_frame(f, g, h, g_match, h_match, last_hyp);
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (g_match[i] >= 0) last_hyp[g[i].id] = h[static_cast<std::size_t>(g_match[i])].id;
        }
    }
}

}  // namespace detail

inline ClearMot clear_mot(const FrameBoxes& gt, const FrameBoxes& hyp, double iou_threshold = 0.5) {
    detail::check_unique_ids(gt, "ground truth");
    detail::check_unique_ids(hyp, "hypothesis");
    ClearMot r;
    detail::clear_matching(gt, hyp, iou_threshold,
                           [&](FrameIndex, const std::vector<GtBox>& g, const std::vector<GtBox>& h,
                               const std::vector<int>& g_match, const std::vector<int>& h_match,
                               const std::map<TrackId, TrackId>& last_hyp) {
                               r.gt_count += static_cast<long>(g.size());
                               for (std::size_t i = 0; i < g.size(); ++i) {
                                   if (g_match[i] < 0) {
                                       ++r.fn;
                                       continue;
                                   }
                                   ++r.matches;
                                   const auto it = last_hyp.find(g[i].id);
                                   if (it != last_hyp.end() && it->second != h[static_cast<std::size_t>(g_match[i])].id) {
                                       ++r.idsw;
                                   }
                               }
                               for (int m : h_match) r.fp += m < 0;
                           });
    if (r.gt_count > 0) {
        r.mota = 1.0 - static_cast<double>(r.fn + r.fp + r.idsw) / static_cast<double>(r.gt_count);
    } else {
        r.mota = r.fp == 0 ? 1.0 : -std::numeric_limits<double>::infinity();
    }
    return r;
}

inline IdMeasures id_measures(const FrameBoxes& gt, const FrameBoxes& hyp, double iou_threshold = 0.5) {
    detail::check_unique_ids(gt, "ground truth");
    detail::check_unique_ids(hyp, "hypothesis");
    std::map<TrackId, int> gi, hi;
    long n_gt = 0, n_hyp = 0;
    for (const auto& [f, v] : gt) {
        for (const auto& b : v) gi.emplace(b.id, static_cast<int>(gi.size()));
        n_gt += static_cast<long>(v.size());
    }
    for (const auto& [f, v] : hyp) {
        for (const auto& b : v) hi.emplace(b.id, static_cast<int>(hi.size()));
        n_hyp += static_cast<long>(v.size());
    }
    IdMeasures r;
    if (n_gt == 0 && n_hyp == 0) return r;

    const int G = static_cast<int>(gi.size()), H = static_cast<int>(hi.size());
    Eigen::MatrixXd overlap = Eigen::MatrixXd::Zero(G, H);
    for (const auto& [f, g] : gt) {
        const auto hit = hyp.find(f);
        if (hit == hyp.end()) continue;
        for (const auto& a : g) {
            for (const auto& b : hit->second) {
                if (iou(a.bbox, b.bbox) >= iou_threshold) overlap(gi.at(a.id), hi.at(b.id)) += 1.0;
            }
        }
    }
    // Square problem: real pairs cost -overlap, every id may instead stay unmatched at no cost.
    long idtp = 0;
    if (G > 0 && H > 0) {
        Eigen::MatrixXd cost = Eigen::MatrixXd::Zero(G + H, G + H);
        cost.topLeftCorner(G, H) = -overlap;
        for (const auto& [r_, c_] : hungarian(cost)) {
            if (r_ < G && c_ < H) idtp += static_cast<long>(overlap(r_, c_));
        }
    }
    r.idtp = idtp;
    r.idfn = n_gt - idtp;
    r.idfp = n_hyp - idtp;
    r.idf1 = 2.0 * static_cast<double>(idtp) / static_cast<double>(2 * idtp + r.idfp + r.idfn);
    return r;
}

inline double idf1(const FrameBoxes& gt, const FrameBoxes& hyp, double iou_threshold = 0.5) {
    return id_measures(gt, hyp, iou_threshold).idf1;
}

inline TrackLengthStats track_length_stats(const FrameBoxes& hyp) {
    std::map<TrackId, long> count;
    for (const auto& [f, v] : hyp) {
        for (const auto& b : v) ++count[b.id];
    }
    TrackLengthStats s;
    for (const auto& [id, n] : count) s.lengths.push_back(n);
    if (s.lengths.empty()) return s;
    std::vector<long> sorted = s.lengths;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t n = sorted.size();
    s.median = n % 2 ? static_cast<double>(sorted[n / 2])
                     : 0.5 * static_cast<double>(sorted[n / 2 - 1] + sorted[n / 2]);
    double total = 0.0;
    for (long v : sorted) total += static_cast<double>(v);
    s.mean = total / static_cast<double>(n);
    return s;
}

/// Ground-truth boxes matched in `busca` but not in `baseline`, binned by visibility
/// into `bins` equal bins over [0, 1].
inline std::vector<long> rescued_by_visibility(const FrameBoxes& gt, const FrameBoxes& baseline, const FrameBoxes& busca,
                                               int bins = 4, double iou_threshold = 0.5) {
    if (bins < 1) throw InvalidInput("rescued_by_visibility: bins must be >= 1");
    for (const auto& [f, v] : gt) {
        for (const auto& b : v) {
            if (!std::isfinite(b.visibility)) {
                throw InvalidInput("rescued_by_visibility: ground truth lacks a visibility column (frame " +
                                   std::to_string(f) + ")");
            }
        }
    }
    auto matched = [&](const FrameBoxes& hyp) {
        std::set<std::pair<FrameIndex, TrackId>> out;
        detail::clear_matching(gt, hyp, iou_threshold,
                               [&](FrameIndex f, const std::vector<GtBox>& g, const std::vector<GtBox>&,
                                   const std::vector<int>& g_match, const std::vector<int>&,
                                   const std::map<TrackId, TrackId>&) {
                                   for (std::size_t i = 0; i < g.size(); ++i) {
                                       if (g_match[i] >= 0) out.emplace(f, g[i].id);
                                   }
                               });
        return out;
    };
    detail::check_unique_ids(gt, "ground truth");
    const auto base = matched(baseline);
    const auto found = matched(busca);
    std::vector<long> hist(static_cast<std::size_t>(bins), 0);
    for (const auto& [f, v] : gt) {
        for (const auto& b : v) {
            if (!found.contains({f, b.id}) || base.contains({f, b.id})) continue;
            const int k = std::clamp(static_cast<int>(std::floor(b.visibility * bins)), 0, bins - 1);
            ++hist[static_cast<std::size_t>(k)];
        }
    }
    return hist;
}

inline MetricsReport evaluate(const FrameBoxes& gt, const FrameBoxes& hyp, double iou_threshold = 0.5) {
    MetricsReport r;
    r.clear = clear_mot(gt, hyp, iou_threshold);
    r.id = id_measures(gt, hyp, iou_threshold);
    r.lengths = track_length_stats(hyp);
    return r;
}

namespace detail {

inline std::vector<std::pair<std::string, std::string>> report_fields(const MetricsReport& r) {
    auto num = [](double v) {
        std::ostringstream s;
        s.precision(6);
        s << std::fixed << v;
        return s.str();
    };
    std::vector<std::pair<std::string, std::string>> f{
        {"mota", num(r.clear.mota)},
        {"idf1", num(r.id.idf1)},
        {"fp", std::to_string(r.clear.fp)},
        {"fn", std::to_string(r.clear.fn)},
        {"idsw", std::to_string(r.clear.idsw)},
        {"gt_count", std::to_string(r.clear.gt_count)},
        {"matches", std::to_string(r.clear.matches)},
        {"idtp", std::to_string(r.id.idtp)},
        {"idfp", std::to_string(r.id.idfp)},
        {"idfn", std::to_string(r.id.idfn)},
        {"tracks", std::to_string(r.lengths.lengths.size())},
        {"track_length_median", num(r.lengths.median)},
        {"track_length_mean", num(r.lengths.mean)},
    };
    const std::size_t bins = r.rescued.size();
    for (std::size_t k = 0; k < bins; ++k) {
        f.emplace_back("rescued_vis_" + num(static_cast<double>(k) / bins).substr(0, 4) + "_" +
                           num(static_cast<double>(k + 1) / bins).substr(0, 4),
                       std::to_string(r.rescued[k]));
    }
    return f;
}

}  // namespace detail

/// Aligned "key  value" lines.
inline std::string format_report_table(const MetricsReport& r) {
    std::string out;
    for (const auto& [k, v] : detail::report_fields(r)) {
        out += k;
        out.append(k.size() < 24 ? 24 - k.size() : 1, ' ');
        out += v + "\n";
    }
    return out;
}

/// Header line plus one value line.
inline std::string format_report_csv(const MetricsReport& r, const std::string& label = {}) {
    std::string head, row;
    if (!label.empty()) {
        head = "run,";
        row = label + ",";
    }
    const auto fields = detail::report_fields(r);
    for (std::size_t i = 0; i < fields.size(); ++i) {
        head += fields[i].first + (i + 1 < fields.size() ? "," : "\n");
        row += fields[i].second + (i + 1 < fields.size() ? "," : "\n");
    }
    return head + row;
}

}  // namespace busca
