#pragma once

// MOTChallenge text format:
//   frame,id,bb_left,bb_top,bb_width,bb_height,conf,x,y,z
// Ground-truth files use the final column as visibility.

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "busca/core.hpp"
#include "busca/tracker.hpp"

namespace busca {

struct MotRow {
    FrameIndex frame = 0;
    TrackId id = -1;
    BBox bbox;
    double confidence = 1.0;
    double last = -1.0;  // final column: visibility in gt files
    int columns = 0;
};

namespace detail {

inline double parse_number(std::string_view field, std::size_t line, int column) {
    while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
    while (!field.empty() && (field.back() == ' ' || field.back() == '\t' || field.back() == '\r')) field.remove_suffix(1);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
    if (field.empty() || ec != std::errc{} || ptr != field.data() + field.size() || !std::isfinite(v)) {
        throw InvalidInput("line " + std::to_string(line) + ": column " + std::to_string(column) + " is not a number ('" +
                           std::string(field) + "')");
    }
    return v;
}

inline std::string format_number(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

}  // namespace detail

inline std::vector<MotRow> parse_mot_text(std::string_view text) {
    std::vector<MotRow> rows;
    std::size_t line_no = 0;
    while (!text.empty()) {
        const std::size_t nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;

        std::vector<double> v;
        while (true) {
            const std::size_t comma = line.find(',');
            v.push_back(detail::parse_number(line.substr(0, comma), line_no, static_cast<int>(v.size()) + 1));
            if (comma == std::string_view::npos) break;
            line.remove_prefix(comma + 1);
        }
        if (v.size() < 6) {
            throw InvalidInput("line " + std::to_string(line_no) + ": expected at least 6 columns, found " +
                               std::to_string(v.size()));
        }
        if (!(v[4] > 0.0)) throw InvalidInput("line " + std::to_string(line_no) + ": non-positive width");
        if (!(v[5] > 0.0)) throw InvalidInput("line " + std::to_string(line_no) + ": non-positive height");
        if (v[0] != std::floor(v[0]) || v[0] < 0.0) {
            throw InvalidInput("line " + std::to_string(line_no) + ": frame must be a non-negative integer");
        }
        MotRow r;
        r.frame = static_cast<FrameIndex>(v[0]);
        r.id = static_cast<TrackId>(v[1]);
        r.bbox = BBox::from_tlwh(v[2], v[3], v[4], v[5]);
        r.confidence = v.size() > 6 ? v[6] : 1.0;
        r.last = v.back();
        r.columns = static_cast<int>(v.size());
        rows.push_back(r);
    }
    return rows;
}

inline std::vector<MotRow> parse_mot(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InvalidInput("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    try {
        return parse_mot_text(ss.str());
    } catch (const InvalidInput& e) {
        throw InvalidInput(path.string() + ": " + e.what());
    }
}

/// Detections per frame in file order. Confidences are clamped to [0, 1].
inline std::map<FrameIndex, std::vector<Detection>> to_detections(const std::vector<MotRow>& rows) {
    std::map<FrameIndex, std::vector<Detection>> out;
    for (const auto& r : rows) {
        Detection d;
        d.bbox = r.bbox;
        d.confidence = std::clamp(r.confidence, 0.0, 1.0);
        out[r.frame].push_back(std::move(d));
    }
    return out;
}

/// Identity-labelled boxes. With `gt` set, the final column of rows with at
/// least 9 columns becomes the visibility; otherwise visibility is NaN.
inline FrameBoxes to_frame_boxes(const std::vector<MotRow>& rows, bool gt) {
    FrameBoxes out;
    for (const auto& r : rows) {
        const double vis = gt && r.columns >= 9 ? r.last : std::numeric_limits<double>::quiet_NaN();
        out[r.frame].push_back({r.id, r.bbox, vis});
    }
    return out;
}

inline FrameBoxes to_frame_boxes(const std::vector<FrameResult>& results) {
    FrameBoxes out;
    for (const auto& fr : results) {
        auto& v = out[fr.frame];
        for (const auto& e : fr.entries) v.push_back({e.id, e.bbox, std::numeric_limits<double>::quiet_NaN()});
    }
    return out;
}

inline std::string format_row(FrameIndex frame, TrackId id, const BBox& b, double conf, double last) {
    using detail::format_number;
    return std::to_string(frame) + "," + std::to_string(id) + "," + format_number(b.left()) + "," +
           format_number(b.top()) + "," + format_number(b.w) + "," + format_number(b.h) + "," + format_number(conf) +
           ",-1,-1," + format_number(last) + "\n";
}

/// Tracker output; rows ordered by frame then id. Recovered boxes carry confidence 0.99.
inline std::string format_results(const std::vector<FrameResult>& results) {
    std::string out;
    std::vector<const FrameResult*> ordered;
    for (const auto& fr : results) ordered.push_back(&fr);
    std::stable_sort(ordered.begin(), ordered.end(),
                     [](const FrameResult* a, const FrameResult* b) { return a->frame < b->frame; });
    for (const FrameResult* fr : ordered) {
        std::vector<FrameEntry> entries = fr->entries;
        std::sort(entries.begin(), entries.end(), [](const FrameEntry& a, const FrameEntry& b) { return a.id < b.id; });
        for (const auto& e : entries) out += format_row(fr->frame, e.id, e.bbox, e.recovered ? 0.99 : 1.0, -1.0);
    }
    return out;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << text;
    if (!out) throw Error("failed writing " + path.string());
}

inline void write_results(const std::vector<FrameResult>& results, const std::filesystem::path& path) {
    write_text(path, format_results(results));
}

/// Ground truth with the visibility column.
inline std::string format_gt(const FrameBoxes& gt) {
    std::string out;
    for (const auto& [frame, boxes] : gt) {
        std::vector<GtBox> sorted = boxes;
        std::sort(sorted.begin(), sorted.end(), [](const GtBox& a, const GtBox& b) { return a.id < b.id; });
        for (const auto& g : sorted) out += format_row(frame, g.id, g.bbox, 1.0, g.visibility);
    }
    return out;
}

inline std::string format_detections(const std::map<FrameIndex, std::vector<Detection>>& dets) {
    std::string out;
    for (const auto& [frame, v] : dets) {
        for (const auto& d : v) out += format_row(frame, -1, d.bbox, d.confidence, -1.0);
    }
    return out;
}

}  // namespace busca
