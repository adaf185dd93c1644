#pragma once

// Shared domain types: boxes, detections, observations, tracks, assignments.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "busca/random.hpp"

namespace busca {

using FrameIndex = std::int64_t;
using TrackId = int;
using FeatureVector = std::vector<float>;

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Input that violates a documented precondition.
class InvalidInput : public Error {
public:
    using Error::Error;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

class NumericError : public Error {
public:
    using Error::Error;
};

/// Axis-aligned box in center form. All I/O converts top-left formats at the boundary.
struct BBox {
    double cx = 0.0;
    double cy = 0.0;
    double w = 1.0;
    double h = 1.0;

    static BBox from_tlwh(double left, double top, double width, double height) {
        return {left + width / 2.0, top + height / 2.0, width, height};
    }

    double left() const { return cx - w / 2.0; }
    double top() const { return cy - h / 2.0; }
    double right() const { return cx + w / 2.0; }
    double bottom() const { return cy + h / 2.0; }
    double area() const { return w * h; }

    bool valid() const {
        return std::isfinite(cx) && std::isfinite(cy) && std::isfinite(w) && std::isfinite(h) &&
               w > 0.0 && h > 0.0;
    }

    friend bool operator==(const BBox&, const BBox&) = default;
};

struct Detection {
    BBox bbox;
    double confidence = 1.0;
    FeatureVector appearance;  // empty when no appearance model is in use
};

enum class ObservationSource { Detector, MotionModel };

struct Observation {
    BBox bbox;
    FrameIndex t = 0;
    FeatureVector appearance;
    ObservationSource source = ObservationSource::Detector;
};

/// SORT-style Kalman state: (cx, cy, w/h, h) and their velocities.
struct KalmanState {
    Eigen::Matrix<double, 8, 1> mean = Eigen::Matrix<double, 8, 1>::Zero();
    Eigen::Matrix<double, 8, 8> covariance = Eigen::Matrix<double, 8, 8>::Identity();
};

enum class TrackState { Active, Paused, Terminated };

struct Track {
    TrackId id = 0;
    std::deque<Observation> history;
    TrackState state = TrackState::Active;
    int paused_age = 0;            // frames spent paused; >= 1 while Paused
    std::int64_t observation_count = 0;  // total ever appended, history may be capped
    KalmanState motion;

    const Observation& last() const { return history.back(); }

    /// Appends an observation, dropping the oldest entries beyond `cap`.
    void append(Observation obs, std::size_t cap) {
        if (!history.empty() && obs.t <= history.back().t) {
            throw InvalidInput("track " + std::to_string(id) +
                               ": observation timestamps must be strictly increasing");
        }
        history.push_back(std::move(obs));
        ++observation_count;
        while (cap > 0 && history.size() > cap) history.pop_front();
    }
};

/// Last min(z, |history|) observations, oldest first.
inline std::vector<Observation> track_window(const Track& track, int z) {
    if (z < 1) throw InvalidInput("track_window: z must be >= 1");
    const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(z), track.history.size());
    return {track.history.end() - static_cast<std::ptrdiff_t>(n), track.history.end()};
}

/// Box with an identity, as found in ground truth or tracker output.
struct GtBox {
    TrackId id = 0;
    BBox bbox;
    double visibility = 1.0;  // NaN when the source carries no visibility
};

/// Identity-labelled boxes per frame.
using FrameBoxes = std::map<FrameIndex, std::vector<GtBox>>;

struct AssignmentSet {
    std::vector<std::pair<TrackId, int>> pairs;
    std::vector<TrackId> unmatched_tracks;
    std::vector<int> unmatched_detections;
};

inline double l2_norm(std::span<const float> v) {
    double s = 0.0;
    for (float x : v) s += static_cast<double>(x) * x;
    return std::sqrt(s);
}

}  // namespace busca
