#pragma once

// Constant-velocity Kalman filter over (cx, cy, aspect, h). Noise standard
// deviations scale with the box height, following the SORT/ByteTrack filter.

#include <optional>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "busca/core.hpp"

namespace busca {

struct KalmanParams {
    double std_weight_position = 1.0 / 20.0;
    double std_weight_velocity = 1.0 / 160.0;
    double process_noise_scale = 1.0;      // multiplies Q; 0 gives a noiseless motion model
    double measurement_noise_scale = 1.0;  // multiplies R
    std::optional<double> fixed_measurement_variance;  // R = v * I when set
};

struct KalmanPrediction {
    KalmanState state;
    BBox bbox;
};

namespace detail {

inline Eigen::Matrix<double, 8, 8> transition() {
    Eigen::Matrix<double, 8, 8> f = Eigen::Matrix<double, 8, 8>::Identity();
    for (int i = 0; i < 4; ++i) f(i, i + 4) = 1.0;
    return f;
}

inline Eigen::Matrix<double, 4, 1> to_measurement(const BBox& b) {
    return {b.cx, b.cy, b.w / b.h, b.h};
}

}  // namespace detail

inline BBox state_bbox(const KalmanState& s) {
    const double h = s.mean(3);
    return {s.mean(0), s.mean(1), s.mean(2) * h, h};
}

inline KalmanState kalman_initiate(const BBox& box, const KalmanParams& p = {}) {
    if (!box.valid()) throw InvalidInput("kalman_initiate: invalid box");
    KalmanState s;
    s.mean.head<4>() = detail::to_measurement(box);
    s.mean.tail<4>().setZero();
    const double h = box.h;
    Eigen::Matrix<double, 8, 1> std;
    std << 2 * p.std_weight_position * h, 2 * p.std_weight_position * h, 1e-2, 2 * p.std_weight_position * h,
        10 * p.std_weight_velocity * h, 10 * p.std_weight_velocity * h, 1e-5, 10 * p.std_weight_velocity * h;
    s.covariance = std.array().square().matrix().asDiagonal();
    return s;
}

inline KalmanPrediction kalman_predict(const KalmanState& state, const KalmanParams& p = {}) {
    static const Eigen::Matrix<double, 8, 8> f = detail::transition();
    const double h = state.mean(3);
    Eigen::Matrix<double, 8, 1> std;
    std << p.std_weight_position * h, p.std_weight_position * h, 1e-2, p.std_weight_position * h,
        p.std_weight_velocity * h, p.std_weight_velocity * h, 1e-5, p.std_weight_velocity * h;
    Eigen::Matrix<double, 8, 8> q = std.array().square().matrix().asDiagonal();
    q *= p.process_noise_scale;

    KalmanPrediction out;
    out.state.mean = f * state.mean;
    out.state.covariance = f * state.covariance * f.transpose() + q;
    out.state.covariance = 0.5 * (out.state.covariance + out.state.covariance.transpose());
    out.bbox = state_bbox(out.state);
    return out;
}

inline KalmanState kalman_update(const KalmanState& state, const BBox& measurement, const KalmanParams& p = {}) {
    if (!std::isfinite(measurement.cx) || !std::isfinite(measurement.cy) || !std::isfinite(measurement.w) ||
        !std::isfinite(measurement.h) || measurement.h <= 0.0) {
        throw InvalidInput("kalman_update: non-finite or degenerate measurement");
    }
    const Eigen::Matrix<double, 4, 1> z = detail::to_measurement(measurement);

    Eigen::Matrix<double, 4, 4> r;
    if (p.fixed_measurement_variance) {
        r = Eigen::Matrix<double, 4, 4>::Identity() * *p.fixed_measurement_variance;
    } else {
        const double h = state.mean(3);
        Eigen::Matrix<double, 4, 1> std{p.std_weight_position * h, p.std_weight_position * h, 1e-1,
                                        p.std_weight_position * h};
        r = std.array().square().matrix().asDiagonal();
        r *= p.measurement_noise_scale;
    }

    // H selects the first four state components.
    const Eigen::Matrix<double, 4, 4> s = state.covariance.topLeftCorner<4, 4>() + r;
    const Eigen::Matrix<double, 8, 4> pht = state.covariance.leftCols<4>();
    const Eigen::LLT<Eigen::Matrix<double, 4, 4>> llt(s);
    if (llt.info() != Eigen::Success) throw NumericError("kalman_update: innovation covariance not positive definite");
    const Eigen::Matrix<double, 8, 4> gain = llt.solve(pht.transpose()).transpose();

    KalmanState out;
    out.mean = state.mean + gain * (z - state.mean.head<4>());
    out.covariance = state.covariance - gain * s * gain.transpose();
    out.covariance = 0.5 * (out.covariance + out.covariance.transpose());
    out.mean(3) = std::max(out.mean(3), 1e-6);
    return out;
}

}  // namespace busca
