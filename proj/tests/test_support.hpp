#pragma once

#include <algorithm>
#include <filesystem>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "busca/core.hpp"

namespace busca::testing {

inline Track make_track(TrackId id, int n, FrameIndex first = 1, int feature_dim = 0) {
    Track t;
    t.id = id;
    for (int i = 0; i < n; ++i) {
        Observation o;
        o.bbox = {100.0 + i, 50.0, 20.0, 40.0};
        o.t = first + i;
        o.appearance.assign(static_cast<std::size_t>(feature_dim), 0.0f);
        t.append(o, 0);
    }
    return t;
}

// Matching with the most pairs below the gate, then the least total cost, by
// enumerating every injective map from the smaller side.
struct BruteForceMatch {
    int pairs = 0;
    double cost = 0.0;
};

inline BruteForceMatch brute_force_assignment(const Eigen::MatrixXd& c, double gate) {
    const bool flip = c.rows() > c.cols();
    const Eigen::MatrixXd a = flip ? Eigen::MatrixXd(c.transpose()) : c;
    const int n = static_cast<int>(a.rows()), m = static_cast<int>(a.cols());
    BruteForceMatch best{-1, 0.0};
    std::vector<int> cols(static_cast<std::size_t>(m));
    std::iota(cols.begin(), cols.end(), 0);
    // Permutations of all columns cover every injective row->column map.
    do {
        int k = 0;
        double total = 0.0;
        for (int i = 0; i < n; ++i) {
            const double v = a(i, cols[static_cast<std::size_t>(i)]);
            if (v < gate) {
                ++k;
                total += v;
            }
        }
        if (k > best.pairs || (k == best.pairs && total < best.cost)) best = {k, total};
    } while (std::next_permutation(cols.begin(), cols.end()));
    if (best.pairs < 0) best = {0, 0.0};
    return best;
}

inline std::filesystem::path temp_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("busca_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace busca::testing
