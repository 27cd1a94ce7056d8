#pragma once

// Test-only reference implementations, kept independent of the library's
// computation paths so they can serve as oracles.

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <vector>

#include "nonprob/types.hpp"

namespace oracles {

// Dense KKT solve of: min ||w - a||^2  s.t.  T w = totals, where column i of
// T is the t-vector of B member i. No cell aggregation anywhere.
inline std::vector<double> qp_calibration_weights(
    const std::vector<std::vector<double>>& t_per_member,
    const std::vector<double>& initial, const std::vector<double>& totals) {
    const auto n = static_cast<Eigen::Index>(t_per_member.size());
    const auto k = static_cast<Eigen::Index>(totals.size());
    Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(n + k, n + k);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + k);
    for (Eigen::Index i = 0; i < n; ++i) {
        kkt(i, i) = 1.0;
        rhs[i] = initial[static_cast<std::size_t>(i)];
        for (Eigen::Index j = 0; j < k; ++j) {
            kkt(i, n + j) = t_per_member[static_cast<std::size_t>(i)]
                                        [static_cast<std::size_t>(j)];
            kkt(n + j, i) = kkt(i, n + j);
        }
    }
    for (Eigen::Index j = 0; j < k; ++j)
        rhs[n + j] = totals[static_cast<std::size_t>(j)];
    const Eigen::VectorXd sol = kkt.fullPivLu().solve(rhs);
    return {sol.data(), sol.data() + n};
}

// All-pairs nearest-neighbour scan with the library's tie rule (smallest
// donor position) and metric (|z|/scale, exact categorical cell).
struct BruteMatch {
    std::vector<std::size_t> donor;
    std::vector<double> distance;
};

inline BruteMatch brute_force_match(const std::vector<double>* s_z,
                                    const std::vector<int>* s_x,
                                    const std::vector<double>* b_z,
                                    const std::vector<int>* b_x, std::size_t n_s,
                                    std::size_t n_b, double scale) {
    BruteMatch out;
    out.donor.assign(n_s, SIZE_MAX);
    out.distance.assign(n_s, std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < n_s; ++i) {
        for (std::size_t j = 0; j < n_b; ++j) {
            if (s_x && b_x && (*s_x)[i] != (*b_x)[j]) continue;
            double d = 0.0;
            if (s_z && b_z) d = std::abs((*s_z)[i] - (*b_z)[j]) / scale;
            if (d < out.distance[i] ||
                (d == out.distance[i] && j < out.donor[i])) {
                out.distance[i] = d;
                out.donor[i] = j;
            }
        }
    }
    return out;
}

}  // namespace oracles
