#pragma once

#include <optional>
#include <string>
#include <vector>

#include "nonprob/types.hpp"

namespace nonprob::estimators {

// Matching metric over the observed covariates: absolute difference on the
// standardised numeric z, an exact-cell constraint on the categorical x, or
// both. z_scale overrides the standardisation SD (population SD when the
// caller knows it; pooled-sample SD otherwise).
struct MatchMetric {
    bool match_on_z = true;
    bool exact_on_x = false;
    std::optional<double> z_scale;

    std::string describe() const;
};

struct MatchAssignment {
    std::vector<std::size_t> donor;  // index into the B-sample columns
    std::vector<double> distance;
    std::vector<double> imputed_y;   // y of the donor
    std::string metric;
};

// Nearest donor in B for every S member; ties go to the smallest donor unit
// id. Errors if any member has no donor at finite distance.
MatchAssignment nn_match(const ProbSample& s, const NonProbSample& b,
                         const MatchMetric& metric = {});

// Distance to the nearest donor per S member; +inf where no donor exists
// under the metric (used for support screening).
std::vector<double> nn_min_distances(const ProbSample& s, const NonProbSample& b,
                                     const MatchMetric& metric = {});

// Each B unit's distance to its nearest other B unit.
std::vector<double> within_b_nn_distances(const NonProbSample& b,
                                          const MatchMetric& metric = {});

// sum_S d_i y_{k_i}.
Estimate sm_estimate(const ProbSample& s, const MatchAssignment& match);

// Calibration vector per S member for the second-phase weights.
enum class STmap { intercept_z, x_dummies, intercept_only };

// Support-screened matching estimator: S units within epsilon of the
// B-support are kept, reweighted so their d*w2-weighted t totals match the
// full-S d-weighted totals, then NN-imputed. epsilon defaults to the 95th
// percentile of the within-B nearest-neighbour distances.
Estimate two_phase_sm(const ProbSample& s, const NonProbSample& b,
                      std::optional<double> epsilon = std::nullopt,
                      STmap tmap = STmap::intercept_z,
                      const MatchMetric& metric = {});

}  // namespace nonprob::estimators
