#pragma once

#include <map>
#include <string>
#include <vector>

#include "nonprob/calibration.hpp"
#include "nonprob/types.hpp"

namespace nonprob::uncertainty {

using estimators::CalibrationFit;

struct VarianceEstimate {
    double value = 0.0;
    std::string method;
    std::map<int, double> components;  // per-cell contributions, when cellular
};

// Variance of the post-stratified total under independent Bernoulli
// inclusion: sum_x (1/p - 1) (1/p) sum_{B_x} y^2 with p = n_xB / N_x.
// The conditional (given observed cell counts) version is the default;
// include_phat_term adds a first-order allowance for the variability of the
// estimated cell propensities.
VarianceEstimate poststrat_variance(const NonProbSample& b,
                                    const std::map<int, Index>& stratum_sizes,
                                    bool include_phat_term = false);

// Same form on the calibration residuals, per t-cell, with N_t aggregated
// from the stratum sizes through the fit's cell structure.
VarianceEstimate calibration_variance(const CalibrationFit& fit,
                                      const NonProbSample& b,
                                      const std::map<int, Index>& stratum_sizes);

// Design-based variance of the Hajek mean: linearised, with finite-population
// correction for SRS-type designs; independent-inclusion form for Poisson.
VarianceEstimate design_variance_hajek(const ProbSample& s);

struct H0TestResult {
    double statistic = 0.0;  // (mean_B - complement estimate)^2 / variance
    bool reject = false;
    double level = 0.05;
    double complement_mean_estimate = 0.0;
    double complement_mean_variance = 0.0;
};

// Test of "population mean equals the B-sample mean" against a probability
// sample of y drawn from U \ B, referred to the chi-square(1) quantile.
H0TestResult h0_test(const NonProbSample& b, const ProbSample& s, double level);

// (1 - W_B)^2 V(hajek on S from U\B) / V(same design drawn from all of U).
// The denominator is the closed-form design variance on the full population.
double relative_efficiency(const NonProbSample& b, const ProbSample& s,
                           const Population& pop);

}  // namespace nonprob::uncertainty
