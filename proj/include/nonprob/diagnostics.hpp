#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "nonprob/matching.hpp"
#include "nonprob/types.hpp"

namespace nonprob::diagnostics {

// Finite-population covariance of the inclusion indicator with a target
// variable, under the empirical measure with point mass 1/N.
struct CellNpa {
    double cov = 0.0;
    double mean_delta = 0.0;
    Index size = 0;
    bool coverage_violation = false;  // mean_delta == 0
};

struct NpaReport {
    double cov = 0.0;
    double mean_delta = 0.0;
    double sd_delta = 0.0;
    double sd_target = 0.0;
    std::map<int, CellNpa> per_cell;
};

NpaReport npa_covariance(const std::vector<int>& delta, const std::vector<double>& v);

// Per-cell covariance of delta with the supplied residuals; cells with no
// selected units are flagged as coverage violations.
NpaReport npa_cellwise(const std::vector<int>& cells, const std::vector<int>& delta,
                       const std::vector<double>& residuals);

struct CheckRow {
    std::string name;
    double residual = 0.0;
    double tolerance = 0.0;
    bool satisfied = false;
};

struct CellComparison {
    int label = 0;
    double population_mean = 0.0;
    double sample_mean = 0.0;
};

struct CheckReport {
    std::vector<CheckRow> rows;
    std::vector<CellComparison> cells;
    std::vector<std::string> notes;

    std::string to_csv() const;   // check,residual,tolerance,satisfied
    std::string to_text() const;
};

// The only two checks available for fitted inclusion propensities:
//   r1 = sum_B 1/p_hat - N    and    r2 = sum_U p_hat - n_B.
// Both vanish for the constant fit n_B/N whatever the true selection, so a
// pass carries no evidence of validity; the report says so on every pass.
CheckReport propensity_checks(const std::vector<double>& p_hat_u,
                              const NonProbSample& b, Index population_size);

// Cell-level variant: p_hat given per stratum label.
CheckReport propensity_checks(const std::map<int, double>& p_hat_by_label,
                              const std::map<int, Index>& stratum_sizes,
                              const NonProbSample& b);

// Goodness-of-fit checks against an auxiliary covariate z observed on B with
// known population total and per-cell means.
CheckReport z_checks(const NonProbSample& b, double z_total,
                     const std::map<int, double>& z_mean_by_label,
                     const std::map<int, Index>& stratum_sizes,
                     const std::map<int, double>& p_hat_by_label);

struct MatchQuality {
    double max_distance = 0.0;
    double mean_distance = 0.0;
    double p95_distance = 0.0;
    double fraction_exact = 0.0;
};

MatchQuality match_quality(const estimators::MatchAssignment& match);

// Seeded permutation null band for the overall covariance of delta with v:
// delta is re-dealt uniformly over all units.
struct PermutationBand {
    double lo = 0.0;
    double hi = 0.0;
    int permutations = 0;
    bool outside(double value) const { return value < lo || value > hi; }
};

PermutationBand permutation_null_band(const std::vector<int>& delta,
                                      const std::vector<double>& v,
                                      int permutations, std::uint64_t seed,
                                      double level = 0.05);

// Within-cell permutation null per cell; returns the band and whether the
// observed cell covariance falls outside it.
struct CellPermResult {
    PermutationBand band;
    double observed = 0.0;
    bool flagged = false;
};

std::map<int, CellPermResult> cellwise_permutation_test(
    const std::vector<int>& cells, const std::vector<int>& delta,
    const std::vector<double>& residuals, int permutations, std::uint64_t seed,
    double level = 0.05);

// Caveat stamped on every passing report.
extern const char* kNonRefutabilityNote;

}  // namespace nonprob::diagnostics
