#include "nonprob/diagnostics.hpp"

#include <algorithm>
#include <cmath>

#include "nonprob/rng.hpp"
#include "nonprob/stats.hpp"

namespace nonprob::diagnostics {

const char* kNonRefutabilityNote =
    "note: a constant propensity fit satisfies these identities under any "
    "selection mechanism, so a pass cannot refute informative selection";

namespace {

constexpr double kRelTol = 1e-8;

// Single-pass co-moment accumulator (Welford form).
struct CoMoment {
    Index n = 0;
    double mean_a = 0.0;
    double mean_b = 0.0;
    double c_ab = 0.0;
    double m2_a = 0.0;
    double m2_b = 0.0;

    void add(double a, double b) {
        ++n;
        const double da = a - mean_a;
        mean_a += da / static_cast<double>(n);
        m2_a += da * (a - mean_a);
        const double db = b - mean_b;
        mean_b += db / static_cast<double>(n);
        m2_b += db * (b - mean_b);
        c_ab += da * (b - mean_b);
    }

    double cov() const { return c_ab / static_cast<double>(n); }
    double sd_a() const { return std::sqrt(m2_a / static_cast<double>(n)); }
    double sd_b() const { return std::sqrt(m2_b / static_cast<double>(n)); }
};

CheckRow make_row(std::string name, double residual, double scale) {
    CheckRow row;
    row.name = std::move(name);
    row.residual = residual;
    row.tolerance = kRelTol * std::max(1.0, std::abs(scale));
    row.satisfied = std::abs(residual) <= row.tolerance;
    return row;
}

}  // namespace

NpaReport npa_covariance(const std::vector<int>& delta, const std::vector<double>& v) {
    if (delta.size() != v.size() || delta.empty())
        throw DataError("length-mismatch", "delta and target must have equal length >= 1");
    CoMoment acc;
    for (std::size_t i = 0; i < delta.size(); ++i)
        acc.add(static_cast<double>(delta[i]), v[i]);
    NpaReport report;
    report.cov = acc.cov();
    report.mean_delta = acc.mean_a;
    report.sd_delta = acc.sd_a();
    report.sd_target = acc.sd_b();
    return report;
}

NpaReport npa_cellwise(const std::vector<int>& cells, const std::vector<int>& delta,
                       const std::vector<double>& residuals) {
    if (cells.size() != delta.size() || cells.size() != residuals.size() || cells.empty())
        throw DataError("length-mismatch", "cell, delta and residual lengths differ");
    std::map<int, CoMoment> acc;
    for (std::size_t i = 0; i < cells.size(); ++i)
        acc[cells[i]].add(static_cast<double>(delta[i]), residuals[i]);
    NpaReport report;
    CoMoment overall;
    for (std::size_t i = 0; i < cells.size(); ++i)
        overall.add(static_cast<double>(delta[i]), residuals[i]);
    report.cov = overall.cov();
    report.mean_delta = overall.mean_a;
    report.sd_delta = overall.sd_a();
    report.sd_target = overall.sd_b();
    for (const auto& [label, m] : acc) {
        CellNpa cell;
        cell.cov = m.cov();
        cell.mean_delta = m.mean_a;
        cell.size = m.n;
        cell.coverage_violation = m.mean_a == 0.0;
        report.per_cell[label] = cell;
    }
    return report;
}

std::string CheckReport::to_csv() const {
    std::string out = "check,residual,tolerance,satisfied\n";
    for (const auto& row : rows) {
        out += row.name;
        out += ',';
        out += stats::format_double(row.residual);
        out += ',';
        out += stats::format_double(row.tolerance);
        out += ',';
        out += row.satisfied ? "1" : "0";
        out += '\n';
    }
    return out;
}

std::string CheckReport::to_text() const {
    std::string out;
    for (const auto& row : rows) {
        out += row.name + ": residual " + stats::format_double(row.residual) +
               " (tolerance " + stats::format_double(row.tolerance) + ") -> " +
               (row.satisfied ? "satisfied" : "violated") + "\n";
    }
    for (const auto& cell : cells) {
        out += "  cell " + std::to_string(cell.label) + ": population mean " +
               stats::format_double(cell.population_mean) + ", sample mean " +
               stats::format_double(cell.sample_mean) + "\n";
    }
    for (const auto& note : notes) out += note + "\n";
    return out;
}

CheckReport propensity_checks(const std::vector<double>& p_hat_u,
                              const NonProbSample& b, Index population_size) {
    b.validate();
    if (static_cast<Index>(p_hat_u.size()) != population_size)
        throw DataError("length-mismatch", "p_hat must cover all N units");
    const double n = static_cast<double>(population_size);
    double sum_inv = 0.0;
    for (Index id : b.members) {
        if (id < 0 || id >= population_size)
            throw DataError("unknown-unit", "B member outside the population");
        const double p = p_hat_u[static_cast<std::size_t>(id)];
        if (!(p > 0.0 && p <= 1.0))
            throw DataError("propensity-range",
                            "p_hat outside (0,1] on a B member");
        sum_inv += 1.0 / p;
    }
    double sum_p = 0.0;
    for (double p : p_hat_u) sum_p += p;

    CheckReport report;
    report.rows.push_back(make_row("inverse-propensity-sum", sum_inv - n, n));
    report.rows.push_back(
        make_row("propensity-total", sum_p - static_cast<double>(b.size()), n));
    if (report.rows[0].satisfied && report.rows[1].satisfied)
        report.notes.push_back(kNonRefutabilityNote);
    return report;
}

CheckReport propensity_checks(const std::map<int, double>& p_hat_by_label,
                              const std::map<int, Index>& stratum_sizes,
                              const NonProbSample& b) {
    b.validate();
    double n = 0.0;
    double sum_p = 0.0;
    for (const auto& [label, n_x] : stratum_sizes) {
        n += static_cast<double>(n_x);
        const auto it = p_hat_by_label.find(label);
        if (it == p_hat_by_label.end())
            throw DataError("unknown-cell",
                            "no p_hat for stratum " + std::to_string(label));
        sum_p += static_cast<double>(n_x) * it->second;
    }
    double sum_inv = 0.0;
    for (int label : b.x) {
        const auto it = p_hat_by_label.find(label);
        if (it == p_hat_by_label.end())
            throw DataError("unknown-cell",
                            "no p_hat for stratum " + std::to_string(label));
        if (!(it->second > 0.0 && it->second <= 1.0))
            throw DataError("propensity-range",
                            "p_hat outside (0,1] on a B member");
        sum_inv += 1.0 / it->second;
    }
    CheckReport report;
    report.rows.push_back(make_row("inverse-propensity-sum", sum_inv - n, n));
    report.rows.push_back(
        make_row("propensity-total", sum_p - static_cast<double>(b.size()), n));
    if (report.rows[0].satisfied && report.rows[1].satisfied)
        report.notes.push_back(kNonRefutabilityNote);
    return report;
}

CheckReport z_checks(const NonProbSample& b, double z_total,
                     const std::map<int, double>& z_mean_by_label,
                     const std::map<int, Index>& stratum_sizes,
                     const std::map<int, double>& p_hat_by_label) {
    b.validate();
    if (!b.z) throw DataError("missing-column", "z not observed on B");

    std::map<int, double> cell_z_sum;
    std::map<int, Index> cell_n;
    double z_b = 0.0;
    for (std::size_t i = 0; i < b.x.size(); ++i) {
        cell_z_sum[b.x[i]] += (*b.z)[i];
        ++cell_n[b.x[i]];
        z_b += (*b.z)[i];
    }

    double expected_z_b = 0.0;  // sum_x p_hat_x N_x zbar_x
    double ipw_z = 0.0;         // sum_x n_xB zbar_xB / p_hat_x
    CheckReport report;
    for (const auto& [label, n_b] : cell_n) {
        const auto size_it = stratum_sizes.find(label);
        const auto mean_it = z_mean_by_label.find(label);
        const auto p_it = p_hat_by_label.find(label);
        if (size_it == stratum_sizes.end() || mean_it == z_mean_by_label.end() ||
            p_it == p_hat_by_label.end())
            throw DataError("unknown-cell",
                            "missing margin for stratum " + std::to_string(label));
        if (!(p_it->second > 0.0))
            throw DataError("propensity-range", "p_hat must be positive");
        ipw_z += cell_z_sum[label] / p_it->second;
        CellComparison cmp;
        cmp.label = label;
        cmp.population_mean = mean_it->second;
        cmp.sample_mean = cell_z_sum[label] / static_cast<double>(n_b);
        report.cells.push_back(cmp);
    }
    for (const auto& [label, n_x] : stratum_sizes) {
        const auto mean_it = z_mean_by_label.find(label);
        const auto p_it = p_hat_by_label.find(label);
        if (mean_it == z_mean_by_label.end() || p_it == p_hat_by_label.end())
            throw DataError("unknown-cell",
                            "missing margin for stratum " + std::to_string(label));
        expected_z_b += p_it->second * static_cast<double>(n_x) * mean_it->second;
    }

    report.rows.push_back(make_row("observed-z-total", z_b - expected_z_b,
                                   std::max(std::abs(z_b), std::abs(z_total))));
    report.rows.push_back(make_row("ipw-z-total", z_total - ipw_z,
                                   std::max(std::abs(z_b), std::abs(z_total))));
    report.notes.push_back(
        "note: passing z-checks support the selection model for y only insofar "
        "as z is correlated with y; a covariate good enough to validate the "
        "model would normally belong in the estimator itself");
    if (report.rows[0].satisfied && report.rows[1].satisfied)
        report.notes.push_back(kNonRefutabilityNote);
    return report;
}

MatchQuality match_quality(const estimators::MatchAssignment& match) {
    if (match.distance.empty())
        throw EstimationError("empty-match", "match assignment has no members");
    MatchQuality q;
    double sum = 0.0;
    Index exact = 0;
    for (double d : match.distance) {
        q.max_distance = std::max(q.max_distance, d);
        sum += d;
        if (d == 0.0) ++exact;
    }
    q.mean_distance = sum / static_cast<double>(match.distance.size());
    q.p95_distance = stats::percentile(match.distance, 0.95);
    q.fraction_exact =
        static_cast<double>(exact) / static_cast<double>(match.distance.size());
    return q;
}

PermutationBand permutation_null_band(const std::vector<int>& delta,
                                      const std::vector<double>& v,
                                      int permutations, std::uint64_t seed,
                                      double level) {
    if (delta.size() != v.size() || delta.empty())
        throw DataError("length-mismatch", "delta and target must have equal length");
    std::vector<double> stats_null(static_cast<std::size_t>(permutations));
    std::vector<int> permuted = delta;
    for (int p = 0; p < permutations; ++p) {
        Rng rng(derive_seed(seed, 0x9E12, static_cast<std::uint64_t>(p)));
        for (std::size_t i = permuted.size() - 1; i > 0; --i) {
            const auto j = static_cast<std::size_t>(rng.uniform_below(i + 1));
            std::swap(permuted[i], permuted[j]);
        }
        stats_null[static_cast<std::size_t>(p)] = npa_covariance(permuted, v).cov;
    }
    PermutationBand band;
    band.permutations = permutations;
    band.lo = stats::percentile(stats_null, level / 2.0);
    band.hi = stats::percentile(stats_null, 1.0 - level / 2.0);
    return band;
}

std::map<int, CellPermResult> cellwise_permutation_test(
    const std::vector<int>& cells, const std::vector<int>& delta,
    const std::vector<double>& residuals, int permutations, std::uint64_t seed,
    double level) {
    const NpaReport observed = npa_cellwise(cells, delta, residuals);

    std::map<int, std::vector<std::size_t>> members;
    for (std::size_t i = 0; i < cells.size(); ++i) members[cells[i]].push_back(i);

    std::map<int, std::vector<double>> null_stats;
    std::vector<int> permuted = delta;
    for (int p = 0; p < permutations; ++p) {
        Rng rng(derive_seed(seed, 0xCE77, static_cast<std::uint64_t>(p)));
        for (const auto& [label, idx] : members) {
            for (std::size_t i = idx.size() - 1; i > 0; --i) {
                const auto j = static_cast<std::size_t>(rng.uniform_below(i + 1));
                std::swap(permuted[idx[i]], permuted[idx[j]]);
            }
        }
        const NpaReport rep = npa_cellwise(cells, permuted, residuals);
        for (const auto& [label, cell] : rep.per_cell)
            null_stats[label].push_back(cell.cov);
    }

    std::map<int, CellPermResult> out;
    for (const auto& [label, values] : null_stats) {
        CellPermResult r;
        r.band.permutations = permutations;
        r.band.lo = stats::percentile(values, level / 2.0);
        r.band.hi = stats::percentile(values, 1.0 - level / 2.0);
        r.observed = observed.per_cell.at(label).cov;
        r.flagged = r.band.outside(r.observed);
        out[label] = r;
    }
    return out;
}

}  // namespace nonprob::diagnostics
