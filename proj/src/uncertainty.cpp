#include "nonprob/uncertainty.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "nonprob/estimators.hpp"
#include "nonprob/stats.hpp"

namespace nonprob::uncertainty {

VarianceEstimate poststrat_variance(const NonProbSample& b,
                                    const std::map<int, Index>& stratum_sizes,
                                    bool include_phat_term) {
    b.validate();
    std::map<int, double> cell_sum_sq, cell_sum;
    std::map<int, Index> cell_n;
    for (std::size_t i = 0; i < b.x.size(); ++i) {
        cell_sum_sq[b.x[i]] += b.y[i] * b.y[i];
        cell_sum[b.x[i]] += b.y[i];
        ++cell_n[b.x[i]];
    }
    VarianceEstimate v;
    v.method = include_phat_term ? "bernoulli-cell+phat" : "bernoulli-cell";
    for (const auto& [label, n_x] : stratum_sizes) {
        if (n_x <= 0) continue;
        const auto it = cell_n.find(label);
        if (it == cell_n.end())
            throw EstimationError("empty-cell",
                                  "stratum " + std::to_string(label) +
                                      " has no B members");
        if (it->second > n_x)
            throw DataError("cell-size", "n_xB exceeds N_x in stratum " +
                                             std::to_string(label));
        const double inv_p = static_cast<double>(n_x) /
                             static_cast<double>(it->second);
        double term = (inv_p - 1.0) * inv_p * cell_sum_sq[label];
        if (include_phat_term) {
            // First-order allowance for the variability of p_hat = n_xB/N_x.
            const double p = 1.0 / inv_p;
            const double slope = cell_sum[label] * inv_p * inv_p;
            term += slope * slope * p * (1.0 - p) / static_cast<double>(n_x);
        }
        v.components[label] = term;
        v.value += term;
    }
    return v;
}

VarianceEstimate calibration_variance(const CalibrationFit& fit,
                                      const NonProbSample& b,
                                      const std::map<int, Index>& stratum_sizes) {
    if (fit.residuals.size() != static_cast<std::size_t>(b.size()))
        throw EstimationError("fit-mismatch", "fit was not produced from this sample");
    const std::size_t n_cells = fit.cell_t.size();
    std::vector<double> cell_sum_sq(n_cells, 0.0);
    std::vector<Index> cell_n(n_cells, 0);
    for (std::size_t i = 0; i < fit.residuals.size(); ++i) {
        const auto c = static_cast<std::size_t>(fit.cell_of[i]);
        cell_sum_sq[c] += fit.residuals[i] * fit.residuals[i];
        ++cell_n[c];
    }
    VarianceEstimate v;
    v.method = "bernoulli-cell-residual";
    for (std::size_t c = 0; c < n_cells; ++c) {
        Index n_t = 0;
        for (int label : fit.cell_labels[c]) {
            const auto it = stratum_sizes.find(label);
            if (it == stratum_sizes.end())
                throw DataError("unknown-cell",
                                "no population size for stratum " +
                                    std::to_string(label));
            n_t += it->second;
        }
        if (cell_n[c] < 1)
            throw EstimationError("empty-cell",
                                  "t-cell " + std::to_string(c) + " is empty");
        if (cell_n[c] > n_t)
            throw DataError("cell-size",
                            "t-cell count exceeds its population size");
        const double inv_p = static_cast<double>(n_t) /
                             static_cast<double>(cell_n[c]);
        const double term = (inv_p - 1.0) * inv_p * cell_sum_sq[c];
        v.components[static_cast<int>(c)] = term;
        v.value += term;
    }
    return v;
}

VarianceEstimate design_variance_hajek(const ProbSample& s) {
    s.validate();
    if (!s.y) throw DataError("missing-column", "y not observed on S");
    VarianceEstimate v;

    if (const auto* srs = std::get_if<SrsDesign>(&s.design)) {
        if (s.size() < 2)
            throw EstimationError("variance-needs-replicates",
                                  "SRS variance needs n >= 2");
        const double n = static_cast<double>(s.size());
        const double f = n / static_cast<double>(srs->frame_size);
        const double s2 = stats::sample_variance(*s.y);
        v.value = (1.0 - f) * s2 / n;
        v.method = "srs-linearised";
        return v;
    }

    if (const auto* strat = std::get_if<StratifiedSrsDesign>(&s.design)) {
        if (!s.x) throw DataError("missing-column", "x not observed on S");
        double frame_total = 0.0;
        for (const auto& h : strat->strata) frame_total += static_cast<double>(h.frame_size);
        v.method = "stratified-srs-linearised";
        for (const auto& h : strat->strata) {
            std::vector<double> y_h;
            for (std::size_t i = 0; i < s.y->size(); ++i)
                if ((*s.x)[i] == h.stratum) y_h.push_back((*s.y)[i]);
            if (y_h.size() < 2)
                throw EstimationError("variance-needs-replicates",
                                      "stratum " + std::to_string(h.stratum) +
                                          " needs n_h >= 2");
            const double n_h = static_cast<double>(y_h.size());
            const double m_h = static_cast<double>(h.frame_size);
            const double w_h = m_h / frame_total;
            const double term =
                w_h * w_h * (1.0 - n_h / m_h) * stats::sample_variance(y_h) / n_h;
            v.components[h.stratum] = term;
            v.value += term;
        }
        return v;
    }

    // Poisson: independent inclusions, linearised around the Hajek ratio.
    double n_hat = 0.0, num = 0.0;
    for (std::size_t i = 0; i < s.pi.size(); ++i) {
        n_hat += 1.0 / s.pi[i];
        num += (*s.y)[i] / s.pi[i];
    }
    const double y_w = num / n_hat;
    double acc = 0.0;
    for (std::size_t i = 0; i < s.pi.size(); ++i) {
        const double resid = (*s.y)[i] - y_w;
        acc += (1.0 - s.pi[i]) * resid * resid / (s.pi[i] * s.pi[i]);
    }
    v.value = acc / (n_hat * n_hat);
    v.method = "poisson-linearised";
    return v;
}

H0TestResult h0_test(const NonProbSample& b, const ProbSample& s, double level) {
    b.validate();
    if (!(level > 0.0 && level < 1.0))
        throw ConfigError("level-domain", "test level must be in (0,1)");
    std::set<Index> b_set(b.members.begin(), b.members.end());
    for (Index id : s.members)
        if (b_set.count(id))
            throw EstimationError("frame-violation",
                                  "S overlaps B at unit " + std::to_string(id));
    const Estimate hajek = estimators::hajek_mean(s);
    const VarianceEstimate v = design_variance_hajek(s);
    if (!(v.value > 0.0))
        throw EstimationError("degenerate-test",
                              "complement-mean variance estimate is zero");
    const double gap = b.y_mean() - hajek.value;
    H0TestResult result;
    result.statistic = gap * gap / v.value;
    result.level = level;
    result.reject = result.statistic > stats::chi2_quantile_1df(1.0 - level);
    result.complement_mean_estimate = hajek.value;
    result.complement_mean_variance = v.value;
    return result;
}

double relative_efficiency(const NonProbSample& b, const ProbSample& s,
                           const Population& pop) {
    b.validate();
    pop.validate();
    const VarianceEstimate v_s = design_variance_hajek(s);

    // Closed-form design variance of the same design drawn from all of U.
    double v_prime = 0.0;
    if (const auto* srs = std::get_if<SrsDesign>(&s.design)) {
        const double n = static_cast<double>(srs->n);
        const double big_n = static_cast<double>(pop.size());
        v_prime = (1.0 - n / big_n) * stats::sample_variance(pop.y) / n;
    } else if (const auto* strat = std::get_if<StratifiedSrsDesign>(&s.design)) {
        const double big_n = static_cast<double>(pop.size());
        for (const auto& h : strat->strata) {
            std::vector<double> y_h;
            for (std::size_t i = 0; i < pop.y.size(); ++i)
                if (pop.x[i] == h.stratum) y_h.push_back(pop.y[i]);
            if (y_h.size() < 2)
                throw EstimationError("variance-needs-replicates",
                                      "population stratum too small");
            const double n_h = static_cast<double>(h.n);
            const double m_h = static_cast<double>(y_h.size());
            const double w_h = m_h / big_n;
            v_prime +=
                w_h * w_h * (1.0 - n_h / m_h) * stats::sample_variance(y_h) / n_h;
        }
    } else {
        throw EstimationError("unsupported-design",
                              "relative efficiency needs an SRS-type design");
    }
    if (!(v_prime > 0.0))
        throw EstimationError("degenerate-ratio",
                              "hypothetical design variance is zero");
    const double w_b = static_cast<double>(b.size()) /
                       static_cast<double>(pop.size());
    return (1.0 - w_b) * (1.0 - w_b) * v_s.value / v_prime;
}

}  // namespace nonprob::uncertainty
