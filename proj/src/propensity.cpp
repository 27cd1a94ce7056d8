#include "nonprob/propensity.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <set>

#include "nonprob/stats.hpp"

namespace nonprob::estimators {

namespace {

constexpr double kClampLo = 1e-6;
constexpr double kClampHi = 1.0 - 1e-6;
constexpr double kScoreTol = 1e-10;
constexpr int kMaxNewtonIter = 100;

double expit(double v) { return 1.0 / (1.0 + std::exp(-v)); }

// One fitting cell: regressor vector, trial mass, success mass. Census fits
// use unit counts; S-based fits use design-weighted (or unweighted) counts.
struct FitCell {
    int label = 0;
    std::vector<double> t;
    double trials = 0.0;
    double successes = 0.0;
};

// Newton with step halving on the mean log-likelihood.
std::vector<double> solve_logistic(const std::vector<FitCell>& cells, std::size_t k,
                                   int& iterations, double& score_norm) {
    double total = 0.0;
    for (const auto& c : cells) total += c.trials;

    auto loglik = [&](const Eigen::VectorXd& eta) {
        double ll = 0.0;
        for (const auto& c : cells) {
            double lin = 0.0;
            for (std::size_t j = 0; j < k; ++j) lin += c.t[j] * eta[static_cast<Eigen::Index>(j)];
            // log p and log(1-p) written through log1p(exp(.)) for stability
            const double log_p = -std::log1p(std::exp(-lin));
            const double log_q = -std::log1p(std::exp(lin));
            ll += c.successes * log_p + (c.trials - c.successes) * log_q;
        }
        return ll / total;
    };

    Eigen::VectorXd eta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(k));
    double ll = loglik(eta);
    std::string trace;
    for (iterations = 0; iterations < kMaxNewtonIter; ++iterations) {
        Eigen::VectorXd score = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(k));
        Eigen::MatrixXd info = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(k),
                                                     static_cast<Eigen::Index>(k));
        for (const auto& c : cells) {
            double lin = 0.0;
            for (std::size_t j = 0; j < k; ++j) lin += c.t[j] * eta[static_cast<Eigen::Index>(j)];
            const double p = expit(lin);
            const double resid = c.successes - c.trials * p;
            const double curv = c.trials * p * (1.0 - p);
            for (std::size_t j = 0; j < k; ++j) {
                score[static_cast<Eigen::Index>(j)] += c.t[j] * resid;
                for (std::size_t l = 0; l < k; ++l)
                    info(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(l)) +=
                        curv * c.t[j] * c.t[l];
            }
        }
        score /= total;
        info /= total;
        score_norm = score.lpNorm<Eigen::Infinity>();
        trace += stats::format_double(score_norm) + " ";
        if (score_norm <= kScoreTol && iterations > 0) {
            // A vanishing score with a numerically saturated pure cell means
            // the likelihood is maximised at the boundary (separation).
            for (const auto& c : cells) {
                double lin = 0.0;
                for (std::size_t j = 0; j < k; ++j)
                    lin += c.t[j] * eta[static_cast<Eigen::Index>(j)];
                const bool pure = c.successes == 0.0 || c.successes == c.trials;
                if (pure && std::abs(lin) > 15.0)
                    throw EstimationError(
                        "fit-error",
                        "separation: stratum " + std::to_string(c.label) +
                            " is driven to the boundary; score trace: " + trace);
            }
            return {eta.data(), eta.data() + eta.size()};
        }

        Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
        if (ldlt.info() != Eigen::Success)
            throw EstimationError("fit-error", "singular information matrix; score trace: " + trace);
        const Eigen::VectorXd direction = ldlt.solve(score);
        double step = 1.0;
        Eigen::VectorXd candidate;
        double ll_new = -std::numeric_limits<double>::infinity();
        for (int h = 0; h < 40; ++h) {
            candidate = eta + step * direction;
            ll_new = loglik(candidate);
            if (ll_new >= ll - 1e-14) break;
            step *= 0.5;
        }
        eta = candidate;
        ll = ll_new;
    }
    if (score_norm <= kScoreTol) return {eta.data(), eta.data() + eta.size()};
    throw EstimationError("fit-error",
                          "no convergence after " + std::to_string(kMaxNewtonIter) +
                              " iterations; score trace: " + trace);
}

PropensityFit finish_fit(PropensityFit fit, const NonProbSample& b) {
    fit.p_b.reserve(static_cast<std::size_t>(b.size()));
    for (int label : b.x) {
        const auto it = fit.p_by_label.find(label);
        if (it == fit.p_by_label.end())
            throw EstimationError("empty-cell",
                                  "no fitted propensity for stratum " + std::to_string(label));
        double p = it->second;
        if (p < kClampLo || p > kClampHi) {
            fit.clamped = true;
            p = std::clamp(p, kClampLo, kClampHi);
        }
        fit.p_b.push_back(p);
    }
    return fit;
}

PropensityFit fit_from_cells(const NonProbSample& b, std::vector<FitCell> cells,
                             const PropensityModel& model, PropensitySource source) {
    PropensityFit fit;
    fit.model = model.kind;
    fit.source = source;
    if (model.kind == PropensityModelKind::saturated) {
        for (const auto& c : cells) {
            if (c.trials <= 0.0 || c.successes <= 0.0)
                throw EstimationError("empty-cell",
                                      "stratum " + std::to_string(c.label) +
                                          " has no members to fit");
            fit.p_by_label[c.label] = c.successes / c.trials;
        }
        fit.score_norm = 0.0;
        fit.iterations = 0;
        return finish_fit(std::move(fit), b);
    }

    // Logistic: collapse label cells onto their regressor vectors.
    if (model.t_map.empty())
        throw ConfigError("t-map-empty", "logistic model needs a t-map");
    const std::size_t k = model.t_map.begin()->second.size();
    for (auto& c : cells) {
        const auto it = model.t_map.find(c.label);
        if (it == model.t_map.end())
            throw ConfigError("t-map-label",
                              "no regressor vector for stratum " + std::to_string(c.label));
        if (it->second.size() != k)
            throw ConfigError("t-map-shape", "regressor vectors differ in length");
        c.t = it->second;
    }
    fit.params = solve_logistic(cells, k, fit.iterations, fit.score_norm);
    for (const auto& c : cells) {
        double lin = 0.0;
        for (std::size_t j = 0; j < k; ++j) lin += c.t[j] * fit.params[j];
        fit.p_by_label[c.label] = expit(lin);
    }
    return finish_fit(std::move(fit), b);
}

}  // namespace

const char* to_string(PropensityModelKind k) {
    return k == PropensityModelKind::saturated ? "saturated" : "logistic";
}

const char* to_string(PropensitySource s) {
    switch (s) {
        case PropensitySource::census: return "census";
        case PropensitySource::pseudo_population: return "pseudo-population";
        case PropensitySource::unweighted_s: return "unweighted-s";
        case PropensitySource::reference_pooled: return "reference-pooled";
    }
    return "census";
}

double PropensityFit::p_hat(int label) const {
    const auto it = p_by_label.find(label);
    if (it == p_by_label.end())
        throw EstimationError("empty-cell",
                              "no fitted propensity for stratum " + std::to_string(label));
    return std::clamp(it->second, kClampLo, kClampHi);
}

PropensityFit fit_propensity_census(const NonProbSample& b,
                                    const std::map<int, Index>& stratum_sizes,
                                    const PropensityModel& model) {
    b.validate();
    const auto counts = b.cell_counts();
    for (const auto& [label, n_xb] : counts) {
        const auto it = stratum_sizes.find(label);
        if (it == stratum_sizes.end() || it->second < n_xb)
            throw DataError("cell-size",
                            "stratum " + std::to_string(label) +
                                " smaller than its B-sample count");
    }
    std::vector<FitCell> cells;
    for (const auto& [label, n_x] : stratum_sizes) {
        if (n_x <= 0) continue;
        FitCell c;
        c.label = label;
        c.trials = static_cast<double>(n_x);
        const auto it = counts.find(label);
        c.successes = it == counts.end() ? 0.0 : static_cast<double>(it->second);
        cells.push_back(std::move(c));
    }
    return fit_from_cells(b, std::move(cells), model, PropensitySource::census);
}

PropensityFit fit_propensity_from_s(const NonProbSample& b, const ProbSample& s,
                                    bool design_weighted, const PropensityModel& model) {
    b.validate();
    s.validate();
    if (!s.x) throw DataError("missing-column", "x not observed on S");
    const std::set<Index> b_members(b.members.begin(), b.members.end());
    std::map<int, FitCell> cells;
    for (Index i = 0; i < s.size(); ++i) {
        const auto u = static_cast<std::size_t>(i);
        const int label = (*s.x)[u];
        const double w = design_weighted ? s.d[u] : 1.0;
        auto& c = cells[label];
        c.label = label;
        c.trials += w;
        if (b_members.count(s.members[u])) c.successes += w;
    }
    std::vector<FitCell> cell_vec;
    cell_vec.reserve(cells.size());
    for (auto& [label, c] : cells) cell_vec.push_back(std::move(c));
    return fit_from_cells(b, std::move(cell_vec), model,
                          design_weighted ? PropensitySource::pseudo_population
                                          : PropensitySource::unweighted_s);
}

Estimate ipw(const NonProbSample& b, const PropensityFit& fit) {
    if (fit.p_b.size() != static_cast<std::size_t>(b.size()))
        throw EstimationError("fit-mismatch", "fitted propensities missing for B members");
    double total = 0.0;
    for (std::size_t i = 0; i < fit.p_b.size(); ++i) {
        if (!(fit.p_b[i] > 0.0))
            throw EstimationError("invalid-propensity", "fitted propensity not positive");
        total += b.y[i] / fit.p_b[i];
    }
    Estimate e;
    e.target = Target::total;
    e.value = total;
    e.estimator_id = "ipw";
    e.diagnostics["model"] = to_string(fit.model);
    e.diagnostics["source"] = to_string(fit.source);
    e.diagnostics["iterations"] = std::to_string(fit.iterations);
    e.diagnostics["clamped"] = fit.clamped ? "1" : "0";
    e.diagnostics["assumptions"] = fit.source == PropensitySource::census
                                       ? "p-determined-by-x"
                                       : "p-determined-by-x;s-sampling-noninformative";
    return e;
}

Estimate reference_ipw(const NonProbSample& b, const ProbSample& s,
                       Index population_size, PropensityModelKind kind,
                       const TMap* t_map) {
    b.validate();
    s.validate();
    if (!s.x) throw DataError("missing-column", "x not observed on S");
    if (population_size < b.size())
        throw DataError("inconsistent-inputs", "N smaller than the B-sample size");

    // Pooled counts per cell; units appearing in both samples stay once per role.
    std::map<int, double> n_b_cell, n_s_cell, pi_sum, pi_min, pi_max;
    for (int label : b.x) ++n_b_cell[label];
    for (Index i = 0; i < s.size(); ++i) {
        const auto u = static_cast<std::size_t>(i);
        const int label = (*s.x)[u];
        ++n_s_cell[label];
        pi_sum[label] += s.pi[u];
        const auto [it, fresh] = pi_min.emplace(label, s.pi[u]);
        if (!fresh) it->second = std::min(it->second, s.pi[u]);
        const auto [jt, fresh2] = pi_max.emplace(label, s.pi[u]);
        if (!fresh2) jt->second = std::max(jt->second, s.pi[u]);
    }
    std::set<Index> b_set(b.members.begin(), b.members.end());
    Index duplicates = 0;
    for (Index id : s.members)
        if (b_set.count(id)) ++duplicates;

    // Membership odds per cell.
    std::map<int, double> odds;
    if (kind == PropensityModelKind::saturated) {
        for (const auto& [label, nb] : n_b_cell) {
            const auto it = n_s_cell.find(label);
            if (it == n_s_cell.end() || it->second <= 0.0)
                throw EstimationError("inestimable-ratio",
                                      "pooled cell " + std::to_string(label) +
                                          " has only one membership class");
            odds[label] = nb / it->second;
        }
    } else {
        if (!t_map) throw ConfigError("t-map-empty", "logistic reference fit needs a t-map");
        std::vector<FitCell> cells;
        std::set<int> labels;
        for (const auto& [label, nb] : n_b_cell) labels.insert(label);
        for (const auto& [label, ns] : n_s_cell) labels.insert(label);
        for (int label : labels) {
            FitCell c;
            c.label = label;
            const auto nb = n_b_cell.count(label) ? n_b_cell[label] : 0.0;
            const auto ns = n_s_cell.count(label) ? n_s_cell[label] : 0.0;
            c.trials = nb + ns;
            c.successes = nb;
            const auto it = t_map->find(label);
            if (it == t_map->end())
                throw ConfigError("t-map-label",
                                  "no regressor vector for stratum " + std::to_string(label));
            c.t = it->second;
            cells.push_back(std::move(c));
        }
        const std::size_t k = t_map->begin()->second.size();
        int iterations = 0;
        double score_norm = 0.0;
        const auto eta = solve_logistic(cells, k, iterations, score_norm);
        for (const auto& c : cells) {
            double lin = 0.0;
            for (std::size_t j = 0; j < k; ++j) lin += c.t[j] * eta[j];
            odds[c.label] = std::exp(lin);
        }
    }

    // Unnormalised propensity g_i, then the constant from sum_B 1/p = N.
    double sum_inv_g = 0.0, sum_y_over_g = 0.0;
    double pi_spread = 0.0;
    for (std::size_t i = 0; i < static_cast<std::size_t>(b.size()); ++i) {
        const int label = b.x[i];
        const auto ns = n_s_cell.find(label);
        if (ns == n_s_cell.end())
            throw EstimationError("inestimable-ratio",
                                  "pooled cell " + std::to_string(label) +
                                      " has only one membership class");
        const double pi_cell = pi_sum[label] / ns->second;
        pi_spread = std::max(pi_spread, pi_max[label] - pi_min[label]);
        const double g = pi_cell * odds.at(label);
        if (!(g > 0.0))
            throw EstimationError("invalid-propensity", "non-positive membership ratio");
        sum_inv_g += 1.0 / g;
        sum_y_over_g += b.y[i] / g;
    }
    const double n = static_cast<double>(population_size);

    Estimate e;
    e.target = Target::total;
    e.value = n * sum_y_over_g / sum_inv_g;
    e.estimator_id = "reference_ipw";
    e.diagnostics["model"] = to_string(kind);
    e.diagnostics["pooled_duplicates"] = std::to_string(duplicates);
    e.diagnostics["pi_cell_spread"] = stats::format_double(pi_spread);
    e.diagnostics["normalisation"] = stats::format_double(sum_inv_g / n);
    e.diagnostics["assumptions"] = "b-and-s-membership-determined-by-same-x";
    return e;
}

}  // namespace nonprob::estimators
