#include "nonprob/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "nonprob/stats.hpp"
#include "nonprob/uncertainty.hpp"

namespace nonprob::estimators {

Estimate expansion(const NonProbSample& b, Index population_size) {
    b.validate();
    if (population_size < b.size())
        throw EstimationError("inconsistent-inputs",
                              "N smaller than the B-sample size");
    Estimate e;
    e.target = Target::total;
    e.value = static_cast<double>(population_size) * b.y_mean();
    e.estimator_id = "expansion";
    return e;
}

Estimate post_stratified(const NonProbSample& b,
                         const std::map<int, Index>& stratum_sizes) {
    b.validate();
    std::map<int, double> cell_sum;
    std::map<int, Index> cell_n;
    for (std::size_t i = 0; i < b.x.size(); ++i) {
        cell_sum[b.x[i]] += b.y[i];
        ++cell_n[b.x[i]];
    }
    for (const auto& [label, n] : cell_n)
        if (!stratum_sizes.count(label))
            throw DataError("unknown-cell",
                            "B contains stratum " + std::to_string(label) +
                                " absent from the margins");
    double total = 0.0;
    for (const auto& [label, n_x] : stratum_sizes) {
        if (n_x <= 0) continue;
        const auto it = cell_n.find(label);
        if (it == cell_n.end())
            throw EstimationError("empty-cell",
                                  "stratum " + std::to_string(label) +
                                      " has no B members");
        total += static_cast<double>(n_x) * cell_sum[label] /
                 static_cast<double>(it->second);
    }
    Estimate e;
    e.target = Target::total;
    e.value = total;
    e.estimator_id = "poststrat";
    return e;
}

NonProbSample collapse_cells(const NonProbSample& b,
                             const std::map<int, int>& relabel) {
    NonProbSample out = b;
    for (auto& label : out.x) {
        const auto it = relabel.find(label);
        if (it != relabel.end()) label = it->second;
    }
    return out;
}

std::map<int, Index> collapse_sizes(const std::map<int, Index>& stratum_sizes,
                                    const std::map<int, int>& relabel) {
    std::map<int, Index> out;
    for (const auto& [label, n] : stratum_sizes) {
        const auto it = relabel.find(label);
        out[it == relabel.end() ? label : it->second] += n;
    }
    return out;
}

Estimate hajek_mean(const ProbSample& s) {
    s.validate();
    if (!s.y) throw DataError("missing-column", "y not observed on S");
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < s.pi.size(); ++i) {
        num += (*s.y)[i] / s.pi[i];
        den += 1.0 / s.pi[i];
    }
    Estimate e;
    e.target = Target::mean;
    e.value = num / den;
    e.estimator_id = "hajek";
    e.diagnostics["weight_sum"] = stats::format_double(den);
    return e;
}

namespace {

void check_disjoint(const NonProbSample& b, const ProbSample& s) {
    std::set<Index> b_set(b.members.begin(), b.members.end());
    for (Index id : s.members)
        if (b_set.count(id))
            throw EstimationError("frame-violation",
                                  "S overlaps B at unit " + std::to_string(id));
}

}  // namespace

Estimate split_population(const NonProbSample& b, const ProbSample& s,
                          Index population_size) {
    b.validate();
    if (population_size < b.size())
        throw EstimationError("inconsistent-inputs",
                              "N smaller than the B-sample size");
    const double w_b = static_cast<double>(b.size()) /
                       static_cast<double>(population_size);
    Estimate e;
    e.target = Target::mean;
    e.estimator_id = "split_population";
    e.diagnostics["w_b"] = stats::format_double(w_b);
    if (b.size() == population_size) {
        // B is a census; the complement is empty and carries no weight.
        e.value = b.y_mean();
        return e;
    }
    check_disjoint(b, s);
    const Estimate hajek = hajek_mean(s);
    e.value = w_b * b.y_mean() + (1.0 - w_b) * hajek.value;
    e.diagnostics["complement_mean"] = stats::format_double(hajek.value);
    return e;
}

Estimate composite(const NonProbSample& b, const ProbSample& s,
                   const CompositeGamma& gamma, Index population_size) {
    b.validate();
    if (population_size < b.size())
        throw EstimationError("inconsistent-inputs",
                              "N smaller than the B-sample size");
    check_disjoint(b, s);
    const double w_b = static_cast<double>(b.size()) /
                       static_cast<double>(population_size);
    const double y_b = b.y_mean();
    const Estimate hajek = hajek_mean(s);

    double g;
    std::string mode;
    if (gamma.fixed) {
        g = *gamma.fixed;
        if (!(g >= w_b && g <= 1.0))
            throw EstimationError("gamma-domain",
                                  "fixed gamma outside [W_B, 1]");
        mode = "fixed";
    } else {
        const auto v = uncertainty::design_variance_hajek(s);
        const double gap = y_b - hajek.value;
        if (gap == 0.0) {
            g = 1.0;
        } else {
            g = std::min(w_b + (1.0 - w_b) * v.value / (gap * gap), 1.0);
        }
        mode = "data-driven";
    }

    Estimate e;
    e.target = Target::mean;
    e.value = g * y_b + (1.0 - g) * hajek.value;
    e.estimator_id = "composite";
    e.diagnostics["gamma"] = stats::format_double(g);
    e.diagnostics["gamma_mode"] = mode;
    e.diagnostics["w_b"] = stats::format_double(w_b);
    return e;
}

double optimal_gamma(double v_w, double w_b, double delta) {
    if (!(v_w >= 0.0)) throw EstimationError("gamma-domain", "V(y_w) must be >= 0");
    if (!(w_b >= 0.0 && w_b <= 1.0))
        throw EstimationError("gamma-domain", "W_B must be a probability");
    if (v_w == 0.0 && delta == 0.0)
        throw EstimationError("indeterminate",
                              "optimal gamma undefined when V = delta = 0");
    return (v_w + w_b * delta * delta) / (v_w + delta * delta);
}

}  // namespace nonprob::estimators
