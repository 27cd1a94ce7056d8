#include "nonprob/matching.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "nonprob/stats.hpp"

namespace nonprob::estimators {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Donors of one categorical cell, sorted by (z, donor index). run_first[i]
// is the first position of the tie-run containing i, so the smallest donor
// index among equal z values is donor[run_first[i]].
struct DonorGroup {
    std::vector<double> z;
    std::vector<std::size_t> donor;
    std::vector<std::size_t> run_first;

    void build(std::vector<std::pair<double, std::size_t>> entries) {
        std::sort(entries.begin(), entries.end());
        z.reserve(entries.size());
        donor.reserve(entries.size());
        run_first.resize(entries.size());
        for (std::size_t i = 0; i < entries.size(); ++i) {
            z.push_back(entries[i].first);
            donor.push_back(entries[i].second);
            run_first[i] = (i > 0 && entries[i].first == entries[i - 1].first)
                               ? run_first[i - 1]
                               : i;
        }
    }

    // Nearest donor by |z - q|; distance ties across the left/right
    // neighbouring values resolve to the smaller donor index.
    std::pair<std::size_t, double> nearest(double q) const {
        const auto it = std::lower_bound(z.begin(), z.end(), q);
        const auto pos = static_cast<std::size_t>(it - z.begin());
        std::size_t best = SIZE_MAX;
        double best_dist = kInf;
        if (pos < z.size()) {
            best = donor[run_first[pos]];
            best_dist = z[pos] - q;
        }
        if (pos > 0) {
            const double dist = q - z[pos - 1];
            const std::size_t cand = donor[run_first[pos - 1]];
            if (dist < best_dist || (dist == best_dist && cand < best)) {
                best = cand;
                best_dist = dist;
            }
        }
        return {best, best_dist};
    }

    // Distance from entry i to the nearest other entry of the group.
    double self_distance(std::size_t i) const {
        const std::size_t first = run_first[i];
        const std::size_t last = first + run_length(first) - 1;
        if (last > first) return 0.0;  // another donor shares this z value
        double dist = kInf;
        if (first > 0) dist = std::min(dist, z[i] - z[first - 1]);
        if (last + 1 < z.size()) dist = std::min(dist, z[last + 1] - z[i]);
        return dist;
    }

private:
    std::size_t run_length(std::size_t first) const {
        std::size_t len = 1;
        while (first + len < z.size() && run_first[first + len] == first) ++len;
        return len;
    }
};

double pooled_sd(const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> all;
    all.reserve(a.size() + b.size());
    all.insert(all.end(), a.begin(), a.end());
    all.insert(all.end(), b.begin(), b.end());
    if (all.size() < 2) return 1.0;
    const double v = stats::sample_variance(all);
    return v > 0.0 ? std::sqrt(v) : 1.0;
}

struct MatchContext {
    double scale = 1.0;
    std::map<int, DonorGroup> groups;  // keyed by x cell; single key 0 when unused
    std::vector<std::size_t> position; // B index -> position within its group
    bool on_z = false;
    bool on_x = false;
};

MatchContext build_context(const std::vector<double>* s_z, const std::vector<int>* s_x,
                           const NonProbSample& b, const MatchMetric& metric) {
    if (!metric.match_on_z && !metric.exact_on_x)
        throw ConfigError("metric-empty", "matching metric selects no covariate");
    if (b.members.empty()) throw EstimationError("no-donor", "B-sample is empty");
    MatchContext ctx;
    ctx.on_z = metric.match_on_z;
    ctx.on_x = metric.exact_on_x;
    if (ctx.on_z) {
        if (!b.z) throw DataError("missing-column", "z not observed on B");
        if (s_z == nullptr) throw DataError("missing-column", "z not observed on S");
        if (metric.z_scale) {
            if (!(*metric.z_scale > 0.0))
                throw ConfigError("metric-scale", "z_scale must be positive");
            ctx.scale = *metric.z_scale;
        } else {
            ctx.scale = pooled_sd(*b.z, *s_z);
        }
    }
    if (ctx.on_x && s_x == nullptr) throw DataError("missing-column", "x not observed on S");

    std::map<int, std::vector<std::pair<double, std::size_t>>> entries;
    for (std::size_t i = 0; i < b.members.size(); ++i) {
        const int key = ctx.on_x ? b.x[i] : 0;
        const double value = ctx.on_z ? (*b.z)[i] / ctx.scale : 0.0;
        entries[key].emplace_back(value, i);
    }
    ctx.position.resize(b.members.size());
    for (auto& [key, list] : entries) {
        auto& group = ctx.groups[key];
        group.build(std::move(list));
        for (std::size_t pos = 0; pos < group.donor.size(); ++pos)
            ctx.position[group.donor[pos]] = pos;
    }
    return ctx;
}

std::pair<std::size_t, double> query(const MatchContext& ctx, double z_value, int x_value) {
    const int key = ctx.on_x ? x_value : 0;
    const auto it = ctx.groups.find(key);
    if (it == ctx.groups.end()) return {SIZE_MAX, kInf};
    return it->second.nearest(ctx.on_z ? z_value / ctx.scale : 0.0);
}

}  // namespace

std::string MatchMetric::describe() const {
    std::string out;
    if (exact_on_x) out += "exact-x";
    if (match_on_z) {
        if (!out.empty()) out += "+";
        out += "abs-z";
        if (z_scale) out += "/scale=" + stats::format_double(*z_scale);
    }
    return out;
}

std::vector<double> nn_min_distances(const ProbSample& s, const NonProbSample& b,
                                     const MatchMetric& metric) {
    const auto ctx = build_context(s.z ? &*s.z : nullptr, s.x ? &*s.x : nullptr, b, metric);
    std::vector<double> out(static_cast<std::size_t>(s.size()), kInf);
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double zv = ctx.on_z ? (*s.z)[i] : 0.0;
        const int xv = ctx.on_x ? (*s.x)[i] : 0;
        out[i] = query(ctx, zv, xv).second;
    }
    return out;
}

MatchAssignment nn_match(const ProbSample& s, const NonProbSample& b,
                         const MatchMetric& metric) {
    const auto ctx = build_context(s.z ? &*s.z : nullptr, s.x ? &*s.x : nullptr, b, metric);
    MatchAssignment match;
    match.metric = metric.describe();
    const auto n = static_cast<std::size_t>(s.size());
    match.donor.resize(n);
    match.distance.resize(n);
    match.imputed_y.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double zv = ctx.on_z ? (*s.z)[i] : 0.0;
        const int xv = ctx.on_x ? (*s.x)[i] : 0;
        const auto [donor, dist] = query(ctx, zv, xv);
        if (donor == SIZE_MAX)
            throw EstimationError("no-donor",
                                  "no donor for S member " + std::to_string(i) +
                                      (ctx.on_x ? " in cell " + std::to_string(xv) : ""));
        match.donor[i] = donor;
        match.distance[i] = dist;
        match.imputed_y[i] = b.y[donor];
    }
    return match;
}

std::vector<double> within_b_nn_distances(const NonProbSample& b,
                                          const MatchMetric& metric) {
    if (b.members.size() < 2)
        throw EstimationError("no-donor", "within-B distances need at least two units");
    const auto ctx = build_context(b.z ? &*b.z : nullptr, &b.x, b, metric);
    std::vector<double> out(b.members.size(), kInf);
    for (std::size_t i = 0; i < b.members.size(); ++i) {
        const int key = ctx.on_x ? b.x[i] : 0;
        out[i] = ctx.groups.at(key).self_distance(ctx.position[i]);
    }
    return out;
}

Estimate sm_estimate(const ProbSample& s, const MatchAssignment& match) {
    if (match.donor.size() != static_cast<std::size_t>(s.size()))
        throw EstimationError("fit-mismatch", "match does not cover all S members");
    double total = 0.0;
    double max_dist = 0.0, sum_dist = 0.0;
    for (std::size_t i = 0; i < match.donor.size(); ++i) {
        total += s.d[i] * match.imputed_y[i];
        max_dist = std::max(max_dist, match.distance[i]);
        sum_dist += match.distance[i];
    }
    Estimate e;
    e.target = Target::total;
    e.value = total;
    e.estimator_id = "sm";
    e.diagnostics["metric"] = match.metric;
    e.diagnostics["max_match_distance"] = stats::format_double(max_dist);
    e.diagnostics["mean_match_distance"] =
        stats::format_double(sum_dist / static_cast<double>(match.donor.size()));
    return e;
}

Estimate two_phase_sm(const ProbSample& s, const NonProbSample& b,
                      std::optional<double> epsilon, STmap tmap,
                      const MatchMetric& metric) {
    s.validate();
    b.validate();
    double eps;
    if (epsilon) {
        eps = *epsilon;
    } else {
        eps = stats::percentile(within_b_nn_distances(b, metric), 0.95);
    }
    if (!(eps > 0.0)) throw ConfigError("epsilon-domain", "epsilon must be > 0");

    const auto distances = nn_min_distances(s, b, metric);
    std::vector<std::size_t> supported;
    for (std::size_t i = 0; i < distances.size(); ++i)
        if (distances[i] < eps) supported.push_back(i);
    if (supported.empty())
        throw EstimationError("no-support", "no S member within epsilon of the B support");
    const auto n_s0 = distances.size() - supported.size();

    // Per-member calibration vector on S.
    std::vector<std::vector<double>> t_all(static_cast<std::size_t>(s.size()));
    switch (tmap) {
        case STmap::intercept_only:
            for (auto& t : t_all) t = {1.0};
            break;
        case STmap::intercept_z:
            if (!s.z) throw DataError("missing-column", "z not observed on S");
            for (std::size_t i = 0; i < t_all.size(); ++i) t_all[i] = {1.0, (*s.z)[i]};
            break;
        case STmap::x_dummies: {
            if (!s.x) throw DataError("missing-column", "x not observed on S");
            std::map<int, std::size_t> slot;
            for (int label : *s.x) slot.emplace(label, slot.size());
            for (std::size_t i = 0; i < t_all.size(); ++i) {
                std::vector<double> t(slot.size(), 0.0);
                t[slot.at((*s.x)[i])] = 1.0;
                t_all[i] = std::move(t);
            }
            break;
        }
    }
    const std::size_t k = t_all.front().size();

    // Second-phase weights: minimise sum (w2 - 1)^2 subject to the supported
    // d*w2-weighted t totals matching the full-S d-weighted totals.
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(k));
    for (std::size_t i = 0; i < t_all.size(); ++i)
        for (std::size_t j = 0; j < k; ++j)
            rhs[static_cast<Eigen::Index>(j)] += s.d[i] * t_all[i][j];
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(k),
                                              static_cast<Eigen::Index>(k));
    for (std::size_t i : supported) {
        const Eigen::Map<const Eigen::VectorXd> t(t_all[i].data(),
                                                  static_cast<Eigen::Index>(k));
        m.noalias() += s.d[i] * s.d[i] * t * t.transpose();
        rhs -= s.d[i] * t;
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(m);
    lu.setThreshold(1e-10);
    if (!lu.isInvertible())
        throw EstimationError("rank-deficiency",
                              "second-phase calibration system is singular");
    const Eigen::VectorXd lambda = lu.solve(rhs);

    // NN imputation on the supported part.
    ProbSample s1;
    for (std::size_t i : supported) {
        s1.members.push_back(s.members[i]);
        s1.pi.push_back(s.pi[i]);
        s1.d.push_back(s.d[i]);
    }
    if (s.x) {
        s1.x = std::vector<int>();
        for (std::size_t i : supported) s1.x->push_back((*s.x)[i]);
    }
    if (s.z) {
        s1.z = std::vector<double>();
        for (std::size_t i : supported) s1.z->push_back((*s.z)[i]);
    }
    s1.design = s.design;
    const auto match = nn_match(s1, b, metric);

    double total = 0.0;
    double max_w2_dev = 0.0;
    for (std::size_t idx = 0; idx < supported.size(); ++idx) {
        const std::size_t i = supported[idx];
        const Eigen::Map<const Eigen::VectorXd> t(t_all[i].data(),
                                                  static_cast<Eigen::Index>(k));
        const double w2 = 1.0 + s.d[i] * t.dot(lambda);
        max_w2_dev = std::max(max_w2_dev, std::abs(w2 - 1.0));
        total += s.d[i] * w2 * match.imputed_y[idx];
    }

    Estimate e;
    e.target = Target::total;
    e.value = total;
    e.estimator_id = "two_phase_sm";
    e.diagnostics["epsilon"] = stats::format_double(eps);
    e.diagnostics["s0_size"] = std::to_string(n_s0);
    e.diagnostics["s0_fraction"] = stats::format_double(
        static_cast<double>(n_s0) / static_cast<double>(distances.size()));
    e.diagnostics["max_w2_deviation"] = stats::format_double(max_w2_dev);
    e.diagnostics["metric"] = match.metric;
    return e;
}

}  // namespace nonprob::estimators
