#include "nonprob/calibration.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <set>

#include "nonprob/stats.hpp"

namespace nonprob::estimators {

namespace {

Eigen::VectorXd to_eigen(const std::vector<double>& v) {
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::string dependent_components(const Eigen::FullPivLU<Eigen::MatrixXd>& lu) {
    std::string out;
    const Eigen::MatrixXd kernel = lu.kernel();
    std::set<int> involved;
    for (Eigen::Index c = 0; c < kernel.cols(); ++c)
        for (Eigen::Index r = 0; r < kernel.rows(); ++r)
            if (std::abs(kernel(r, c)) > 1e-12) involved.insert(static_cast<int>(r));
    for (int k : involved) {
        if (!out.empty()) out += ',';
        out += std::to_string(k);
    }
    return out;
}

}  // namespace

TMap dummy_tmap(const std::vector<int>& labels) {
    std::set<int> uniq(labels.begin(), labels.end());
    TMap map;
    std::size_t k = 0;
    for (int label : uniq) {
        std::vector<double> t(uniq.size(), 0.0);
        t[k++] = 1.0;
        map[label] = std::move(t);
    }
    return map;
}

TMap intercept_tmap(const std::vector<int>& labels) {
    std::set<int> uniq(labels.begin(), labels.end());
    TMap map;
    for (int label : uniq) map[label] = {1.0};
    return map;
}

std::vector<double> totals_from_stratum_sizes(const TMap& t_map,
                                              const std::map<int, Index>& stratum_sizes) {
    if (t_map.empty()) throw ConfigError("t-map-empty", "empty t-map");
    const std::size_t k = t_map.begin()->second.size();
    std::vector<double> totals(k, 0.0);
    for (const auto& [label, size] : stratum_sizes) {
        const auto it = t_map.find(label);
        if (it == t_map.end())
            throw ConfigError("t-map-label",
                              "no t(x) for stratum " + std::to_string(label));
        if (it->second.size() != k)
            throw ConfigError("t-map-shape", "t(x) vectors differ in length");
        for (std::size_t j = 0; j < k; ++j)
            totals[j] += static_cast<double>(size) * it->second[j];
    }
    return totals;
}

EstimatedTotals totals_from_s(const TMap& t_map, const ProbSample& s) {
    s.validate();
    if (!s.x) throw DataError("missing-column", "x not observed on S");
    if (t_map.empty()) throw ConfigError("t-map-empty", "empty t-map");
    const std::size_t k = t_map.begin()->second.size();
    EstimatedTotals out;
    out.totals.assign(k, 0.0);
    out.variance.assign(k, 0.0);
    for (Index i = 0; i < s.size(); ++i) {
        const auto it = t_map.find((*s.x)[static_cast<std::size_t>(i)]);
        if (it == t_map.end())
            throw DataError("t-map-label", "S stratum missing from t-map");
        for (std::size_t j = 0; j < k; ++j)
            out.totals[j] += s.d[static_cast<std::size_t>(i)] * it->second[j];
    }
    // Independent-inclusion approximation per component.
    for (Index i = 0; i < s.size(); ++i) {
        const auto& t = t_map.at((*s.x)[static_cast<std::size_t>(i)]);
        const double pi = s.pi[static_cast<std::size_t>(i)];
        for (std::size_t j = 0; j < k; ++j)
            out.variance[j] += (1.0 - pi) / (pi * pi) * t[j] * t[j];
    }
    return out;
}

CalibrationFit calibrate(const NonProbSample& b, const CalibrationSpec& spec) {
    b.validate();
    if (spec.t_map.empty()) throw ConfigError("t-map-empty", "empty t-map");
    const std::size_t k = spec.t_map.begin()->second.size();
    if (k < 1) throw ConfigError("t-map-shape", "t(x) must have K >= 1 components");
    for (const auto& [label, t] : spec.t_map)
        if (t.size() != k)
            throw ConfigError("t-map-shape", "t(x) vectors differ in length");
    if (spec.totals.size() != k)
        throw ConfigError("totals-shape", "totals length does not match t-map");

    const std::size_t n = static_cast<std::size_t>(b.size());

    // Initial weights.
    std::vector<double> a(n);
    switch (spec.initial.rule) {
        case InitialWeights::Rule::uniform: {
            if (spec.population_size < b.size())
                throw ConfigError("population-size",
                                  "uniform initial weights need N >= n_B");
            const double w0 = static_cast<double>(spec.population_size) /
                              static_cast<double>(b.size());
            std::fill(a.begin(), a.end(), w0);
            break;
        }
        case InitialWeights::Rule::inverse_propensity:
        case InitialWeights::Rule::explicit_weights: {
            if (spec.initial.values.size() != n)
                throw ConfigError("initial-weights",
                                  "initial weight vector length mismatch");
            if (spec.initial.rule == InitialWeights::Rule::inverse_propensity) {
                for (std::size_t i = 0; i < n; ++i) {
                    if (!(spec.initial.values[i] > 0.0))
                        throw ConfigError("initial-weights",
                                          "inverse-propensity weights need p > 0");
                    a[i] = 1.0 / spec.initial.values[i];
                }
            } else {
                a = spec.initial.values;
            }
            break;
        }
    }

    // Group B members into t-cells (distinct t vectors).
    CalibrationFit fit;
    fit.cell_of.resize(n);
    std::map<std::vector<double>, int> cell_index;
    std::map<int, int> label_cell;
    for (std::size_t i = 0; i < n; ++i) {
        const int label = b.x[i];
        auto lc = label_cell.find(label);
        if (lc == label_cell.end()) {
            const auto it = spec.t_map.find(label);
            if (it == spec.t_map.end())
                throw DataError("t-map-label",
                                "no t(x) for stratum " + std::to_string(label));
            auto [ci, inserted] =
                cell_index.emplace(it->second, static_cast<int>(cell_index.size()));
            if (inserted) {
                fit.cell_t.push_back(it->second);
                fit.cell_labels.emplace_back();
            }
            fit.cell_labels[static_cast<std::size_t>(ci->second)].push_back(label);
            lc = label_cell.emplace(label, ci->second).first;
        }
        fit.cell_of[i] = lc->second;
    }
    const std::size_t n_cells = fit.cell_t.size();

    // Sample total of t must have no zero component.
    std::vector<double> t_sample(k, 0.0);
    std::vector<Index> cell_n(n_cells, 0);
    std::vector<double> cell_a(n_cells, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto c = static_cast<std::size_t>(fit.cell_of[i]);
        ++cell_n[c];
        cell_a[c] += a[i];
    }
    for (std::size_t c = 0; c < n_cells; ++c)
        for (std::size_t j = 0; j < k; ++j)
            t_sample[j] += static_cast<double>(cell_n[c]) * fit.cell_t[c][j];
    for (std::size_t j = 0; j < k; ++j)
        if (t_sample[j] == 0.0)
            throw EstimationError("zero-sample-total",
                                  "component " + std::to_string(j) +
                                      " of the B-sample t total is zero");

    // K x K system: (sum_B t t') lambda = totals - sum_B a t.
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(k),
                                              static_cast<Eigen::Index>(k));
    Eigen::VectorXd rhs = to_eigen(spec.totals);
    for (std::size_t c = 0; c < n_cells; ++c) {
        const Eigen::VectorXd t = to_eigen(fit.cell_t[c]);
        m.noalias() += static_cast<double>(cell_n[c]) * t * t.transpose();
        rhs -= cell_a[c] * t;
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(m);
    lu.setThreshold(1e-10);
    if (!lu.isInvertible())
        throw EstimationError("rank-deficiency",
                              "collinear t components over B: {" +
                                  dependent_components(lu) + "}");
    const Eigen::VectorXd lambda = lu.solve(rhs);

    fit.weights.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const Eigen::VectorXd t = to_eigen(fit.cell_t[static_cast<std::size_t>(fit.cell_of[i])]);
        fit.weights[i] = a[i] + t.dot(lambda);
    }

    // Achieved constraints.
    std::vector<double> cell_w(n_cells, 0.0), cell_wy(n_cells, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto c = static_cast<std::size_t>(fit.cell_of[i]);
        cell_w[c] += fit.weights[i];
        cell_wy[c] += fit.weights[i] * b.y[i];
    }
    double max_abs_total = 0.0, max_abs_gap = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
        double achieved = 0.0;
        for (std::size_t c = 0; c < n_cells; ++c)
            achieved += cell_w[c] * fit.cell_t[c][j];
        max_abs_total = std::max(max_abs_total, std::abs(spec.totals[j]));
        max_abs_gap = std::max(max_abs_gap, std::abs(achieved - spec.totals[j]));
    }
    fit.constraint_residual = max_abs_gap / std::max(1.0, max_abs_total);
    if (fit.constraint_residual > 1e-8)
        throw EstimationError("calibration-tolerance",
                              "constraint residual " +
                                  stats::format_double(fit.constraint_residual) +
                                  " exceeds 1e-8");

    // beta_hat = (sum w t t')^{-1} (sum w t y), then residuals.
    Eigen::MatrixXd mb = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(k),
                                               static_cast<Eigen::Index>(k));
    Eigen::VectorXd rb = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(k));
    for (std::size_t c = 0; c < n_cells; ++c) {
        const Eigen::VectorXd t = to_eigen(fit.cell_t[c]);
        mb.noalias() += cell_w[c] * t * t.transpose();
        rb += cell_wy[c] * t;
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lub(mb);
    lub.setThreshold(1e-10);
    if (!lub.isInvertible())
        throw EstimationError("rank-deficiency",
                              "weighted t cross-product is singular: {" +
                                  dependent_components(lub) + "}");
    const Eigen::VectorXd beta = lub.solve(rb);
    fit.beta_hat.assign(beta.data(), beta.data() + beta.size());
    fit.residuals.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& t = fit.cell_t[static_cast<std::size_t>(fit.cell_of[i])];
        double pred = 0.0;
        for (std::size_t j = 0; j < k; ++j) pred += t[j] * fit.beta_hat[j];
        fit.residuals[i] = b.y[i] - pred;
    }
    return fit;
}

Estimate calibration_estimate(const CalibrationFit& fit, const NonProbSample& b) {
    if (fit.weights.size() != static_cast<std::size_t>(b.size()))
        throw EstimationError("fit-mismatch", "fit was not produced from this sample");
    double total = 0.0;
    for (std::size_t i = 0; i < fit.weights.size(); ++i) total += fit.weights[i] * b.y[i];
    Estimate e;
    e.target = Target::total;
    e.value = total;
    e.estimator_id = "calibration";
    e.diagnostics["cells"] = std::to_string(fit.cell_t.size());
    e.diagnostics["constraint_residual"] = stats::format_double(fit.constraint_residual);
    return e;
}

}  // namespace nonprob::estimators
