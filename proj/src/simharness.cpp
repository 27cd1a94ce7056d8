#include "nonprob/simharness.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <mutex>
#include <set>
#include <thread>

#include "nonprob/estimators.hpp"
#include "nonprob/rng.hpp"
#include "nonprob/stats.hpp"
#include "nonprob/uncertainty.hpp"

namespace nonprob::simharness {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr std::uint64_t kStreamPopulation = 0xFA11;
constexpr std::uint64_t kStreamReplicate = 0x5EED;

struct Truths {
    double total = 0.0;
    double mean = 0.0;
    std::map<int, double> stratum_mean;
};

Truths compute_truths(const Population& pop) {
    Truths t;
    std::map<int, double> sums;
    std::map<int, Index> counts;
    for (Index i = 0; i < pop.size(); ++i) {
        const auto u = static_cast<std::size_t>(i);
        t.total += pop.y[u];
        sums[pop.x[u]] += pop.y[u];
        ++counts[pop.x[u]];
    }
    t.mean = t.total / static_cast<double>(pop.size());
    for (const auto& [label, sum] : sums)
        t.stratum_mean[label] = sum / static_cast<double>(counts[label]);
    return t;
}

double truth_for(const EstimatorConfig& e, const Truths& t) {
    switch (e.target) {
        case TargetKind::total: return t.total;
        case TargetKind::mean: return t.mean;
        case TargetKind::stratum_mean: {
            const auto it = t.stratum_mean.find(e.stratum);
            if (it == t.stratum_mean.end())
                throw ConfigError("stratum-target",
                                  "unknown stratum " + std::to_string(e.stratum));
            return it->second;
        }
    }
    throw InternalError("unreachable", "truth_for");
}

popgen::DesignSpec to_design_spec(const SDesignConfig& cfg) {
    if (cfg.kind == "srs") return popgen::SrsSpec{cfg.n};
    if (cfg.kind == "stratified") return popgen::StratifiedSrsSpec{cfg.fractions};
    if (cfg.kind == "poisson") return popgen::PoissonSpec{cfg.fractions};
    throw ConfigError("design-kind", "unknown S design kind '" + cfg.kind + "'");
}

struct RepOutcome {
    double value = kNaN;
    double truth = kNaN;
    double variance = kNaN;
    int covered = -1;  // -1 unknown, 0/1 otherwise
    double flag = kNaN;
};

// One estimator on one realised (pop, b, s).
RepOutcome evaluate(const EstimatorConfig& e, const Population& pop,
                    const std::map<int, Index>& sizes, const NonProbSample& b,
                    const ProbSample* s, double truth) {
    using namespace nonprob::estimators;
    const Index n = pop.size();
    RepOutcome out;
    Estimate est;

    const auto require_s = [&]() -> const ProbSample& {
        if (!s) throw ConfigError("needs-s", e.id + " requires an S design");
        return *s;
    };

    switch (e.kind) {
        case EstimatorKind::expansion:
            est = expansion(b, n);
            break;
        case EstimatorKind::poststrat: {
            est = post_stratified(b, sizes);
            if (e.with_variance)
                est.variance = uncertainty::poststrat_variance(b, sizes).value;
            break;
        }
        case EstimatorKind::calibration: {
            CalibrationSpec spec;
            spec.t_map = e.tmap == "intercept" ? intercept_tmap(pop.stratum_labels())
                                               : dummy_tmap(pop.stratum_labels());
            spec.totals = totals_from_stratum_sizes(spec.t_map, sizes);
            spec.population_size = n;
            const CalibrationFit fit = calibrate(b, spec);
            est = calibration_estimate(fit, b);
            if (e.with_variance)
                est.variance = uncertainty::calibration_variance(fit, b, sizes).value;
            break;
        }
        case EstimatorKind::ipw_census: {
            PropensityModel model;
            if (e.propensity_model == "logistic") {
                model.kind = PropensityModelKind::logistic;
                for (const auto& [label, score] : e.logistic_scores)
                    model.t_map[label] = {1.0, score};
                if (model.t_map.empty())
                    throw ConfigError("logistic-scores",
                                      "logistic model needs stratum scores");
            }
            PropensityFit fit;
            if (e.propensity_source == "census") {
                fit = fit_propensity_census(b, sizes, model);
            } else {
                fit = fit_propensity_from_s(b, require_s(),
                                            e.propensity_source == "pseudo", model);
            }
            est = ipw(b, fit);
            break;
        }
        case EstimatorKind::reference_ipw:
            est = reference_ipw(b, require_s(), n);
            break;
        case EstimatorKind::sm: {
            MatchMetric metric{e.match_on_z, e.match_exact_x, std::nullopt};
            const auto& sref = require_s();
            const auto match = nn_match(sref, b, metric);
            if (e.target == TargetKind::stratum_mean) {
                if (!sref.x) throw DataError("missing-column", "x not observed on S");
                double num = 0.0, den = 0.0;
                for (std::size_t i = 0; i < match.imputed_y.size(); ++i) {
                    if ((*sref.x)[i] != e.stratum) continue;
                    num += sref.d[i] * match.imputed_y[i];
                    den += sref.d[i];
                }
                if (den == 0.0)
                    throw EstimationError("empty-cell", "no S members in the stratum");
                out.value = num / den;
                return out;
            }
            est = sm_estimate(sref, match);
            break;
        }
        case EstimatorKind::two_phase_sm: {
            MatchMetric metric{e.match_on_z, e.match_exact_x, std::nullopt};
            std::optional<double> eps = e.epsilon;
            if (e.epsilon_scale)
                eps = *e.epsilon_scale / std::sqrt(static_cast<double>(b.size()));
            STmap tm = STmap::intercept_z;
            if (e.s_tmap == "x_dummies") tm = STmap::x_dummies;
            else if (e.s_tmap == "intercept_only") tm = STmap::intercept_only;
            est = two_phase_sm(require_s(), b, eps, tm, metric);
            out.flag = std::stod(est.diagnostics.at("s0_fraction"));
            break;
        }
        case EstimatorKind::split_population:
            est = split_population(b, require_s(), n);
            break;
        case EstimatorKind::hajek:
            est = hajek_mean(require_s());
            break;
        case EstimatorKind::composite: {
            CompositeGamma g;
            g.fixed = e.gamma;
            est = composite(b, require_s(), g, n);
            break;
        }
    }

    // Convert the estimator's natural target to the configured one.
    if (e.target == TargetKind::stratum_mean)
        throw ConfigError("stratum-target",
                          e.id + " does not produce stratum means");
    if (est.target == Target::total && e.target == TargetKind::mean)
        est = to_mean(est, n);
    else if (est.target == Target::mean && e.target == TargetKind::total)
        est = to_total(est, n);

    out.value = est.value;
    if (est.variance) {
        out.variance = *est.variance;
        const double half = 1.959963984540054 * std::sqrt(*est.variance);
        out.covered = std::abs(est.value - truth) <= half ? 1 : 0;
    }
    return out;
}

}  // namespace

void ScenarioConfig::validate() const {
    if (replicates < 1) throw ConfigError("replicates", "R must be >= 1");
    if (n_grid.empty()) throw ConfigError("n-grid", "empty N grid");
    popgen::DgpSpec probe = dgp;  // population_size is supplied by the grid
    probe.population_size = n_grid.front();
    probe.validate();
    for (std::size_t i = 1; i < n_grid.size(); ++i)
        if (n_grid[i] <= n_grid[i - 1])
            throw ConfigError("n-grid", "N grid must be strictly increasing");
    if (estimators.empty() && !run_h0)
        throw ConfigError("estimators", "nothing to evaluate");
    std::set<std::string> ids;
    for (const auto& e : estimators) {
        if (e.id.empty()) throw ConfigError("estimator-id", "estimator without id");
        if (!ids.insert(e.id).second)
            throw ConfigError("estimator-id", "duplicate estimator id " + e.id);
    }
    if (!(h0_level > 0.0 && h0_level < 1.0))
        throw ConfigError("level-domain", "h0 level must be in (0,1)");
}

McSummary run_scenario(const ScenarioConfig& cfg, int threads) {
    cfg.validate();
    if (threads < 1) throw ConfigError("threads", "thread count must be >= 1");

    McSummary summary;
    summary.scenario = cfg.name;
    const auto n_est = cfg.estimators.size();
    const auto r = static_cast<std::size_t>(cfg.replicates);

    for (std::size_t ni = 0; ni < cfg.n_grid.size(); ++ni) {
        const Index big_n = cfg.n_grid[ni];
        popgen::DgpSpec dgp = cfg.dgp;
        dgp.population_size = big_n;
        const auto sizes = popgen::stratum_sizes_for(dgp);
        const bool wants_s = cfg.s_design.kind != "none";
        const auto design = wants_s ? to_design_spec(cfg.s_design)
                                    : popgen::DesignSpec{popgen::SrsSpec{1}};
        const auto frame = cfg.s_design.frame == "u_minus_b"
                               ? popgen::Frame::excluding_b
                               : popgen::Frame::full;

        // Per-replicate slots, filled independently and reduced in order.
        // Each replicate realises its own population, so the reported bias is
        // the mean of the per-replicate errors value - truth.
        std::vector<std::vector<RepOutcome>> outcomes(
            n_est, std::vector<RepOutcome>(r));
        std::vector<std::vector<std::string>> error_codes(
            n_est, std::vector<std::string>(r));
        std::vector<signed char> h0_reject(r, -1);
        std::vector<signed char> redraw(r, 0);
        std::vector<std::string> first_error(n_est);
        std::mutex error_mutex;

        const auto worker = [&](std::size_t lo, std::size_t hi) {
            for (std::size_t rep = lo; rep < hi; ++rep) {
                const std::uint64_t rep_seed =
                    derive_seed(cfg.seed, kStreamReplicate + ni, rep);
                const Population pop = popgen::generate_population(
                    dgp, derive_seed(rep_seed, kStreamPopulation));
                const Truths truths = compute_truths(pop);
                int redraws = 0;
                const NonProbSample b =
                    popgen::draw_b_sample(pop, derive_seed(rep_seed, 1), &redraws);
                redraw[rep] = redraws > 0 ? 1 : 0;
                std::optional<ProbSample> s;
                if (wants_s)
                    s = popgen::draw_s_sample(pop, design, frame, &b,
                                              derive_seed(rep_seed, 2),
                                              cfg.s_design.observe_y);
                for (std::size_t k = 0; k < n_est; ++k) {
                    try {
                        const double truth = truth_for(cfg.estimators[k], truths);
                        outcomes[k][rep] = evaluate(cfg.estimators[k], pop, sizes, b,
                                                    s ? &*s : nullptr, truth);
                        outcomes[k][rep].truth = truth;
                    } catch (const Error& err) {
                        error_codes[k][rep] = err.code();
                        std::lock_guard<std::mutex> lock(error_mutex);
                        if (first_error[k].empty())
                            first_error[k] = err.code() + std::string(": ") + err.what();
                    }
                }
                if (cfg.run_h0 && s) {
                    try {
                        h0_reject[rep] =
                            uncertainty::h0_test(b, *s, cfg.h0_level).reject ? 1 : 0;
                    } catch (const Error&) {
                        h0_reject[rep] = -1;
                    }
                }
            }
        };

        if (threads == 1) {
            worker(0, r);
        } else {
            std::vector<std::thread> pool;
            const std::size_t chunk = (r + static_cast<std::size_t>(threads) - 1) /
                                      static_cast<std::size_t>(threads);
            for (int t = 0; t < threads; ++t) {
                const std::size_t lo = static_cast<std::size_t>(t) * chunk;
                const std::size_t hi = std::min(r, lo + chunk);
                if (lo >= hi) break;
                pool.emplace_back(worker, lo, hi);
            }
            for (auto& th : pool) th.join();
        }

        for (std::size_t k = 0; k < n_est; ++k) {
            SummaryRow row;
            row.estimator = cfg.estimators[k].id;
            row.population_size = big_n;
            row.replicates = cfg.replicates;

            double sum = 0.0, truth_sum = 0.0, error_sum = 0.0;
            std::size_t ok = 0;
            for (const auto& o : outcomes[k])
                if (!std::isnan(o.value)) {
                    sum += o.value;
                    truth_sum += o.truth;
                    error_sum += o.value - o.truth;
                    ++ok;
                }
            row.fail_rate = static_cast<double>(r - ok) / static_cast<double>(r);
            if (ok == 0)
                throw EstimationError("all-replicates-failed",
                                      cfg.name + "/" + row.estimator + " at N=" +
                                          std::to_string(big_n) + ": " +
                                          first_error[k]);
            row.mean_estimate = sum / static_cast<double>(ok);
            row.truth = truth_sum / static_cast<double>(ok);
            row.bias = error_sum / static_cast<double>(ok);
            double m2 = 0.0, var_sum = 0.0, flag_sum = 0.0;
            std::size_t var_n = 0, cover_n = 0, cover_hits = 0, flag_n = 0;
            for (const auto& o : outcomes[k]) {
                if (std::isnan(o.value)) continue;
                const double error = o.value - o.truth;
                m2 += (error - row.bias) * (error - row.bias);
                if (!std::isnan(o.variance)) {
                    var_sum += o.variance;
                    ++var_n;
                }
                if (o.covered >= 0) {
                    ++cover_n;
                    cover_hits += o.covered == 1 ? 1u : 0u;
                }
                if (!std::isnan(o.flag)) {
                    flag_sum += o.flag;
                    ++flag_n;
                }
            }
            const double var_pop = m2 / static_cast<double>(ok);
            row.mc_se = std::sqrt(var_pop / static_cast<double>(ok));
            row.rmse = std::sqrt(row.bias * row.bias + var_pop);
            row.var_hat_mean = var_n ? var_sum / static_cast<double>(var_n) : kNaN;
            row.coverage = cover_n ? static_cast<double>(cover_hits) /
                                         static_cast<double>(cover_n)
                                   : kNaN;
            summary.rows.push_back(row);
            std::map<std::string, std::size_t> code_counts;
            for (const auto& code : error_codes[k])
                if (!code.empty()) ++code_counts[code];
            for (const auto& [code, count] : code_counts)
                summary.flag_rates["fail:" + row.estimator + ":" + code + "@" +
                                   std::to_string(big_n)] =
                    static_cast<double>(count) / static_cast<double>(r);
            if (flag_n)
                summary.flag_rates[row.estimator + ":s0_fraction@" +
                                   std::to_string(big_n)] =
                    flag_sum / static_cast<double>(flag_n);
            if (cfg.keep_replicates) {
                std::vector<double> values;
                values.reserve(r);
                for (const auto& o : outcomes[k]) values.push_back(o.value);
                summary.replicate_values[row.estimator + "@" +
                                         std::to_string(big_n)] = std::move(values);
            }
        }

        double redraw_sum = 0.0;
        for (signed char v : redraw) redraw_sum += v;
        summary.flag_rates["b_redraw_rate@" + std::to_string(big_n)] =
            redraw_sum / static_cast<double>(r);
        if (cfg.run_h0) {
            std::size_t n_valid = 0, n_reject = 0;
            for (signed char v : h0_reject) {
                if (v >= 0) ++n_valid;
                if (v == 1) ++n_reject;
            }
            summary.flag_rates["h0_reject_rate@" + std::to_string(big_n)] =
                n_valid ? static_cast<double>(n_reject) / static_cast<double>(n_valid)
                        : kNaN;
        }
    }
    return summary;
}

namespace {

std::string field(double v) {
    return std::isnan(v) ? std::string() : stats::format_double(v);
}

}  // namespace

std::string McSummary::to_csv() const {
    std::string out =
        "scenario,estimator,N,R,bias,mc_se,rmse,var_hat_mean,coverage,fail_rate\n";
    for (const auto& row : rows) {
        out += scenario + ',' + row.estimator + ',' +
               std::to_string(row.population_size) + ',' +
               std::to_string(row.replicates) + ',' + field(row.bias) + ',' +
               field(row.mc_se) + ',' + field(row.rmse) + ',' +
               field(row.var_hat_mean) + ',' + field(row.coverage) + ',' +
               field(row.fail_rate) + '\n';
    }
    return out;
}

std::string McSummary::to_long_csv() const {
    std::string out = "scenario,estimator,N,metric,value\n";
    const auto emit = [&](const std::string& est, Index n, const char* metric,
                          double value) {
        if (std::isnan(value)) return;
        out += scenario + ',' + est + ',' + std::to_string(n) + ',' + metric + ',' +
               stats::format_double(value) + '\n';
    };
    for (const auto& row : rows) {
        emit(row.estimator, row.population_size, "truth", row.truth);
        emit(row.estimator, row.population_size, "mean_estimate", row.mean_estimate);
        emit(row.estimator, row.population_size, "bias", row.bias);
        emit(row.estimator, row.population_size, "mc_se", row.mc_se);
        emit(row.estimator, row.population_size, "rmse", row.rmse);
        emit(row.estimator, row.population_size, "var_hat_mean", row.var_hat_mean);
        emit(row.estimator, row.population_size, "coverage", row.coverage);
        emit(row.estimator, row.population_size, "fail_rate", row.fail_rate);
    }
    for (const auto& [name, value] : flag_rates) {
        if (std::isnan(value)) continue;
        out += scenario + ",flags,0," + name + ',' + stats::format_double(value) + '\n';
    }
    return out;
}

}  // namespace nonprob::simharness
