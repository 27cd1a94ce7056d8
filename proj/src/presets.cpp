#include <cmath>

#include "json.hpp"
#include "nonprob/simharness.hpp"

namespace nonprob::simharness {

using nlohmann::json;

namespace {

std::vector<Index> desk_grid() { return {1000, 10000, 100000}; }

EstimatorConfig make_estimator(std::string id, EstimatorKind kind,
                               TargetKind target = TargetKind::total) {
    EstimatorConfig e;
    e.id = std::move(id);
    e.kind = kind;
    e.target = target;
    return e;
}

ScenarioConfig make_sp_flat() {
    ScenarioConfig cfg;
    cfg.name = "sp_flat";
    cfg.dgp.strata = {{1.0, 1.0, 0.3, 0.0, 1.0}};
    cfg.dgp.noise_scale = 1.0;
    cfg.dgp.propensity_heterogeneity = 0.15;  // varies, but independently of y
    cfg.n_grid = desk_grid();
    cfg.estimators = {make_estimator("expansion", EstimatorKind::expansion)};
    cfg.expected_outcome =
        "unit propensities vary but the outcome mean is constant given "
        "inclusion, so the expansion estimator's bias vanishes with N";
    return cfg;
}

ScenarioConfig make_qr_flat() {
    ScenarioConfig cfg;
    cfg.name = "qr_flat";
    cfg.dgp.strata = {{0.5, 0.0, 0.3, 0.0, 1.0},
                      {0.3, 1.0, 0.3, 0.0, 1.0},
                      {0.2, 3.0, 0.3, 0.0, 1.0}};
    cfg.dgp.noise_scale = 1.0;
    cfg.n_grid = desk_grid();
    cfg.estimators = {make_estimator("expansion", EstimatorKind::expansion)};
    cfg.expected_outcome =
        "a constant inclusion propensity across all strata makes the "
        "expansion estimator consistent despite structured outcomes";
    return cfg;
}

ScenarioConfig make_calib_linear() {
    ScenarioConfig cfg;
    cfg.name = "calib_linear";
    cfg.dgp.strata = {{0.5, 0.0, 0.1, 0.0, 1.0},
                      {0.3, 1.0, 0.3, 0.0, 1.0},
                      {0.2, 3.0, 0.5, 0.0, 1.0}};
    cfg.dgp.noise_scale = 1.0;
    cfg.n_grid = desk_grid();
    auto calibration = make_estimator("calibration", EstimatorKind::calibration);
    calibration.with_variance = true;
    auto poststrat = make_estimator("poststrat", EstimatorKind::poststrat);
    poststrat.with_variance = true;
    cfg.estimators = {calibration, poststrat,
                      make_estimator("expansion", EstimatorKind::expansion)};
    cfg.expected_outcome =
        "selection depends on the stratum only, so calibration and "
        "post-stratification are consistent while raw expansion is not";
    return cfg;
}

ScenarioConfig make_ipw_logistic() {
    ScenarioConfig cfg;
    cfg.name = "ipw_logistic";
    // Propensities on an exact logistic curve in the stratum score.
    const std::vector<double> scores = {-2.0, -1.0, 0.0, 1.0, 2.0};
    const auto expit = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
    for (std::size_t h = 0; h < scores.size(); ++h)
        cfg.dgp.strata.push_back({0.2, 0.5 * static_cast<double>(h),
                                  expit(-0.85 + 0.5 * scores[h]), 0.0, 1.0});
    cfg.dgp.noise_scale = 1.0;
    cfg.n_grid = desk_grid();
    auto ipw = make_estimator("ipw_logistic", EstimatorKind::ipw_census);
    ipw.propensity_model = "logistic";
    for (std::size_t h = 0; h < scores.size(); ++h)
        ipw.logistic_scores[static_cast<int>(h)] = scores[h];
    cfg.estimators = {ipw, make_estimator("ipw_saturated", EstimatorKind::ipw_census)};
    cfg.expected_outcome =
        "the fitted logistic propensity recovers the true inclusion curve, "
        "so inverse-propensity weighting is consistent";
    return cfg;
}

ScenarioConfig make_ref_ipw() {
    ScenarioConfig cfg;
    cfg.name = "ref_ipw";
    cfg.dgp.strata = {{0.4, 0.0, 0.1, 0.0, 1.0},
                      {0.35, 1.0, 0.25, 0.0, 1.0},
                      {0.25, 2.0, 0.4, 0.0, 1.0}};
    cfg.dgp.noise_scale = 1.0;
    cfg.s_design.kind = "stratified";
    cfg.s_design.fractions = {{0, 0.05}, {1, 0.10}, {2, 0.15}};
    cfg.n_grid = desk_grid();
    cfg.estimators = {make_estimator("reference_ipw", EstimatorKind::reference_ipw)};
    cfg.expected_outcome =
        "both memberships are determined by the stratum, so the pooled "
        "membership-ratio propensity is consistent";
    return cfg;
}

ScenarioConfig make_sm_basic() {
    ScenarioConfig cfg;
    cfg.name = "sm_basic";
    cfg.dgp.strata = {{1.0, 1.0, 0.3, 0.0, 1.0}};
    cfg.dgp.noise_scale = 0.5;
    cfg.dgp.z_kind = popgen::ZKind::uniform;
    cfg.dgp.z_mean_slope = 2.0;
    cfg.s_design.kind = "srs";
    cfg.s_design.n = 500;
    cfg.n_grid = desk_grid();
    cfg.estimators = {make_estimator("sm", EstimatorKind::sm)};
    cfg.expected_outcome =
        "donor density grows with N, matching distances collapse and the "
        "matching estimator's bias vanishes";
    return cfg;
}

ScenarioConfig make_sec2_5_counterexample() {
    ScenarioConfig cfg;
    cfg.name = "sec2_5_counterexample";
    cfg.dgp.strata = {{0.5, 0.0, 0.3, 0.0, 1.0}, {0.5, 1.0, 0.3, 0.0, 1.0}};
    cfg.dgp.noise_scale = 0.5;
    cfg.dgp.z_kind = popgen::ZKind::uniform;  // matching covariate, independent of y
    cfg.s_design.kind = "stratified";
    cfg.s_design.fractions = {{0, 0.5}, {1, 0.1}};
    cfg.n_grid = {10000};
    auto overall = make_estimator("sm_mean", EstimatorKind::sm, TargetKind::mean);
    auto mean0 = make_estimator("sm_mean_x0", EstimatorKind::sm, TargetKind::stratum_mean);
    mean0.stratum = 0;
    auto mean1 = make_estimator("sm_mean_x1", EstimatorKind::sm, TargetKind::stratum_mean);
    mean1.stratum = 1;
    cfg.estimators = {overall, mean0, mean1};
    cfg.expected_outcome =
        "matching on a covariate unrelated to y leaves the overall mean "
        "unbiased but pulls both stratum means toward the overall mean";
    return cfg;
}

ScenarioConfig make_undercoverage_kimrao() {
    ScenarioConfig cfg;
    cfg.name = "undercoverage_kimrao";
    // Shared line mu = 3 z: the uncovered stratum occupies the top z range.
    cfg.dgp.strata = {{0.8, 1.5, 0.1, 0.0, 1.0}, {0.2, 3.375, 0.1, 1.0, 1.25}};
    cfg.dgp.noise_scale = 0.3;
    cfg.dgp.z_kind = popgen::ZKind::uniform;
    cfg.dgp.z_mean_slope = 3.0;
    cfg.dgp.undercoverage_fraction = 0.2;
    cfg.dgp.undercoverage_strata = {1};
    cfg.s_design.kind = "srs";
    cfg.s_design.n = 1000;
    cfg.n_grid = {10000, 100000};
    cfg.replicates = 500;
    auto naive = make_estimator("sm_naive", EstimatorKind::sm);
    auto two_phase = make_estimator("two_phase_sm", EstimatorKind::two_phase_sm);
    two_phase.epsilon_scale = 3.0;  // support radius 3/sqrt(n_B)
    cfg.estimators = {naive, two_phase};
    cfg.expected_outcome =
        "with a fifth of the population unreachable, naive matching "
        "extrapolates the boundary while the support-screened calibrated "
        "estimator stays close to the truth";
    return cfg;
}

ScenarioConfig make_hetero_mu() {
    ScenarioConfig cfg;
    cfg.name = "hetero_mu";
    cfg.dgp.strata = {{0.4, 0.0, 0.2, 0.0, 1.0},
                      {0.35, 1.0, 0.3, 0.0, 1.0},
                      {0.25, 2.0, 0.4, 0.0, 1.0}};
    cfg.dgp.noise_scale = 0.5;
    cfg.dgp.mean_heterogeneity = 1.0;
    cfg.n_grid = desk_grid();
    auto poststrat = make_estimator("poststrat", EstimatorKind::poststrat);
    poststrat.with_variance = true;
    cfg.estimators = {poststrat,
                      make_estimator("calibration", EstimatorKind::calibration)};
    cfg.expected_outcome =
        "unit means vary within cells but average to the cell value, and "
        "propensities are cell-constant: post-stratification stays unbiased";
    return cfg;
}

ScenarioConfig make_hetero_p() {
    ScenarioConfig cfg;
    cfg.name = "hetero_p";
    cfg.dgp.strata = {{0.4, 0.0, 0.3, 0.0, 1.0},
                      {0.35, 1.0, 0.3, 0.0, 1.0},
                      {0.25, 2.0, 0.3, 0.0, 1.0}};
    cfg.dgp.noise_scale = 1.0;
    cfg.dgp.propensity_heterogeneity = 0.15;  // half the cell value
    cfg.dgp.propensity_heterogeneity_informative = true;
    cfg.n_grid = {10000};
    cfg.estimators = {make_estimator("ipw_cell", EstimatorKind::ipw_census)};
    cfg.expected_outcome =
        "unit propensities average to the cell value yet covary with y "
        "inside cells, so cell-propensity weighting stays biased";
    return cfg;
}

ScenarioConfig make_split_composite() {
    ScenarioConfig cfg;
    cfg.name = "split_composite";
    cfg.dgp.strata = {{1.0, 1.0, 0.5, 0.0, 1.0}};
    cfg.dgp.noise_scale = 1.0;
    cfg.s_design.kind = "srs";
    cfg.s_design.n = 500;
    cfg.s_design.frame = "u_minus_b";
    cfg.s_design.observe_y = true;
    cfg.n_grid = {10000};
    cfg.run_h0 = true;
    auto split = make_estimator("split_population", EstimatorKind::split_population,
                                TargetKind::mean);
    auto comp = make_estimator("composite_gammahat", EstimatorKind::composite,
                               TargetKind::mean);
    auto hajek = make_estimator("hajek", EstimatorKind::hajek, TargetKind::mean);
    cfg.estimators = {split, comp, hajek};
    cfg.expected_outcome =
        "an outcome sample from the unobserved remainder anchors the split "
        "estimator regardless of how B was selected; the composite trades a "
        "little bias for variance";
    return cfg;
}

}  // namespace

std::vector<std::string> preset_names() {
    return {"sp_flat",       "qr_flat",      "calib_linear",
            "ipw_logistic",  "ref_ipw",      "sm_basic",
            "sec2_5_counterexample",          "undercoverage_kimrao",
            "hetero_mu",     "hetero_p",     "split_composite"};
}

ScenarioConfig preset(const std::string& name) {
    if (name == "sp_flat") return make_sp_flat();
    if (name == "qr_flat") return make_qr_flat();
    if (name == "calib_linear") return make_calib_linear();
    if (name == "ipw_logistic") return make_ipw_logistic();
    if (name == "ref_ipw") return make_ref_ipw();
    if (name == "sm_basic") return make_sm_basic();
    if (name == "sec2_5_counterexample") return make_sec2_5_counterexample();
    if (name == "undercoverage_kimrao") return make_undercoverage_kimrao();
    if (name == "hetero_mu") return make_hetero_mu();
    if (name == "hetero_p") return make_hetero_p();
    if (name == "split_composite") return make_split_composite();
    throw ConfigError("unknown-preset", "unknown preset '" + name + "'");
}

namespace {

json to_json_dgp(const popgen::DgpSpec& d) {
    json strata = json::array();
    for (const auto& s : d.strata)
        strata.push_back({{"proportion", s.proportion},
                          {"mean", s.mean},
                          {"propensity", s.propensity},
                          {"z_lo", s.z_lo},
                          {"z_hi", s.z_hi}});
    const char* z_kind = d.z_kind == popgen::ZKind::none
                             ? "none"
                             : d.z_kind == popgen::ZKind::normal ? "normal" : "uniform";
    return {{"strata", strata},
            {"noise_scale", d.noise_scale},
            {"mean_heterogeneity", d.mean_heterogeneity},
            {"propensity_heterogeneity", d.propensity_heterogeneity},
            {"propensity_heterogeneity_informative", d.propensity_heterogeneity_informative},
            {"informativeness", d.informativeness},
            {"z_kind", z_kind},
            {"z_outcome_correlation", d.z_outcome_correlation},
            {"z_mean_slope", d.z_mean_slope},
            {"undercoverage_fraction", d.undercoverage_fraction},
            {"undercoverage_mode",
             d.undercoverage_mode == popgen::UndercoverageMode::largest_y
                 ? "largest_y"
                 : "uniform_random"},
            {"undercoverage_strata", d.undercoverage_strata}};
}

popgen::DgpSpec dgp_from_json(const json& j) {
    popgen::DgpSpec d;
    for (const auto& s : j.at("strata"))
        d.strata.push_back({s.at("proportion").get<double>(), s.at("mean").get<double>(),
                            s.at("propensity").get<double>(),
                            s.value("z_lo", 0.0), s.value("z_hi", 1.0)});
    d.noise_scale = j.value("noise_scale", 1.0);
    d.mean_heterogeneity = j.value("mean_heterogeneity", 0.0);
    d.propensity_heterogeneity = j.value("propensity_heterogeneity", 0.0);
    d.propensity_heterogeneity_informative =
        j.value("propensity_heterogeneity_informative", false);
    d.informativeness = j.value("informativeness", 0.0);
    const std::string z_kind = j.value("z_kind", "none");
    d.z_kind = z_kind == "normal" ? popgen::ZKind::normal
               : z_kind == "uniform" ? popgen::ZKind::uniform : popgen::ZKind::none;
    d.z_outcome_correlation = j.value("z_outcome_correlation", 0.0);
    d.z_mean_slope = j.value("z_mean_slope", 0.0);
    d.undercoverage_fraction = j.value("undercoverage_fraction", 0.0);
    d.undercoverage_mode = j.value("undercoverage_mode", "largest_y") == "uniform_random"
                               ? popgen::UndercoverageMode::uniform_random
                               : popgen::UndercoverageMode::largest_y;
    d.undercoverage_strata = j.value("undercoverage_strata", std::vector<int>{});
    return d;
}

const std::map<std::string, EstimatorKind>& kind_names() {
    static const std::map<std::string, EstimatorKind> names = {
        {"expansion", EstimatorKind::expansion},
        {"poststrat", EstimatorKind::poststrat},
        {"calibration", EstimatorKind::calibration},
        {"ipw_census", EstimatorKind::ipw_census},
        {"reference_ipw", EstimatorKind::reference_ipw},
        {"sm", EstimatorKind::sm},
        {"two_phase_sm", EstimatorKind::two_phase_sm},
        {"split_population", EstimatorKind::split_population},
        {"hajek", EstimatorKind::hajek},
        {"composite", EstimatorKind::composite}};
    return names;
}

std::string kind_name(EstimatorKind k) {
    for (const auto& [name, kind] : kind_names())
        if (kind == k) return name;
    throw InternalError("unreachable", "kind_name");
}

json map_to_json(const std::map<int, double>& m) {
    json out = json::object();
    for (const auto& [k, v] : m) out[std::to_string(k)] = v;
    return out;
}

std::map<int, double> map_from_json(const json& j) {
    std::map<int, double> out;
    for (const auto& [k, v] : j.items()) out[std::stoi(k)] = v.get<double>();
    return out;
}

}  // namespace

std::string to_json(const ScenarioConfig& cfg) {
    json estimators = json::array();
    for (const auto& e : cfg.estimators) {
        json je = {{"id", e.id},
                   {"kind", kind_name(e.kind)},
                   {"target", e.target == TargetKind::total
                                  ? "total"
                                  : e.target == TargetKind::mean ? "mean"
                                                                 : "stratum_mean"},
                   {"stratum", e.stratum},
                   {"with_variance", e.with_variance},
                   {"tmap", e.tmap},
                   {"propensity_model", e.propensity_model},
                   {"propensity_source", e.propensity_source},
                   {"logistic_scores", map_to_json(e.logistic_scores)},
                   {"match_on_z", e.match_on_z},
                   {"match_exact_x", e.match_exact_x},
                   {"s_tmap", e.s_tmap}};
        if (e.epsilon) je["epsilon"] = *e.epsilon;
        if (e.epsilon_scale) je["epsilon_scale"] = *e.epsilon_scale;
        if (e.gamma) je["gamma"] = *e.gamma;
        estimators.push_back(je);
    }
    json j = {{"name", cfg.name},
              {"dgp", to_json_dgp(cfg.dgp)},
              {"s_design",
               {{"kind", cfg.s_design.kind},
                {"n", cfg.s_design.n},
                {"fractions", map_to_json(cfg.s_design.fractions)},
                {"frame", cfg.s_design.frame},
                {"observe_y", cfg.s_design.observe_y}}},
              {"estimators", estimators},
              {"n_grid", cfg.n_grid},
              {"replicates", cfg.replicates},
              {"seed", cfg.seed},
              {"run_h0", cfg.run_h0},
              {"h0_level", cfg.h0_level},
              {"keep_replicates", cfg.keep_replicates},
              {"expected_outcome", cfg.expected_outcome}};
    return j.dump(2);
}

ScenarioConfig scenario_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError("config-parse", e.what());
    }
    try {
        ScenarioConfig cfg;
        cfg.name = j.at("name").get<std::string>();
        cfg.dgp = dgp_from_json(j.at("dgp"));
        if (j.contains("s_design")) {
            const auto& js = j.at("s_design");
            cfg.s_design.kind = js.value("kind", "none");
            cfg.s_design.n = js.value("n", Index{0});
            if (js.contains("fractions"))
                cfg.s_design.fractions = map_from_json(js.at("fractions"));
            cfg.s_design.frame = js.value("frame", "full");
            cfg.s_design.observe_y = js.value("observe_y", false);
        }
        for (const auto& je : j.at("estimators")) {
            EstimatorConfig e;
            e.id = je.at("id").get<std::string>();
            const std::string kind = je.at("kind").get<std::string>();
            const auto it = kind_names().find(kind);
            if (it == kind_names().end())
                throw ConfigError("estimator-kind", "unknown estimator kind " + kind);
            e.kind = it->second;
            const std::string target = je.value("target", "total");
            e.target = target == "mean" ? TargetKind::mean
                       : target == "stratum_mean" ? TargetKind::stratum_mean
                                                  : TargetKind::total;
            e.stratum = je.value("stratum", -1);
            e.with_variance = je.value("with_variance", false);
            e.tmap = je.value("tmap", "x_dummies");
            e.propensity_model = je.value("propensity_model", "saturated");
            e.propensity_source = je.value("propensity_source", "census");
            if (je.contains("logistic_scores"))
                e.logistic_scores = map_from_json(je.at("logistic_scores"));
            e.match_on_z = je.value("match_on_z", true);
            e.match_exact_x = je.value("match_exact_x", false);
            if (je.contains("epsilon")) e.epsilon = je.at("epsilon").get<double>();
            if (je.contains("epsilon_scale"))
                e.epsilon_scale = je.at("epsilon_scale").get<double>();
            e.s_tmap = je.value("s_tmap", "intercept_z");
            if (je.contains("gamma")) e.gamma = je.at("gamma").get<double>();
            cfg.estimators.push_back(std::move(e));
        }
        cfg.n_grid = j.at("n_grid").get<std::vector<Index>>();
        cfg.replicates = j.value("replicates", 2000);
        cfg.seed = j.value("seed", std::uint64_t{1});
        cfg.run_h0 = j.value("run_h0", false);
        cfg.h0_level = j.value("h0_level", 0.05);
        cfg.keep_replicates = j.value("keep_replicates", false);
        cfg.expected_outcome = j.value("expected_outcome", "");
        return cfg;
    } catch (const json::exception& e) {
        throw ConfigError("config-parse", e.what());
    }
}

}  // namespace nonprob::simharness
