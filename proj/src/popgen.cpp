#include "nonprob/popgen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "nonprob/rng.hpp"

namespace nonprob::popgen {

namespace {

constexpr std::uint64_t kStreamOutcome = 0x01;
constexpr std::uint64_t kStreamAux = 0x02;
constexpr std::uint64_t kStreamUndercoverage = 0x03;
constexpr std::uint64_t kStreamBDraw = 0x10;
constexpr std::uint64_t kStreamSDraw = 0x11;

// Largest-remainder apportionment of N over the stratum proportions.
std::vector<Index> stratum_counts(const DgpSpec& spec) {
    const double n = static_cast<double>(spec.population_size);
    std::vector<Index> counts(spec.strata.size());
    std::vector<std::pair<double, std::size_t>> remainders;
    Index assigned = 0;
    for (std::size_t h = 0; h < spec.strata.size(); ++h) {
        const double exact = spec.strata[h].proportion * n;
        counts[h] = static_cast<Index>(std::floor(exact));
        assigned += counts[h];
        remainders.emplace_back(exact - std::floor(exact), h);
    }
    std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    for (Index k = 0; k < spec.population_size - assigned; ++k)
        ++counts[remainders[static_cast<std::size_t>(k)].second];
    for (std::size_t h = 0; h < counts.size(); ++h)
        if (counts[h] < 1)
            throw ConfigError("stratum-too-small",
                              "stratum " + std::to_string(h) + " rounds to zero units");
    return counts;
}

// Mean-preserving +-h pattern over n slots: alternating sign, the last slot
// zeroed when n is odd.
double alternating_offset(Index pos, Index n, double h) {
    if (n % 2 == 1 && pos == n - 1) return 0.0;
    return (pos % 2 == 0) ? h : -h;
}

}  // namespace

void DgpSpec::validate() const {
    if (population_size < 1)
        throw ConfigError("population-size", "population_size must be >= 1");
    if (strata.empty()) throw ConfigError("no-strata", "at least one stratum required");
    double total = 0.0;
    for (const auto& s : strata) {
        if (s.proportion < 0.0)
            throw ConfigError("proportion-range", "negative stratum proportion");
        total += s.proportion;
        if (!(s.propensity >= 0.0 && s.propensity <= 1.0))
            throw ConfigError("propensity-range", "stratum propensity outside [0,1]");
        if (s.propensity + propensity_heterogeneity > 1.0 ||
            s.propensity - propensity_heterogeneity < 0.0)
            if (propensity_heterogeneity != 0.0)
                throw ConfigError("propensity-amplitude",
                                  "propensity heterogeneity leaves [0,1]");
        if (z_kind == ZKind::uniform && !(s.z_lo <= s.z_hi))
            throw ConfigError("z-range", "stratum z range has z_lo > z_hi");
    }
    if (std::abs(total - 1.0) > 1e-9)
        throw ConfigError("proportions-sum", "stratum proportions must sum to 1");
    if (noise_scale < 0.0) throw ConfigError("noise-scale", "noise_scale must be >= 0");
    if (mean_heterogeneity < 0.0 || propensity_heterogeneity < 0.0)
        throw ConfigError("amplitude-negative", "heterogeneity amplitudes must be >= 0");
    if (!(undercoverage_fraction >= 0.0 && undercoverage_fraction < 1.0))
        throw ConfigError("undercoverage-range", "undercoverage_fraction outside [0,1)");
    if (informativeness != 0.0 && noise_scale == 0.0)
        throw ConfigError("informativeness-needs-noise",
                          "informativeness requires noise_scale > 0");
    if (z_kind != ZKind::normal && z_outcome_correlation != 0.0)
        throw ConfigError("z-correlation", "z_outcome_correlation needs normal z");
    if (!(z_outcome_correlation >= -1.0 && z_outcome_correlation <= 1.0))
        throw ConfigError("z-correlation", "z_outcome_correlation outside [-1,1]");
    if (z_mean_slope != 0.0 && z_kind == ZKind::none)
        throw ConfigError("z-slope-needs-z", "z_mean_slope requires a z covariate");
    for (int label : undercoverage_strata)
        if (label < 0 || static_cast<std::size_t>(label) >= strata.size())
            throw ConfigError("undercoverage-stratum", "unknown stratum label");
}

std::map<int, Index> stratum_sizes_for(const DgpSpec& spec) {
    spec.validate();
    const auto counts = stratum_counts(spec);
    std::map<int, Index> sizes;
    for (std::size_t h = 0; h < counts.size(); ++h)
        sizes[static_cast<int>(h)] = counts[h];
    return sizes;
}

Population generate_population(const DgpSpec& spec, std::uint64_t seed) {
    spec.validate();
    const Index n = spec.population_size;
    const auto counts = stratum_counts(spec);

    Population pop;
    pop.y.resize(static_cast<std::size_t>(n));
    pop.x.resize(static_cast<std::size_t>(n));
    pop.p_true.resize(static_cast<std::size_t>(n));
    pop.mu = std::vector<double>(static_cast<std::size_t>(n));
    if (spec.z_kind != ZKind::none)
        pop.z = std::vector<double>(static_cast<std::size_t>(n));

    Rng rng_y(derive_seed(seed, kStreamOutcome));
    Rng rng_z(derive_seed(seed, kStreamAux));

    std::vector<double> eps(static_cast<std::size_t>(n));
    for (auto& e : eps) e = rng_y.normal();

    // Stratum block layout: units of stratum h occupy a contiguous id range.
    std::vector<Index> stratum_start(counts.size());
    {
        Index at = 0;
        for (std::size_t h = 0; h < counts.size(); ++h) {
            stratum_start[h] = at;
            for (Index j = 0; j < counts[h]; ++j)
                pop.x[static_cast<std::size_t>(at + j)] = static_cast<int>(h);
            at += counts[h];
        }
    }

    if (spec.z_kind == ZKind::uniform) {
        for (Index i = 0; i < n; ++i) {
            const auto& st = spec.strata[static_cast<std::size_t>(pop.x[static_cast<std::size_t>(i)])];
            (*pop.z)[static_cast<std::size_t>(i)] = rng_z.uniform(st.z_lo, st.z_hi);
        }
    } else if (spec.z_kind == ZKind::normal) {
        const double rho = spec.z_outcome_correlation;
        const double tail = std::sqrt(1.0 - rho * rho);
        for (Index i = 0; i < n; ++i)
            (*pop.z)[static_cast<std::size_t>(i)] =
                rho * eps[static_cast<std::size_t>(i)] + tail * rng_z.normal();
    }

    for (std::size_t h = 0; h < counts.size(); ++h) {
        const auto& st = spec.strata[h];
        const Index start = stratum_start[h];
        const Index nh = counts[h];

        double z_bar = 0.0;
        if (spec.z_mean_slope != 0.0) {
            for (Index j = 0; j < nh; ++j)
                z_bar += (*pop.z)[static_cast<std::size_t>(start + j)];
            z_bar /= static_cast<double>(nh);
        }

        for (Index j = 0; j < nh; ++j) {
            const auto i = static_cast<std::size_t>(start + j);
            double m = st.mean + alternating_offset(j, nh, spec.mean_heterogeneity);
            if (spec.z_mean_slope != 0.0)
                m += spec.z_mean_slope * ((*pop.z)[i] - z_bar);
            (*pop.mu)[i] = m;
            pop.y[i] = m + spec.noise_scale * eps[i];
        }

        if (spec.propensity_heterogeneity == 0.0) {
            for (Index j = 0; j < nh; ++j)
                pop.p_true[static_cast<std::size_t>(start + j)] = st.propensity;
        } else if (!spec.propensity_heterogeneity_informative) {
            for (Index j = 0; j < nh; ++j)
                pop.p_true[static_cast<std::size_t>(start + j)] =
                    st.propensity + alternating_offset(j, nh, spec.propensity_heterogeneity);
        } else {
            // +h for the top half by outcome residual, -h for the bottom
            // half, median slot untouched when nh is odd.
            std::vector<Index> order(static_cast<std::size_t>(nh));
            std::iota(order.begin(), order.end(), Index{0});
            std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
                return eps[static_cast<std::size_t>(start + a)] >
                       eps[static_cast<std::size_t>(start + b)];
            });
            const Index half = nh / 2;
            for (Index r = 0; r < nh; ++r) {
                double offset = 0.0;
                if (r < half) offset = spec.propensity_heterogeneity;
                else if (r >= nh - half) offset = -spec.propensity_heterogeneity;
                pop.p_true[static_cast<std::size_t>(start + order[static_cast<std::size_t>(r)])] =
                    st.propensity + offset;
            }
        }
    }

    if (spec.informativeness != 0.0) {
        for (Index i = 0; i < n; ++i) {
            const auto u = static_cast<std::size_t>(i);
            const double scaled = 1.0 + spec.informativeness * eps[u];
            pop.p_true[u] = std::clamp(pop.p_true[u] * scaled, 0.0, 1.0);
        }
    }

    if (spec.undercoverage_fraction > 0.0) {
        const auto uc_count =
            static_cast<Index>(std::llround(spec.undercoverage_fraction *
                                            static_cast<double>(n)));
        std::set<int> designated(spec.undercoverage_strata.begin(),
                                 spec.undercoverage_strata.end());
        std::vector<Index> eligible;
        for (Index i = 0; i < n; ++i)
            if (designated.empty() ||
                designated.count(pop.x[static_cast<std::size_t>(i)]))
                eligible.push_back(i);
        if (uc_count > static_cast<Index>(eligible.size()))
            throw ConfigError("undercoverage-eligible",
                              "undercoverage fraction exceeds designated strata");
        if (spec.undercoverage_mode == UndercoverageMode::largest_y) {
            std::stable_sort(eligible.begin(), eligible.end(), [&](Index a, Index b) {
                return pop.y[static_cast<std::size_t>(a)] > pop.y[static_cast<std::size_t>(b)];
            });
            eligible.resize(static_cast<std::size_t>(uc_count));
        } else {
            Rng rng_uc(derive_seed(seed, kStreamUndercoverage));
            eligible = rng_uc.sample_without_replacement(std::move(eligible),
                                                         static_cast<std::size_t>(uc_count));
        }
        for (Index i : eligible) pop.p_true[static_cast<std::size_t>(i)] = 0.0;
    }

    return pop;
}

NonProbSample draw_b_sample(const Population& pop, std::uint64_t seed, int* redraws) {
    pop.validate();
    bool any_positive = false;
    for (double p : pop.p_true)
        if (p > 0.0) { any_positive = true; break; }
    if (!any_positive)
        throw DataError("impossible-sample", "all inclusion propensities are zero");

    constexpr int kMaxAttempts = 100;
    for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
        Rng rng(derive_seed(seed, kStreamBDraw, static_cast<std::uint64_t>(attempt)));
        NonProbSample b;
        for (Index i = 0; i < pop.size(); ++i) {
            const auto u = static_cast<std::size_t>(i);
            const double p = pop.p_true[u];
            bool in = false;
            if (p >= 1.0) {
                in = true;
            } else if (p > 0.0) {
                in = rng.bernoulli(p);
            }
            if (in) {
                b.members.push_back(i);
                b.y.push_back(pop.y[u]);
                b.x.push_back(pop.x[u]);
            }
        }
        if (!b.members.empty()) {
            if (pop.z) {
                b.z = std::vector<double>();
                b.z->reserve(b.members.size());
                for (Index i : b.members) b.z->push_back((*pop.z)[static_cast<std::size_t>(i)]);
            }
            if (redraws) *redraws = attempt;
            return b;
        }
    }
    throw EstimationError("impossible-sample",
                          "no non-empty draw in 100 attempts");
}

namespace {

ProbSample finalize_s(const Population& pop, std::vector<Index> members,
                      std::vector<double> pi, Design design, bool observe_y) {
    ProbSample s;
    s.members = std::move(members);
    s.pi = std::move(pi);
    s.d.reserve(s.pi.size());
    for (double p : s.pi) s.d.push_back(1.0 / p);
    s.x = std::vector<int>();
    s.x->reserve(s.members.size());
    for (Index i : s.members) s.x->push_back(pop.x[static_cast<std::size_t>(i)]);
    if (pop.z) {
        s.z = std::vector<double>();
        s.z->reserve(s.members.size());
        for (Index i : s.members) s.z->push_back((*pop.z)[static_cast<std::size_t>(i)]);
    }
    if (observe_y) {
        s.y = std::vector<double>();
        s.y->reserve(s.members.size());
        for (Index i : s.members) s.y->push_back(pop.y[static_cast<std::size_t>(i)]);
    }
    s.design = std::move(design);
    return s;
}

}  // namespace

ProbSample draw_s_sample(const Population& pop, const DesignSpec& design, Frame frame,
                         const NonProbSample* b, std::uint64_t seed, bool observe_y) {
    pop.validate();
    std::vector<char> excluded(static_cast<std::size_t>(pop.size()), 0);
    if (frame == Frame::excluding_b) {
        if (!b)
            throw ConfigError("frame-needs-b", "frame U\\B requires the B-sample");
        for (Index i : b->members) excluded[static_cast<std::size_t>(i)] = 1;
    }
    std::vector<Index> frame_units;
    for (Index i = 0; i < pop.size(); ++i)
        if (!excluded[static_cast<std::size_t>(i)]) frame_units.push_back(i);
    if (frame_units.empty())
        throw ConfigError("empty-frame", "sampling frame is empty");

    Rng rng(derive_seed(seed, kStreamSDraw));

    if (const auto* srs = std::get_if<SrsSpec>(&design)) {
        const auto m = static_cast<Index>(frame_units.size());
        if (srs->n < 1 || srs->n > m)
            throw ConfigError("design-size",
                              "SRS size " + std::to_string(srs->n) +
                                  " outside frame of " + std::to_string(m));
        auto members = rng.sample_without_replacement(frame_units,
                                                      static_cast<std::size_t>(srs->n));
        std::sort(members.begin(), members.end());
        const double p = static_cast<double>(srs->n) / static_cast<double>(m);
        std::vector<double> pi(members.size(), p);
        return finalize_s(pop, std::move(members), std::move(pi),
                          SrsDesign{m, srs->n}, observe_y);
    }

    if (const auto* strat = std::get_if<StratifiedSrsSpec>(&design)) {
        std::map<int, std::vector<Index>> by_stratum;
        for (Index i : frame_units)
            by_stratum[pop.x[static_cast<std::size_t>(i)]].push_back(i);
        std::vector<Index> members;
        std::vector<double> pi;
        StratifiedSrsDesign descriptor;
        for (auto& [label, units] : by_stratum) {
            const auto it = strat->fractions.find(label);
            if (it == strat->fractions.end())
                throw ConfigError("design-stratum",
                                  "no sampling fraction for stratum " + std::to_string(label));
            if (!(it->second > 0.0 && it->second <= 1.0))
                throw ConfigError("design-fraction", "sampling fraction outside (0,1]");
            const auto mh = static_cast<Index>(units.size());
            const auto nh = static_cast<Index>(
                std::llround(it->second * static_cast<double>(mh)));
            if (nh < 1 || nh > mh)
                throw ConfigError("design-size",
                                  "stratum " + std::to_string(label) + " sample size " +
                                      std::to_string(nh) + " outside frame of " +
                                      std::to_string(mh));
            auto chosen = rng.sample_without_replacement(units,
                                                         static_cast<std::size_t>(nh));
            std::sort(chosen.begin(), chosen.end());
            const double p = static_cast<double>(nh) / static_cast<double>(mh);
            for (Index i : chosen) {
                members.push_back(i);
                pi.push_back(p);
            }
            descriptor.strata.push_back(StratumDesign{label, mh, nh});
        }
        return finalize_s(pop, std::move(members), std::move(pi), std::move(descriptor),
                          observe_y);
    }

    const auto& poisson = std::get<PoissonSpec>(design);
    std::vector<Index> members;
    std::vector<double> pi;
    for (Index i : frame_units) {
        const int label = pop.x[static_cast<std::size_t>(i)];
        const auto it = poisson.rate.find(label);
        if (it == poisson.rate.end())
            throw ConfigError("design-stratum",
                              "no inclusion rate for stratum " + std::to_string(label));
        if (!(it->second > 0.0 && it->second <= 1.0))
            throw ConfigError("design-fraction", "inclusion rate outside (0,1]");
        if (rng.bernoulli(it->second)) {
            members.push_back(i);
            pi.push_back(it->second);
        }
    }
    if (members.empty())
        throw EstimationError("empty-draw", "Poisson design drew an empty sample");
    return finalize_s(pop, std::move(members), std::move(pi),
                      PoissonDesign{static_cast<Index>(frame_units.size())}, observe_y);
}

}  // namespace nonprob::popgen
