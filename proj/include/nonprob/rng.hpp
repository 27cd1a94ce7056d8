#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "nonprob/errors.hpp"

namespace nonprob {

// Seed splitting rule
// -------------------
// Every random draw in the library comes from an Rng constructed with a seed
// derived from a root seed by the counter-based rule below.  Replicate r of
// scenario stream s always receives derive_seed(root, s, r), so the result of
// a replicate depends only on (root, s, r) and never on execution order or
// the number of worker threads.

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream,
                                 std::uint64_t counter = 0) {
    std::uint64_t h = splitmix64(root ^ 0xA0761D6478BD642Full);
    h = splitmix64(h ^ splitmix64(stream + 0x8EBC6AF09C88C6E3ull));
    h = splitmix64(h ^ splitmix64(counter + 0x589965CC75374CC3ull));
    return h;
}

// Deterministic random source.  Distribution transforms are implemented here
// rather than via std::*_distribution so that the produced streams are pinned
// by this code alone, not by the standard library's internals.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform on [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    bool bernoulli(double p) { return uniform() < p; }

    // Uniform integer in [0, n). Rejection sampling, no modulo bias.
    std::uint64_t uniform_below(std::uint64_t n) {
        if (n == 0) throw InternalError("rng-empty-range", "uniform_below(0)");
        const std::uint64_t limit = std::uint64_t(-1) - std::uint64_t(-1) % n;
        std::uint64_t v = engine_();
        while (v >= limit) v = engine_();
        return v % n;
    }

    // Standard normal via Box-Muller (two uniforms per draw, no cached spare).
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 0x1.0p-53) u1 = 0x1.0p-53;
        constexpr double two_pi = 6.283185307179586476925286766559;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
    }

    double normal(double mean, double sd) { return mean + sd * normal(); }

    // First n entries of a Fisher-Yates shuffle of `items`; order of the
    // selected prefix is itself random.
    template <typename T>
    std::vector<T> sample_without_replacement(std::vector<T> items, std::size_t n) {
        if (n > items.size())
            throw InternalError("rng-sample-size", "sample larger than frame");
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t j = i + static_cast<std::size_t>(uniform_below(items.size() - i));
            std::swap(items[i], items[j]);
        }
        items.resize(n);
        return items;
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace nonprob
