#pragma once

#include "condlab/rational.hpp"
#include "condlab/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace condlab {

/// Hypergeometric(n=draws, K=successes, N=population): number of marked items
/// among `draws` drawn without replacement from a population of `population`
/// items of which `successes` are marked.
struct HypergeomParams {
    std::uint64_t draws = 0;
    std::uint64_t successes = 0;
    std::uint64_t population = 0;

    void validate() const {
        if (successes > population || draws > population)
            throw std::invalid_argument("HypergeomParams: need K <= N and draws <= N");
    }

    std::uint64_t min_k() const {
        return draws + successes > population ? draws + successes - population : 0;
    }
    std::uint64_t max_k() const { return std::min(draws, successes); }

    Rational mean() const { return Rational(Int(draws) * successes, Int(population)); }
};

inline constexpr std::uint64_t kUrnDrawLimit = 1'000'000;

/// Exact urn simulation: one uniform draw per item, decrementing the marked
/// count and the population. Errors above kUrnDrawLimit draws; large-scale
/// callers use sample_hypergeometric_fast instead.
inline std::uint64_t hypergeometric_sample(const HypergeomParams& p, RandomSource& rng) {
    p.validate();
    if (p.draws > kUrnDrawLimit)
        throw std::invalid_argument("hypergeometric_sample: draws exceed urn-simulation limit");
    std::uint64_t k = p.successes;
    std::uint64_t n = p.population;
    std::uint64_t hits = 0;
    for (std::uint64_t i = 0; i < p.draws; ++i) {
        if (k == 0) break;
        if (k == n) {
            hits += p.draws - i;
            break;
        }
        if (rng.below(n) < k) {
            ++hits;
            --k;
        }
        --n;
    }
    return hits;
}

inline Int binomial_coeff(std::uint64_t n, std::uint64_t k) {
    if (k > n) return 0;
    k = std::min(k, n - k);
    Int r = 1;
    for (std::uint64_t i = 0; i < k; ++i) {
        r *= Int(n - i);
        r /= Int(i + 1);
    }
    return r;
}

/// Exact pmf at k: C(K,k) C(N-K, n-k) / C(N,n).
inline Rational hypergeometric_pmf(std::uint64_t k, const HypergeomParams& p) {
    p.validate();
    if (k < p.min_k() || k > p.max_k()) return Rational(0);
    Int num = binomial_coeff(p.successes, k) *
              binomial_coeff(p.population - p.successes, p.draws - k);
    return Rational(num, binomial_coeff(p.population, p.draws));
}

/// Exact pmf table over [min_k, max_k] via the multiplicative recurrence
/// pmf(k+1) = pmf(k) * (K-k)(n-k) / ((k+1)(N-K-n+k+1)).
inline std::vector<Rational> hypergeometric_pmf_table(const HypergeomParams& p) {
    p.validate();
    std::uint64_t lo = p.min_k(), hi = p.max_k();
    std::vector<Rational> t;
    t.reserve(hi - lo + 1);
    t.push_back(hypergeometric_pmf(lo, p));
    for (std::uint64_t k = lo; k < hi; ++k) {
        Rational step(Int(p.successes - k) * Int(p.draws - k),
                      Int(k + 1) * Int(p.population - p.successes - p.draws + k + 1));
        t.push_back(t.back() * step);
    }
    return t;
}

/// Tail bound 2 exp(-lambda^2 mu / 3) for Pr[|X - mu| >= lambda mu], 0 <= lambda <= 1.
inline double hypergeometric_chernoff_bound(double lambda, double mu) {
    return 2.0 * std::exp(-lambda * lambda * mu / 3.0);
}

namespace detail {

inline double logfactorial(double k) { return std::lgamma(k + 1.0); }

/// HRUA* rejection sampler (Stadlober), the standard large-parameter
/// hypergeometric generator. good = K, bad = N - K, sample = n.
inline std::int64_t hypergeometric_hrua(std::int64_t good, std::int64_t bad,
                                        std::int64_t sample, RandomSource& rng) {
    constexpr double d1 = 1.7155277699214135; // 2*sqrt(2/e)
    constexpr double d2 = 0.8989161620588988; // 3 - 2*sqrt(3/e)

    std::int64_t popsize = good + bad;
    std::int64_t computed_sample = std::min(sample, popsize - sample);
    std::int64_t mingoodbad = std::min(good, bad);
    std::int64_t maxgoodbad = std::max(good, bad);

    double p = double(mingoodbad) / double(popsize);
    double q = double(maxgoodbad) / double(popsize);
    double mu = double(computed_sample) * p;
    double a = mu + 0.5;
    double var = (double(popsize - computed_sample) * computed_sample * p * q /
                  (double(popsize) - 1.0));
    double c = std::sqrt(var + 0.5);
    double h = d1 * c + d2;
    std::int64_t m = std::int64_t(
        std::floor(double(computed_sample + 1) * double(mingoodbad + 1) / double(popsize + 2)));
    double g = logfactorial(double(m)) + logfactorial(double(mingoodbad - m)) +
               logfactorial(double(computed_sample - m)) +
               logfactorial(double(maxgoodbad - computed_sample + m));
    double b =
        std::min(double(std::min(computed_sample, mingoodbad) + 1), std::floor(a + 16.0 * c));

    std::int64_t k = 0;
    for (;;) {
        double u = rng.unit_double();
        double v = rng.unit_double();
        double x = a + h * (v - 0.5) / u;
        if (x < 0.0 || x >= b) continue;
        k = std::int64_t(std::floor(x));
        double t = g - (logfactorial(double(k)) + logfactorial(double(mingoodbad - k)) +
                        logfactorial(double(computed_sample - k)) +
                        logfactorial(double(maxgoodbad - computed_sample + k)));
        if (u * (4.0 - u) - 3.0 <= t) break;
        if (u * (u - t) >= 1.0) continue;
        if (2.0 * std::log(u) <= t) break;
    }
    if (good > bad) k = computed_sample - k;
    if (computed_sample < sample) k = good - k;
    return k;
}

} // namespace detail

/// HRUA evaluates log-factorial differences near N log N; beyond this
/// population the double-precision cancellation error in the acceptance test
/// becomes material, so the sampler refuses rather than degrade silently.
inline constexpr std::uint64_t kHruaPopulationLimit = std::uint64_t(1) << 37;

/// Engine-internal sampler without the urn draw cap. Symmetry reductions
/// shrink the problem (X ~ Hyp(n,K,N) equals Hyp(K,n,N), and complements on
/// either role), then: exact urn chain over the small dimension when one role
/// is tiny, HRUA* otherwise. Cross-checked against the exact pmf in tests.
inline std::uint64_t sample_hypergeometric_fast(const HypergeomParams& p, RandomSource& rng) {
    p.validate();
    if (p.draws == 0 || p.successes == 0) return 0;
    if (p.successes == p.population) return p.draws;
    if (p.draws == p.population) return p.successes;
    if (p.draws > p.population / 2) {
        HypergeomParams q{p.population - p.draws, p.successes, p.population};
        return p.successes - sample_hypergeometric_fast(q, rng);
    }
    if (p.successes > p.population / 2) {
        HypergeomParams q{p.draws, p.population - p.successes, p.population};
        return p.draws - sample_hypergeometric_fast(q, rng);
    }
    if (p.successes < p.draws) {
        // swap the roles: the count of drawn successes is symmetric
        return sample_hypergeometric_fast(HypergeomParams{p.successes, p.draws, p.population},
                                          rng);
    }
    if (p.draws <= 64) {
        // exact sequential chain over the draws: at each step the success
        // probability is a ratio of remaining counts
        std::uint64_t k = p.successes, n = p.population, hits = 0;
        for (std::uint64_t i = 0; i < p.draws; ++i) {
            if (rng.below(n) < k) {
                ++hits;
                --k;
            }
            --n;
        }
        return hits;
    }
    if (p.population <= kHruaPopulationLimit) {
        return std::uint64_t(detail::hypergeometric_hrua(
            std::int64_t(p.successes), std::int64_t(p.population - p.successes),
            std::int64_t(p.draws), rng));
    }
    throw std::invalid_argument(
        "sample_hypergeometric_fast: population exceeds the precision-safe limit");
}

/// Binomial(n, p) sampler by inverse transform on the pmf recurrence.
/// Intended for small means (used for c/s-inclusion set sizes).
inline std::uint64_t binomial_sample(std::uint64_t n, double p, RandomSource& rng) {
    if (p <= 0.0 || n == 0) return 0;
    if (p >= 1.0) return n;
    double u = rng.unit_double();
    double term = std::pow(1.0 - p, double(n));
    double cum = term;
    std::uint64_t k = 0;
    double odds = p / (1.0 - p);
    while (u > cum && k < n) {
        term *= double(n - k) / double(k + 1) * odds;
        cum += term;
        ++k;
        if (term < 1e-300 && cum > 0.999999999) break;
    }
    return k;
}

} // namespace condlab
