#include "condlab/hypergeometric.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <bit>
#include <cmath>
#include <map>

using namespace condlab;

TEST_CASE("degenerate draws are deterministic") {
    RandomSource rng(5);
    for (int i = 0; i < 200; ++i) {
        REQUIRE(hypergeometric_sample({10, 10, 10}, rng) == 10);
        REQUIRE(hypergeometric_sample({2, 1, 2}, rng) == 1);
    }
}

TEST_CASE("sampler mean matches nK/N within 3 sigma") {
    HypergeomParams p{100, 300, 1000};
    RandomSource rng(17);
    const int draws = 100000;
    double sum = 0, sumsq = 0;
    for (int i = 0; i < draws; ++i) {
        double v = double(hypergeometric_sample(p, rng));
        sum += v;
        sumsq += v * v;
    }
    double mean = sum / draws;
    double var = sumsq / draws - mean * mean;
    double se = std::sqrt(var / draws);
    REQUIRE(std::abs(mean - 30.0) < 3 * se);
}

TEST_CASE("pmf: point values, normalization, and brute-force enumeration") {
    REQUIRE(hypergeometric_pmf(1, {2, 1, 2}) == Rational(1));

    HypergeomParams p{5, 3, 10};
    Rational total = 0;
    for (std::uint64_t k = 0; k <= p.max_k(); ++k) total += hypergeometric_pmf(k, p);
    REQUIRE(total == Rational(1));

    // independent oracle: enumerate all C(12,4) draws from a population with
    // 5 marked items and count those containing exactly 2 marked
    std::uint64_t favorable = 0, all = 0;
    for (unsigned mask = 0; mask < (1u << 12); ++mask) {
        if (std::popcount(mask) != 4) continue;
        ++all;
        if (std::popcount(mask & 0x1Fu) == 2) ++favorable;
    }
    REQUIRE(all == 495);
    REQUIRE(hypergeometric_pmf(2, {4, 5, 12}) == Rational(favorable, all));
}

TEST_CASE("pmf table matches direct pmf") {
    HypergeomParams p{7, 9, 20};
    auto table = hypergeometric_pmf_table(p);
    for (std::uint64_t k = p.min_k(); k <= p.max_k(); ++k)
        REQUIRE(table[k - p.min_k()] == hypergeometric_pmf(k, p));
}

TEST_CASE("empirical pmf within TV 0.01 of the exact recurrence for N <= 50") {
    for (HypergeomParams p : {HypergeomParams{10, 20, 50}, HypergeomParams{25, 25, 50},
                              HypergeomParams{8, 5, 30}}) {
        RandomSource rng(mix64(p.draws * 1000 + p.successes));
        const int draws = 100000;
        std::map<std::uint64_t, std::uint64_t> freq;
        for (int i = 0; i < draws; ++i) ++freq[hypergeometric_sample(p, rng)];
        auto table = hypergeometric_pmf_table(p);
        double tv = 0;
        for (std::uint64_t k = p.min_k(); k <= p.max_k(); ++k) {
            double emp = freq.count(k) ? double(freq[k]) / draws : 0.0;
            tv += std::abs(emp - rational_double(table[k - p.min_k()]));
        }
        REQUIRE(tv / 2 < 0.01);
    }
}

TEST_CASE("Chernoff tail bound is never violated beyond 3 standard errors") {
    const int draws = 20000;
    for (HypergeomParams p : {HypergeomParams{200, 400, 1000}, HypergeomParams{500, 100, 2000},
                              HypergeomParams{50, 500, 1000}}) {
        double mu = rational_double(p.mean());
        RandomSource rng(mix64(p.successes + 31 * p.draws));
        std::vector<double> vals(draws);
        for (int i = 0; i < draws; ++i) vals[i] = double(hypergeometric_sample(p, rng));
        for (double lambda : {0.05, 0.1, 0.2, 0.5, 1.0}) {
            int tail = 0;
            for (double v : vals)
                if (std::abs(v - mu) >= lambda * mu) ++tail;
            double freq = double(tail) / draws;
            double bound = hypergeometric_chernoff_bound(lambda, mu);
            double se = std::sqrt(std::max(freq, 1e-6) * (1 - std::max(freq, 1e-6)) / draws);
            REQUIRE(freq <= bound + 3 * se);
        }
    }
}

TEST_CASE("urn simulation refuses draws above the documented limit") {
    RandomSource rng(1);
    REQUIRE_THROWS_AS(hypergeometric_sample({kUrnDrawLimit + 1, 10, kUrnDrawLimit * 2}, rng),
                      std::invalid_argument);
}

TEST_CASE("large-parameter sampler agrees with the exact pmf") {
    HypergeomParams p{2000, 3000, 10000};
    RandomSource rng(23);
    const int draws = 20000;
    std::map<std::uint64_t, std::uint64_t> freq;
    double sum = 0;
    for (int i = 0; i < draws; ++i) {
        std::uint64_t v = sample_hypergeometric_fast(p, rng);
        ++freq[v];
        sum += double(v);
    }
    double mu = rational_double(p.mean());
    REQUIRE(std::abs(sum / draws - mu) < 0.02 * mu);
    // TV against the exact (windowed) pmf
    auto table = hypergeometric_pmf_table(p);
    double tv = 0;
    for (std::uint64_t k = p.min_k(); k <= p.max_k(); ++k) {
        double ex = rational_double(table[k - p.min_k()]);
        if (ex < 1e-12 && !freq.count(k)) continue;
        double emp = freq.count(k) ? double(freq[k]) / draws : 0.0;
        tv += std::abs(emp - ex);
    }
    REQUIRE(tv / 2 < 0.03);
}

TEST_CASE("fast sampler's exact chain for a small success count matches the pmf") {
    HypergeomParams p{5000, 30, 100000};
    RandomSource rng(37);
    const int draws = 100000;
    std::map<std::uint64_t, std::uint64_t> freq;
    for (int i = 0; i < draws; ++i) ++freq[sample_hypergeometric_fast(p, rng)];
    auto table = hypergeometric_pmf_table(p);
    double tv = 0;
    for (std::uint64_t k = p.min_k(); k <= p.max_k(); ++k) {
        double ex = rational_double(table[k - p.min_k()]);
        double emp = freq.count(k) ? double(freq[k]) / draws : 0.0;
        tv += std::abs(emp - ex);
    }
    REQUIRE(tv / 2 < 0.01);
}

TEST_CASE("fast sampler keeps its moments at the precision-safe population limit") {
    HypergeomParams p{std::uint64_t(1) << 35, std::uint64_t(1) << 23, std::uint64_t(1) << 36};
    RandomSource rng(41);
    const int draws = 20000;
    double mu = rational_double(p.mean()); // 2^22
    double pfrac = double(p.successes) / double(p.population);
    double fpc = double(p.population - p.draws) / double(p.population - 1);
    double sigma = std::sqrt(double(p.draws) * pfrac * (1 - pfrac) * fpc);
    double sum = 0, sumsq = 0;
    for (int i = 0; i < draws; ++i) {
        double v = double(sample_hypergeometric_fast(p, rng));
        sum += v;
        sumsq += v * v;
    }
    double mean = sum / draws;
    double var = sumsq / draws - mean * mean;
    REQUIRE(std::abs(mean - mu) < 5 * sigma / std::sqrt(double(draws)));
    REQUIRE(std::abs(std::sqrt(var) / sigma - 1.0) < 0.05);

    HypergeomParams too_big{std::uint64_t(1) << 40, std::uint64_t(1) << 30,
                            std::uint64_t(1) << 41};
    REQUIRE_THROWS_AS(sample_hypergeometric_fast(too_big, rng), std::invalid_argument);
}

TEST_CASE("binomial sampler hits its mean") {
    RandomSource rng(29);
    const int draws = 50000;
    double sum = 0;
    for (int i = 0; i < draws; ++i) sum += double(binomial_sample(74880, 8.0 / 74880.0, rng));
    REQUIRE(std::abs(sum / draws - 8.0) < 0.1);
}
