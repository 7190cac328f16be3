#include "condlab/distinguishers.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

using namespace condlab;

namespace {

InstancePair lab20(Label label, std::uint64_t seed) {
    RandomSource rng(seed);
    return gen_equivalence(EquivParams::lab(std::uint64_t(1) << 20, 4, 8, 4), label, rng);
}

} // namespace

TEST_CASE("pair_probe frequencies: 3/4 across sub-buckets, 1/2 within") {
    auto no = lab20(Label::NO, 1);
    auto yes = lab20(Label::YES, 2);
    RandomSource rng(3);
    const std::uint64_t draws = 20000;

    ElementId h = no.d1().support()->element_at(no.sub_bucket_set(2, 0).ranges()[0].first);
    ElementId l = no.d1().support()->element_at(no.sub_bucket_set(2, 1).ranges()[0].first);
    double f = pair_probe(no, h, l, draws, rng);
    REQUIRE(std::abs(f - 0.75) < 4 * std::sqrt(0.1875 / double(draws)));

    auto [a, b] = yes.bucket_range(3);
    ElementId s1 = yes.d1().support()->element_at(a + 5);
    ElementId s2 = yes.d1().support()->element_at(a + 6);
    double g = pair_probe(yes, s1, s2, draws, rng);
    REQUIRE(std::abs(g - 0.5) < 4 * std::sqrt(0.25 / double(draws)));

    REQUIRE_THROWS_AS(pair_probe(yes, s1, s1, 10, rng), std::invalid_argument);
}

TEST_CASE("distinguisher verdicts separate YES from NO") {
    DistinguisherConfig cfg;
    const int trials = 60;
    int yes_accept = 0, no_reject = 0;
    for (int t = 0; t < trials; ++t) {
        auto yes = lab20(Label::YES, 100 + t);
        auto no = lab20(Label::NO, 200 + t);
        RandomSource ry = RandomSource::stream(11, t);
        RandomSource rn = RandomSource::stream(12, t);
        yes_accept +=
            known_support_distinguish(yes, yes.params().m, cfg, ry).verdict == Verdict::ACCEPT;
        no_reject +=
            known_support_distinguish(no, no.params().m, cfg, rn).verdict == Verdict::REJECT;
    }
    REQUIRE(double(yes_accept) / trials >= 0.9);
    REQUIRE(double(no_reject) / trials >= 0.9);
}

TEST_CASE("inclusion set: expected support overlap c, rarely off the largest bucket") {
    // S includes each element with probability c/s (s = m), so |S ∩ support|
    // is Binomial(m, c/m) with mean c, and an included support element falls
    // outside the largest bucket with probability (m - b rho^tau)/m
    auto p = EquivParams::lab(std::uint64_t(1) << 20, 2, 64, 2); // buckets 256, 16384
    double c = 8.0;
    RandomSource rng(77);
    const int reps = 4000;
    double total = 0;
    int outside = 0;
    auto [big_a, big_b] = std::pair<std::uint64_t, std::uint64_t>{p.m - p.bucket_size(2), p.m};
    for (int rep = 0; rep < reps; ++rep) {
        std::uint64_t cnt = binomial_sample(p.m, c / double(p.m), rng);
        total += double(cnt);
        bool out = false;
        for (std::uint64_t i = 0; i < cnt; ++i) {
            std::uint64_t pos = rng.below(p.m);
            if (pos < big_a || pos >= big_b) out = true;
        }
        outside += out;
    }
    double mean = total / reps;
    double sigma = std::sqrt(c / double(reps)); // Binomial(m, c/m) variance ~ c
    REQUIRE(std::abs(mean - c) < 3 * sigma);
    double freq = double(outside) / reps;
    double bound = 2 * c / double(p.rho);
    REQUIRE(freq <= bound + 3 * std::sqrt(std::max(freq, 0.01) * (1 - std::max(freq, 0.01)) / reps));
}

TEST_CASE("query counts and verdicts are invariant in the ambient domain size") {
    DistinguisherConfig cfg;
    for (std::uint64_t t = 0; t < 5; ++t) {
        auto p20 = EquivParams::lab(std::uint64_t(1) << 20, 4, 8, 4);
        auto p24 = EquivParams::lab(std::uint64_t(1) << 24, 4, 8, 4);
        RandomSource g1 = RandomSource::stream(500, t);
        RandomSource g2 = RandomSource::stream(500, t); // same layout stream
        auto a = gen_equivalence(p20, Label::NO, g1);
        auto b = gen_equivalence(p24, Label::NO, g2);
        RandomSource r1 = RandomSource::stream(600, t);
        RandomSource r2 = RandomSource::stream(600, t);
        auto ra = known_support_distinguish(a, p20.m, cfg, r1);
        auto rb = known_support_distinguish(b, p24.m, cfg, r2);
        REQUIRE(ra.queries == rb.queries);
        REQUIRE(ra.found == rb.found);
        REQUIRE(ra.verdict == rb.verdict);
    }
}

TEST_CASE("graceful degradation with a mis-specified support size (regression)") {
    DistinguisherConfig cfg;
    const int trials = 100;
    int success = 0;
    for (int t = 0; t < trials; ++t) {
        Label label = t % 2 ? Label::NO : Label::YES;
        auto pair = lab20(label, 700 + t);
        RandomSource rng = RandomSource::stream(13, t);
        auto res = known_support_distinguish(pair, pair.params().m * 2, cfg, rng);
        bool correct = (label == Label::YES && res.verdict == Verdict::ACCEPT) ||
                       (label == Label::NO && res.verdict == Verdict::REJECT);
        success += correct;
    }
    REQUIRE(double(success) / trials >= 0.7);
}

TEST_CASE("configuration validation") {
    DistinguisherConfig bad;
    bad.c = 2;
    REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = DistinguisherConfig{};
    bad.decision_threshold = 0.8;
    REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);
    auto pair = lab20(Label::NO, 1);
    RandomSource rng(1);
    REQUIRE_THROWS_AS(known_support_distinguish(pair, 0, DistinguisherConfig{}, rng),
                      std::invalid_argument);
}
