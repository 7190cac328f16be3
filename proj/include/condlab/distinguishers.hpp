#pragma once

#include "condlab/instances.hpp"
#include "condlab/testers.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <unordered_set>
#include <vector>

namespace condlab {

struct DistinguisherConfig {
    double c = 8.0;                   // inclusion intensity: each element kept w.p. c/s
    std::uint32_t probe_trials = 200; // COND repetitions per probed pair
    double decision_threshold = 0.65; // bias cutoff in (1/2, 3/4)

    void validate() const {
        if (c < 4.0) throw std::invalid_argument("DistinguisherConfig: c must be >= 4");
        if (probe_trials < 1) throw std::invalid_argument("DistinguisherConfig: probe_trials >= 1");
        if (!(decision_threshold > 0.5 && decision_threshold < 0.75))
            throw std::invalid_argument("DistinguisherConfig: threshold must be in (0.5, 0.75)");
    }
};

/// Repeated COND_{D2}({s, s'}) probes; returns the empirical fraction of
/// draws equal to s. Exact Bernoulli draws from the rational mass ratio.
inline double pair_probe(const InstancePair& pair, ElementId s, ElementId s2,
                         std::uint64_t trials, RandomSource& rng) {
    if (s == s2) throw std::invalid_argument("pair_probe: need two distinct elements");
    if (trials == 0) throw std::invalid_argument("pair_probe: trials must be >= 1");
    Rational ws = pair.d2().element_mass(s);
    Rational wt = pair.d2().element_mass(s2);
    std::uint64_t hits = 0;
    if (ws == 0 && wt == 0) {
        for (std::uint64_t t = 0; t < trials; ++t) hits += rng.bernoulli_ratio(1, 2);
    } else {
        Rational p = ws / (ws + wt);
        Int num = numerator(p), den = denominator(p);
        if (den <= Int(std::numeric_limits<std::uint64_t>::max())) {
            std::uint64_t nu = num.convert_to<std::uint64_t>();
            std::uint64_t de = den.convert_to<std::uint64_t>();
            for (std::uint64_t t = 0; t < trials; ++t) hits += rng.bernoulli_ratio(nu, de);
        } else {
            for (std::uint64_t t = 0; t < trials; ++t) hits += rand_below_int(den, rng) < num;
        }
    }
    return double(hits) / double(trials);
}

struct DistinguishResult {
    Verdict verdict = Verdict::ACCEPT;
    std::uint64_t queries = 0;     // total conditional queries spent
    std::uint32_t found = 0;       // distinct support elements identified
    std::uint32_t pairs_probed = 0;
    bool empty_hit = false;        // the c/s inclusion set missed the support
};

/// Known-support-size distinguisher: build S by c/s-inclusion, identify the
/// support members of S by repeated COND_{D2}(S) draws (zero-mass elements
/// are never returned; the stopping rule is 20c draws), then pair-probe every
/// identified pair. Cross-bucket pairs are rho-skewed under both
/// distributions, so the decision only uses pairs whose empirical fraction
/// lies in [0.2, 0.8]; REJECT iff such a pair exceeds the threshold band.
///
/// Stream discipline: the support-side inclusion draw, the membership draws
/// and the probes use substreams that depend only on m and the layout, so the
/// spent query count is invariant across ambient n for fixed lab parameters.
inline DistinguishResult known_support_distinguish(const InstancePair& pair,
                                                   std::uint64_t support_size,
                                                   const DistinguisherConfig& cfg,
                                                   RandomSource& rng) {
    cfg.validate();
    if (support_size == 0)
        throw std::invalid_argument("known_support_distinguish: support size must be positive");
    pair.d1().require_realized();

    RandomSource incl_rng = rng.substream(1);
    RandomSource member_rng = rng.substream(2);
    RandomSource probe_rng = rng.substream(3);
    RandomSource offsup_rng = rng.substream(4);

    const std::uint64_t m = pair.d1().m();
    const double inclusion = std::min(1.0, cfg.c / double(support_size));
    DistinguishResult res;

    // S ∩ support: Binomial(m, c/s) many uniform support positions
    std::uint64_t in_count = binomial_sample(m, inclusion, incl_rng);
    std::unordered_set<std::uint64_t> pos_set;
    while (pos_set.size() < in_count) pos_set.insert(incl_rng.below(m));
    std::vector<std::uint64_t> positions(pos_set.begin(), pos_set.end());
    std::sort(positions.begin(), positions.end());

    std::uint64_t budget = std::uint64_t(std::ceil(20.0 * cfg.c));
    std::vector<ElementId> found;

    if (!positions.empty()) {
        // integer mass numerators over the shared pair denominator
        Int denom = 1;
        for (const auto& l : pair.d2().layers())
            denom = boost::multiprecision::lcm(denom, denominator(l.unit));
        std::vector<std::uint64_t> w(positions.size());
        std::uint64_t total = 0;
        for (std::size_t i = 0; i < positions.size(); ++i) {
            Rational u = pair.d2().layer_of_position(positions[i]).unit;
            w[i] = (numerator(u) * (denom / denominator(u))).convert_to<std::uint64_t>();
            total += w[i];
        }
        std::unordered_set<ElementId> distinct;
        for (std::uint64_t d = 0; d < budget; ++d) {
            std::uint64_t r = member_rng.below(total);
            std::size_t i = 0;
            while (r >= w[i]) r -= w[i], ++i;
            ElementId x = pair.d1().support()->element_at(positions[i]);
            ++res.queries;
            if (distinct.insert(x).second) found.push_back(x);
        }
    } else {
        // D2(S) = 0: every draw is a uniform fallback over the off-support
        // part of S. Rare (probability ~ e^-c); the identified elements carry
        // zero mass and every probe below behaves as a fair coin.
        res.empty_hit = true;
        std::uint64_t n_out = pair.d1().n() - m;
        std::uint64_t off_count = binomial_sample(n_out, inclusion, offsup_rng);
        if (off_count == 0) return res; // S empty: nothing to query
        std::unordered_set<std::uint64_t> distinct;
        for (std::uint64_t d = 0; d < budget; ++d) {
            distinct.insert(offsup_rng.below(off_count));
            ++res.queries;
        }
        res.found = 0;
        // probing junk pairs yields fair coins; skip them and accept
        return res;
    }

    res.found = static_cast<std::uint32_t>(found.size());
    bool reject = false;
    for (std::size_t i = 0; i < found.size(); ++i) {
        for (std::size_t j = i + 1; j < found.size(); ++j) {
            double f = pair_probe(pair, found[i], found[j], cfg.probe_trials, probe_rng);
            res.queries += cfg.probe_trials;
            ++res.pairs_probed;
            if (f < 0.2 || f > 0.8) continue; // cross-bucket pair, rho-skewed either way
            if (f > cfg.decision_threshold || f < 1.0 - cfg.decision_threshold) reject = true;
        }
    }
    res.verdict = reject ? Verdict::REJECT : Verdict::ACCEPT;
    return res;
}

} // namespace condlab
