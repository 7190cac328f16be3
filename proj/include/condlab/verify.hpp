#pragma once

#include "condlab/analysis.hpp"
#include "condlab/distinguishers.hpp"
#include "condlab/json_io.hpp"

#include <atomic>
#include <cmath>
#include <functional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace condlab {

struct CheckReport {
    std::string name;
    bool pass = false;
    Json payload; // {lemma, params, estimate, se, bound, pass}
};

namespace suites {

/// Small pool of valid lab parameter draws for randomized instance sweeps.
inline EquivParams random_lab_params(RandomSource& rng, std::uint64_t n = std::uint64_t(1) << 20) {
    for (;;) {
        unsigned kappa = 1 + unsigned(rng.below(5));
        std::uint64_t rho = std::uint64_t(1) << (1 + rng.below(3));
        unsigned tau = 1 + unsigned(rng.below(4));
        try {
            return EquivParams::lab(n, kappa, rho, tau);
        } catch (const std::invalid_argument&) {
        }
    }
}

/// Criterion 1: exact 1/4 separation of NO pairs and 0 for YES pairs.
inline CheckReport tv_quarter(std::uint64_t seed, std::uint64_t trials, unsigned jobs) {
    std::vector<char> ok(trials, 0);
    parallel_trials(trials, jobs, [&](std::uint64_t t) {
        RandomSource rng = RandomSource::stream(seed, t);
        EquivParams p = random_lab_params(rng);
        auto no = gen_equivalence(p, Label::NO, rng);
        auto yes = gen_equivalence(p, Label::YES, rng);
        ok[t] = pair_tv_exact(no) == Rational(1, 4) && pair_tv_exact(yes) == Rational(0);
    });
    std::uint64_t good = 0;
    for (char c : ok) good += c;
    CheckReport r;
    r.name = "tv-quarter";
    r.pass = good == trials;
    r.payload = Json{{"lemma", "dTV(Q1,Q2) = 1/4 exactly for NO, 0 for YES"},
                     {"params", Json{{"seed", seed}, {"trials", trials}}},
                     {"tv_no", "1/4"},
                     {"tv_yes", "0"},
                     {"estimate", double(good)},
                     {"se", 0.0},
                     {"bound", double(trials)},
                     {"pass", r.pass}};
    return r;
}

/// Criterion 2: bucket masses 1/tau, sizes b rho^j, equal sub-buckets with
/// masses 3/(4 tau) and 1/(4 tau).
inline CheckReport bucket_structure(std::uint64_t seed, std::uint64_t trials, unsigned jobs) {
    trials = std::min<std::uint64_t>(trials, 200);
    std::vector<char> ok(trials, 0);
    parallel_trials(trials, jobs, [&](std::uint64_t t) {
        RandomSource rng = RandomSource::stream(seed ^ 0xb0c4e7, t);
        EquivParams p = random_lab_params(rng);
        auto pair = gen_equivalence(p, Label::NO, rng);
        bool fine = true;
        for (unsigned j = 1; j <= p.tau && fine; ++j) {
            auto [a, b] = pair.bucket_range(j);
            fine = fine && (b - a == p.bucket_size(j));
            fine = fine && set_mass(pair.d1(), pair.bucket_set(j)) == Rational(1, Int(p.tau));
            fine = fine && set_mass(pair.d2(), pair.bucket_set(j)) == Rational(1, Int(p.tau));
            fine = fine && pair.sub_bucket_set(j, 0).size() == pair.sub_bucket_set(j, 1).size();
            fine = fine &&
                   set_mass(pair.d2(), pair.sub_bucket_set(j, 0)) == Rational(3, Int(4) * p.tau);
            fine = fine &&
                   set_mass(pair.d2(), pair.sub_bucket_set(j, 1)) == Rational(1, Int(4) * p.tau);
        }
        ok[t] = fine;
    });
    std::uint64_t good = 0;
    for (char c : ok) good += c;
    CheckReport r;
    r.name = "bucket-structure";
    r.pass = good == trials;
    r.payload = Json{{"lemma", "|B_j| = b rho^j, Q(B_j) = 1/tau, Q2 sub-buckets 3/(4tau), 1/(4tau)"},
                     {"params", Json{{"seed", seed}, {"trials", trials}}},
                     {"estimate", double(good)},
                     {"se", 0.0},
                     {"bound", double(trials)},
                     {"pass", r.pass}};
    return r;
}

/// Criterion 3: sampler mean, empirical pmf closeness, Chernoff tail grid.
inline CheckReport hypergeometric_suite(std::uint64_t seed, std::uint64_t trials, unsigned jobs) {
    (void)jobs;
    std::uint64_t draws = std::max<std::uint64_t>(trials * 100, 100000);
    bool pass = true;
    Json detail = Json::array();

    const HypergeomParams mean_sets[5] = {
        {100, 300, 1000}, {50, 500, 1000}, {200, 100, 400}, {77, 33, 200}, {500, 250, 1500}};
    for (const auto& p : mean_sets) {
        RandomSource rng = RandomSource::stream(seed, p.draws * 7 + p.successes);
        double sum = 0, sumsq = 0;
        for (std::uint64_t i = 0; i < draws; ++i) {
            double v = double(hypergeometric_sample(p, rng));
            sum += v;
            sumsq += v * v;
        }
        double mean = sum / double(draws);
        double var = sumsq / double(draws) - mean * mean;
        double se = std::sqrt(std::max(var, 1e-12) / double(draws));
        double mu = rational_double(p.mean());
        bool ok = std::abs(mean - mu) <= 3 * se;
        pass = pass && ok;
        detail.push_back(Json{{"check", "mean"},
                              {"draws", p.draws},
                              {"K", p.successes},
                              {"N", p.population},
                              {"estimate", mean},
                              {"se", se},
                              {"bound", mu},
                              {"pass", ok}});
    }

    for (const HypergeomParams& p :
         {HypergeomParams{10, 20, 50}, HypergeomParams{25, 25, 50}, HypergeomParams{15, 8, 40}}) {
        RandomSource rng = RandomSource::stream(seed ^ 0x9e55, p.population + p.draws);
        std::map<std::uint64_t, std::uint64_t> freq;
        for (std::uint64_t i = 0; i < draws; ++i) ++freq[hypergeometric_sample(p, rng)];
        auto table = hypergeometric_pmf_table(p);
        double tv = 0;
        for (std::uint64_t k = p.min_k(); k <= p.max_k(); ++k) {
            double emp = freq.count(k) ? double(freq[k]) / double(draws) : 0.0;
            tv += std::abs(emp - rational_double(table[k - p.min_k()]));
        }
        tv /= 2;
        bool ok = tv < 0.01;
        pass = pass && ok;
        detail.push_back(Json{{"check", "pmf-tv"},
                              {"draws", p.draws},
                              {"K", p.successes},
                              {"N", p.population},
                              {"estimate", tv},
                              {"bound", 0.01},
                              {"pass", ok}});
    }

    for (const HypergeomParams& p : {HypergeomParams{200, 400, 1000}, HypergeomParams{500, 100, 2000},
                                     HypergeomParams{50, 500, 1000}}) {
        RandomSource rng = RandomSource::stream(seed ^ 0xc4e2, p.population * 3 + p.draws);
        double mu = rational_double(p.mean());
        std::uint64_t tail_draws = std::min<std::uint64_t>(draws, 30000);
        std::vector<double> vals(tail_draws);
        for (std::uint64_t i = 0; i < tail_draws; ++i)
            vals[i] = double(hypergeometric_sample(p, rng));
        for (double lambda : {0.05, 0.1, 0.25, 0.5, 1.0}) {
            std::uint64_t tail = 0;
            for (double v : vals)
                if (std::abs(v - mu) >= lambda * mu) ++tail;
            double freq = double(tail) / double(tail_draws);
            double bound = hypergeometric_chernoff_bound(lambda, mu);
            double se = std::sqrt(std::max(freq, 1e-6) * (1 - std::max(freq, 1e-6)) /
                                  double(tail_draws));
            bool ok = freq <= bound + 3 * se;
            pass = pass && ok;
            detail.push_back(Json{{"check", "chernoff"},
                                  {"lambda", lambda},
                                  {"estimate", freq},
                                  {"se", se},
                                  {"bound", bound},
                                  {"pass", ok}});
        }
    }

    std::uint64_t checks_passed = 0;
    for (const auto& d : detail)
        if (d.at("pass").get<bool>()) ++checks_passed;
    CheckReport r;
    r.name = "hypergeometric";
    r.pass = pass;
    r.payload = Json{{"lemma", "E[X] = nK/N; Pr[|X-mu| >= lambda mu] < 2 exp(-lambda^2 mu/3)"},
                     {"params", Json{{"seed", seed}, {"draws", draws}}},
                     {"estimate", double(checks_passed)},
                     {"se", 0.0},
                     {"bound", double(detail.size())},
                     {"checks", detail},
                     {"pass", pass}};
    return r;
}

/// Independent check of the 3-step decomposition, written from the protocol
/// definition rather than the oracle code path.
inline bool cond_decomposition_matches(const QueryRecord& rec, const PairSchema& schema) {
    int k = rec.directive.which;
    if (rec.a_w[k - 1] == 0) return true; // both sides are the uniform fallback by definition
    if (rec.u_size == 0) return true;     // old picks are D(e)/D(A) on both sides directly
    Rational p_u = weight_ratio(rec.u_w[k - 1], rec.a_w[k - 1]);
    std::map<std::uint64_t, Weight> group_mass;
    for (const auto& c : rec.cells)
        group_mass[c.parent_sig] += Weight(c.count) * schema.slots[c.slot].w(k);
    for (const auto& c : rec.cells) {
        Weight w = schema.slots[c.slot].w(k);
        Weight gm = group_mass[c.parent_sig];
        Rational composed;
        if (rec.u_w[k - 1] == 0 || gm == 0) {
            composed = Rational(0); // zero-mass atoms are reached with probability 0
            if (w != 0) return false;
            continue;
        }
        composed = p_u * weight_ratio(gm, rec.u_w[k - 1]) * weight_ratio(w, gm);
        if (composed != weight_ratio(w, rec.a_w[k - 1])) return false;
    }
    return true;
}

/// Criterion 4: 3-step answer_cond equals direct D|_A as exact rationals on
/// random small query sets.
inline CheckReport cond_decomposition(std::uint64_t seed, std::uint64_t trials, unsigned jobs) {
    (void)jobs;
    std::uint64_t query_sets = std::max<std::uint64_t>(trials / 10, 100);
    std::uint64_t checked = 0, okcount = 0;
    RandomSource master(seed ^ 0xdec0);
    while (checked < query_sets) {
        auto p = EquivParams::lab(64, 1, 2, 2);
        RandomSource gen = master.substream(checked * 3 + 1);
        auto pair = gen_equivalence(p, checked % 2 ? Label::NO : Label::YES, gen);
        World w = World::eager(pair);
        RandomSource rng = master.substream(checked * 3 + 2);
        for (int qi = 0; qi < 4 && checked < query_sets; ++qi) {
            QueryDirective d;
            d.which = 1 + int(rng.below(2));
            if (w.samples_seen() > 0 && rng.below(2))
                d.old_picks.push_back(std::uint32_t(rng.below(w.samples_seen())));
            for (const auto& a : w.atom_view().atoms) {
                if (a.residue == 0) continue;
                std::uint64_t c = rng.below(std::min<std::uint64_t>(a.residue, 5) + 1);
                if (c) d.fresh_counts.emplace_back(a.sig, c);
            }
            if (d.old_picks.empty() && d.fresh_counts.empty()) continue;
            w.resolve_query(d, rng);
            w.answer(OracleKind::COND, rng);
            ++checked;
            if (cond_decomposition_matches(w.transcript().queries.back(), w.schema())) ++okcount;
        }
    }
    CheckReport r;
    r.name = "cond-decomposition";
    r.pass = okcount == checked;
    r.payload = Json{{"lemma", "COND(O u U) = step1 by mass, atom by D_k(V)/D_k(U), then D|_V"},
                     {"params", Json{{"seed", seed}, {"query_sets", checked}}},
                     {"estimate", double(okcount)},
                     {"se", 0.0},
                     {"bound", double(checked)},
                     {"pass", r.pass}};
    return r;
}

/// Criterion 5: pair-probe frequencies 0.75 and 0.50 within 0.015 at 1e4 draws.
inline CheckReport pair_probe_suite(std::uint64_t seed, std::uint64_t trials, unsigned jobs) {
    (void)jobs;
    std::uint64_t draws = std::max<std::uint64_t>(trials * 10, 10000);
    auto p = EquivParams::lab(std::uint64_t(1) << 20, 4, 8, 4);
    RandomSource gen(seed ^ 0x9a12);
    auto no = gen_equivalence(p, Label::NO, gen);
    auto yes = gen_equivalence(p, Label::YES, gen);
    RandomSource rng(seed ^ 0x77fe);

    bool pass = true;
    Json detail = Json::array();
    for (unsigned j = 1; j <= p.tau; ++j) {
        ElementId h = no.d1().support()->element_at(no.sub_bucket_set(j, 0).ranges()[0].first);
        ElementId l = no.d1().support()->element_at(no.sub_bucket_set(j, 1).ranges()[0].first);
        double f = pair_probe(no, h, l, draws, rng);
        bool ok = std::abs(f - 0.75) <= 0.015;
        pass = pass && ok;
        detail.push_back(Json{{"check", "no-cross-sub-bucket"},
                              {"bucket", j},
                              {"estimate", f},
                              {"bound", 0.75},
                              {"tolerance", 0.015},
                              {"pass", ok}});

        auto [a, b] = yes.bucket_range(j);
        ElementId s1 = yes.d1().support()->element_at(a);
        ElementId s2 = yes.d1().support()->element_at(a + 1);
        double g = pair_probe(yes, s1, s2, draws, rng);
        bool ok2 = std::abs(g - 0.50) <= 0.015;
        pass = pass && ok2;
        detail.push_back(Json{{"check", "yes-same-bucket"},
                              {"bucket", j},
                              {"estimate", g},
                              {"bound", 0.50},
                              {"tolerance", 0.015},
                              {"pass", ok2}});
    }
    double worst = 0;
    for (const auto& d : detail)
        worst = std::max(worst, std::abs(d.at("estimate").get<double>() -
                                         d.at("bound").get<double>()));
    CheckReport r;
    r.name = "pair-probe";
    r.pass = pass;
    r.payload = Json{{"lemma", "COND_{D2}({s,s'}) assigns 3/4 and 1/4 across sub-buckets"},
                     {"params", Json{{"seed", seed}, {"draws", draws}}},
                     {"estimate", worst},
                     {"se", std::sqrt(0.25 / double(draws))},
                     {"bound", 0.015},
                     {"checks", detail},
                     {"pass", pass}};
    return r;
}

/// Criterion 6: known-support distinguisher rates and O(1) query counts
/// invariant across n in {2^20, 2^24, 2^28}.
inline CheckReport distinguisher_suite(std::uint64_t seed, std::uint64_t trials, unsigned jobs) {
    std::uint64_t runs = std::max<std::uint64_t>(std::min<std::uint64_t>(trials, 400), 200);
    DistinguisherConfig cfg;
    std::vector<unsigned> exps{20, 24, 28};
    // per exp, per label: verdicts and query counts by trial
    std::vector<std::vector<std::uint64_t>> counts(exps.size() * 2,
                                                   std::vector<std::uint64_t>(runs, 0));
    std::vector<std::vector<char>> accepts(exps.size() * 2, std::vector<char>(runs, 0));
    std::atomic<std::uint64_t> empty_hits{0};
    for (std::size_t e = 0; e < exps.size(); ++e) {
        std::uint64_t n = std::uint64_t(1) << exps[e];
        auto p = EquivParams::lab(n, 4, 8, 4); // m = 74880 for every n
        for (int li = 0; li < 2; ++li) {
            Label label = li == 0 ? Label::YES : Label::NO;
            parallel_trials(runs, jobs, [&, e, li, label, p](std::uint64_t t) {
                RandomSource gen = RandomSource::stream(seed, t * 2 + li);
                auto pair = gen_equivalence(p, label, gen);
                RandomSource rng = RandomSource::stream(seed ^ 0xd157, t * 2 + li);
                auto res = known_support_distinguish(pair, p.m, cfg, rng);
                counts[e * 2 + li][t] = res.queries;
                accepts[e * 2 + li][t] = res.verdict == Verdict::ACCEPT;
                if (res.empty_hit) ++empty_hits;
            });
        }
    }
    std::uint64_t yes_accept = 0, no_reject = 0;
    for (std::uint64_t t = 0; t < runs; ++t) {
        yes_accept += accepts[0][t];
        no_reject += 1 - accepts[1][t];
    }
    bool counts_identical = true;
    for (std::size_t e = 1; e < exps.size(); ++e)
        for (int li = 0; li < 2; ++li)
            if (counts[e * 2 + li] != counts[li]) counts_identical = false;
    double ya = double(yes_accept) / double(runs);
    double nr = double(no_reject) / double(runs);
    bool pass = ya >= 0.9 && nr >= 0.9 && counts_identical;
    std::uint64_t max_queries = 0;
    for (std::uint64_t c : counts[1]) max_queries = std::max(max_queries, c);
    CheckReport r;
    r.name = "distinguisher";
    r.pass = pass;
    r.payload =
        Json{{"lemma", "known-support separation with O(1) queries, count invariant in n"},
             {"params", Json{{"seed", seed},
                             {"trials", runs},
                             {"c", cfg.c},
                             {"probe_trials", cfg.probe_trials},
                             {"threshold", cfg.decision_threshold}}},
             {"estimate", std::min(ya, nr)},
             {"yes_accept_rate", ya},
             {"no_reject_rate", nr},
             {"se", std::sqrt(0.25 / double(runs))},
             {"bound", 0.9},
             {"counts_identical_across_n", counts_identical},
             {"max_queries", max_queries},
             {"empty_inclusion_hits", std::uint64_t(empty_hits)},
             {"pass", pass}};
    return r;
}

/// Criterion 7: phi against the brute-force scan, bad-kappa counts against
/// direct enumeration and the analytic bound on random node shapes.
inline CheckReport phi_kappa(std::uint64_t seed, std::uint64_t trials, unsigned jobs) {
    (void)jobs;
    bool pass = true;
    auto ap = AnalysisParams::lab(Rational(8), Rational(4), 2, Rational(8));

    // exhaustive grid: phi_of vs the literal Delta-scan, and monotonicity
    NodeShape grid{std::uint64_t(1) << 12, 2, 4, 3};
    unsigned prev = 0;
    for (std::uint64_t size = 0; size <= grid.n && pass; ++size) {
        unsigned expect = grid.tau;
        for (unsigned delta = 0; delta < grid.tau; ++delta) {
            if (Rational(Int(size) * grid.b * ipow(Int(grid.rho), grid.tau - delta), Int(grid.n)) <
                Rational(1) / ap.alpha) {
                expect = delta;
                break;
            }
        }
        unsigned got = phi_of(size, grid, ap.alpha);
        pass = pass && got == expect && got >= prev;
        prev = got;
    }

    // random node shapes: enumeration count never exceeds the analytic bound
    std::uint64_t shapes = std::max<std::uint64_t>(trials, 1000);
    RandomSource rng(seed ^ 0xf1ca);
    std::uint64_t worst_bad = 0;
    double worst_bound = 0;
    double worst_ratio = 0;
    for (std::uint64_t rep = 0; rep < shapes && pass; ++rep) {
        std::uint64_t n = std::uint64_t(1) << (16 + rng.below(10));
        std::uint64_t rho = std::uint64_t(1) << (1 + rng.below(5));
        unsigned tau = 1 + unsigned(rng.below(5));
        unsigned q = 1 + unsigned(rng.below(4));
        std::vector<std::uint64_t> sizes;
        std::uint64_t left = n;
        for (unsigned a = 0; a + 1 < (1u << std::min(q, 4u)) && left > 1; ++a) {
            std::uint64_t s = 1 + rng.below(left / 2 + 1);
            sizes.push_back(s);
            left -= s;
        }
        sizes.push_back(left);
        std::vector<std::vector<std::uint64_t>> decomps;
        for (unsigned i = 0; i < q; ++i) {
            std::vector<std::uint64_t> cells;
            for (std::uint64_t s : sizes)
                if (s > 1) cells.push_back(1 + rng.below(s));
            if (!cells.empty()) decomps.push_back(cells);
        }
        auto r = count_bad_kappas(sizes, decomps, n, rho, tau, q, ap);
        pass = pass && double(r.bad) <= r.analytic_bound;
        double ratio = r.analytic_bound > 0 ? double(r.bad) / r.analytic_bound : 0;
        if (ratio >= worst_ratio) {
            worst_ratio = ratio;
            worst_bad = r.bad;
            worst_bound = r.analytic_bound;
        }
    }

    CheckReport r;
    r.name = "phi-kappa";
    r.pass = pass;
    r.payload = Json{{"lemma", "bad kappas bounded by tau 2^{q+1} lg a + 2^q(2 lg a + phi lg rho) "
                               "+ 2 q tau lg gamma"},
                     {"params", Json{{"seed", seed}, {"shapes", shapes}}},
                     {"estimate", double(worst_bad)},
                     {"se", 0.0},
                     {"bound", worst_bound},
                     {"pass", pass}};
    return r;
}

/// Criterion 8: restricted testers behave identically under COND and WCOND:
/// byte-identical run bodies over shared streams, and level TV exactly 0.
inline CheckReport restricted_equivalence(std::uint64_t seed, std::uint64_t trials, unsigned jobs) {
    std::uint64_t seeds = std::max<std::uint64_t>(std::min<std::uint64_t>(trials, 200), 100);
    auto p = EquivParams::lab(std::uint64_t(1) << 20, 4, 8, 4);
    PairSchema schema = PairSchema::from(p, Label::NO);
    const char* names[3] = {"restricted-fresh", "restricted-alternate", "restricted-first"};
    std::vector<char> same(seeds * 3, 0);
    for (int ti = 0; ti < 3; ++ti) {
        auto tester = make_tester(std::string(names[ti]) + ":q=4");
        parallel_trials(seeds, jobs, [&, ti](std::uint64_t s) {
            RunResult a = run(*tester, schema, OracleKind::COND, mix64(seed + s));
            RunResult b = run(*tester, schema, OracleKind::WCOND, mix64(seed + s));
            same[ti * seeds + s] =
                transcript_body_dump(a.transcript) == transcript_body_dump(b.transcript) &&
                a.verdict == b.verdict;
        });
    }
    std::uint64_t identical = 0;
    for (char c : same) identical += c;

    auto tester = make_tester("restricted-alternate:q=4");
    auto runner = [&](int side, std::uint64_t t) {
        return run(*tester, schema, side == 0 ? OracleKind::COND : OracleKind::WCOND,
                   mix64(seed + t));
    };
    auto ap = AnalysisParams::lab(Rational(8), Rational(4), 2, Rational(8));
    std::uint64_t tv_trials = std::max<std::uint64_t>(seeds, 1000);
    auto rep =
        estimate_level_tv(runner, schema, schema, 4, tv_trials, ap, LevelTvFilter{}, 20, jobs);
    double max_tv = 0;
    for (const auto& lvl : rep.levels) max_tv = std::max(max_tv, lvl.tv);

    CheckReport r;
    r.name = "restricted-equivalence";
    r.pass = identical == seeds * 3 && max_tv == 0.0;
    r.payload = Json{{"lemma", "restricted testers are the same under COND and WCOND"},
                     {"params", Json{{"seed", seed}, {"seeds", seeds}, {"testers", 3}}},
                     {"identical_transcripts", identical},
                     {"estimate", max_tv},
                     {"se", 0.0},
                     {"bound", 0.0},
                     {"pass", r.pass}};
    return r;
}

/// Engineered instance for the level-TV and leaf-TV experiments: two buckets
/// of sizes 2^23 and 2^36 over a full-support domain, so every half-split
/// cell is macroscopic and the realized atom-pick deviations stay below 2/64.
/// The domain size respects the fast sampler's precision-safe limit.
inline EquivParams level_tv_params() {
    std::uint64_t rho = std::uint64_t(1) << 13;
    std::uint64_t m = (std::uint64_t(1) << 23) + (std::uint64_t(1) << 36);
    return EquivParams::lab(m, 10, rho, 2);
}

/// Criterion 9: COND-vs-WCOND level TV at most 4i/gamma_eff + 3 SE up to q=5,
/// with gamma_eff >= 64 realized, plus the data-processing monotonicity.
inline CheckReport level_tv(std::uint64_t seed, std::uint64_t trials, unsigned jobs) {
    std::uint64_t runs = std::max<std::uint64_t>(trials * 10, 10000);
    auto p = level_tv_params();
    PairSchema schema = PairSchema::from(p, Label::NO);
    auto tester = make_tester("halving-fresh:q=5,top=2");
    auto runner = [&](int side, std::uint64_t t) {
        return run(*tester, schema, side == 0 ? OracleKind::COND : OracleKind::WCOND,
                   mix64(seed * 31 + t * 2 + std::uint64_t(side)));
    };
    auto ap = AnalysisParams::lab(Rational(64), Rational(1), 2, Rational(8));
    LevelTvFilter filter;
    filter.require_good1 = true;
    filter.max_theta_dev = 2.0 / 64.0;
    auto rep = estimate_level_tv(runner, schema, schema, 5, runs, ap, filter, 20, jobs);

    bool pass = rep.gamma_eff >= 64.0 && rep.node_collisions == 0;
    Json levels = Json::array();
    double prev = -1;
    bool monotone = true;
    for (unsigned i = 1; i <= 5; ++i) {
        const auto& lvl = rep.cond_levels[i - 1];
        double bound = 4.0 * i / rep.gamma_eff + 3.0 * lvl.se;
        bool ok = lvl.tv <= bound;
        pass = pass && ok;
        if (lvl.tv + 2 * lvl.se < prev) monotone = false;
        prev = lvl.tv;
        levels.push_back(Json{{"level", i},
                              {"estimate", lvl.tv},
                              {"se", lvl.se},
                              {"bound", bound},
                              {"unconditioned_estimate", rep.levels[i - 1].tv},
                              {"unconditioned_se", rep.levels[i - 1].se},
                              {"pass", ok}});
    }
    pass = pass && monotone && rep.kept_frac[0] > 0.5 && rep.kept_frac[1] > 0.5;
    CheckReport r;
    r.name = "level-tv";
    r.pass = pass;
    const auto& deepest = rep.cond_levels[4];
    r.payload = Json{{"lemma", "TV(L_COND(i), L_WCOND(i)) <= 4i/gamma"},
                     {"estimate", deepest.tv},
                     {"se", deepest.se},
                     {"bound", 4.0 * 5 / rep.gamma_eff + 3.0 * deepest.se},
                     {"params", Json{{"seed", seed},
                                     {"trials_per_side", runs},
                                     {"q", 5},
                                     {"n", p.n},
                                     {"gamma_required", 64}}},
                     {"gamma_eff", rep.gamma_eff},
                     {"kept_frac", Json::array({rep.kept_frac[0], rep.kept_frac[1]})},
                     {"monotone_within_2se", monotone},
                     {"levels", levels},
                     {"pass", pass}};
    return r;
}

/// Engineered instance for the good-event frequencies: twelve buckets with
/// rho = 4 over a full-support domain. b = 2^11 keeps even the smallest
/// bucket macroscopic so per-cell bucket shares concentrate and the
/// q^2/phi_eff collision bound carries content.
inline EquivParams good_events_params() {
    std::uint64_t rho = 4;
    Int m = 0;
    for (unsigned j = 1; j <= 12; ++j) m += (Int(1) << 11) * ipow(Int(rho), j);
    return EquivParams::lab(m.convert_to<std::uint64_t>(), 11, rho, 12);
}

/// Criterion 10: conditioned on Good1 and Good2, Good3 happens with
/// frequency >= 1 - 2/gamma_eff - 3 SE; bucket collisions stay below
/// q^2/phi_eff + 3 SE.
inline CheckReport good_events_suite(std::uint64_t seed, std::uint64_t trials, unsigned jobs) {
    std::uint64_t runs = std::max<std::uint64_t>(trials * 10, 10000);
    auto p = good_events_params();
    PairSchema schema = PairSchema::from(p, Label::NO);
    auto tester = make_tester("probe-mix:q=3");
    auto ap = AnalysisParams::lab(Rational(4), Rational(1), 2, Rational(8));

    std::vector<EventReport> evs(runs);
    parallel_trials(runs, jobs, [&](std::uint64_t t) {
        RunResult rr = run(*tester, schema, OracleKind::COND, mix64(seed * 77 + t));
        evs[t] = good_events(rr.transcript, schema, ap);
    });

    std::uint64_t good12 = 0, good3_and = 0, good1_only = 0, buckets_ok = 0;
    double max_share = 0, max_bucket_prob = 0;
    for (const auto& ev : evs) {
        if (ev.good1) {
            ++good1_only;
            if (ev.good2_buckets) ++buckets_ok;
        }
        if (ev.good1 && ev.good2_buckets && ev.good2_ratio) {
            ++good12;
            if (ev.good3) ++good3_and;
            max_share = std::max(max_share, ev.nonheaviest_share_total);
            max_bucket_prob = std::max(max_bucket_prob, ev.max_bucket_prob);
        }
    }
    double gamma_eff = max_share > 0 ? 2.0 / max_share : std::numeric_limits<double>::infinity();
    double phi_eff = max_bucket_prob > 0 ? 1.0 / max_bucket_prob
                                         : std::numeric_limits<double>::infinity();
    double good3_freq = good12 ? double(good3_and) / double(good12) : 0;
    double se3 = good12 ? std::sqrt(0.25 / double(good12)) : 1;
    double bound3 = 1.0 - 2.0 / gamma_eff - 3 * se3;
    double bucket_freq = good1_only ? double(buckets_ok) / double(good1_only) : 0;
    double seb = good1_only ? std::sqrt(0.25 / double(good1_only)) : 1;
    double boundb = 1.0 - 9.0 / phi_eff - 3 * seb; // q = 3
    bool pass = good12 > runs / 5 && good3_freq >= bound3 && bucket_freq >= boundb;

    CheckReport r;
    r.name = "good-events";
    r.pass = pass;
    r.payload = Json{{"lemma", "Pr[Good3 | Good1, Good2] >= 1 - 2/gamma; collisions <= q^2/phi"},
                     {"params", Json{{"seed", seed}, {"runs", runs}, {"q", 3}, {"n", p.n}}},
                     {"estimate", good3_freq},
                     {"se", se3},
                     {"bound", bound3},
                     {"good12_population", good12},
                     {"gamma_eff", gamma_eff},
                     {"phi_eff", phi_eff},
                     {"good3", Json{{"estimate", good3_freq}, {"se", se3}, {"bound", bound3}}},
                     {"bucket_distinct",
                      Json{{"estimate", bucket_freq}, {"se", seb}, {"bound", boundb}}},
                     {"pass", pass}};
    return r;
}

/// Criterion 11: every zoo tester's YES/NO leaf TV stays below 0.15 at q <= 3
/// on the high-gamma instance; the support-revealing distinguisher separates.
inline CheckReport leaf_tv(std::uint64_t seed, std::uint64_t trials, unsigned jobs) {
    std::uint64_t runs = std::max<std::uint64_t>(trials * 10, 10000);
    auto p = level_tv_params();
    PairSchema yes_schema = PairSchema::from(p, Label::YES);
    PairSchema no_schema = PairSchema::from(p, Label::NO);
    auto ap = AnalysisParams::lab(Rational(64), Rational(1), 2, Rational(8));

    bool pass = true;
    Json detail = Json::array();
    for (const std::string& name : zoo_names()) {
        auto tester = make_tester(name + ":q=3,c=4096");
        auto runner = [&](int side, std::uint64_t t) {
            const PairSchema& schema = side == 0 ? yes_schema : no_schema;
            // fresh lazy world per trial: layout randomness deferred into the run
            return run(*tester, schema, OracleKind::COND, mix64(seed * 13 + t));
        };
        auto rep = estimate_level_tv(runner, yes_schema, no_schema, 3, runs, ap, LevelTvFilter{}, 20, jobs);
        double tv = rep.levels[2].tv;
        bool ok = tv <= 0.15 && rep.node_collisions == 0;
        pass = pass && ok;
        detail.push_back(Json{{"tester", name},
                              {"estimate", tv},
                              {"se", rep.levels[2].se},
                              {"bound", 0.15},
                              {"pass", ok}});
    }

    // the only separating member is the distinguisher with revealed support
    DistinguisherConfig cfg;
    auto pd = EquivParams::lab(std::uint64_t(1) << 20, 4, 8, 4);
    std::uint64_t sep_trials = 100;
    std::uint64_t yes_acc = 0, no_rej = 0;
    for (std::uint64_t t = 0; t < sep_trials; ++t) {
        RandomSource gy = RandomSource::stream(seed ^ 0xabc, t * 2);
        RandomSource gn = RandomSource::stream(seed ^ 0xabc, t * 2 + 1);
        auto yp = gen_equivalence(pd, Label::YES, gy);
        auto np = gen_equivalence(pd, Label::NO, gn);
        RandomSource ry = RandomSource::stream(seed ^ 0xdef, t * 2);
        RandomSource rn = RandomSource::stream(seed ^ 0xdef, t * 2 + 1);
        yes_acc += known_support_distinguish(yp, pd.m, cfg, ry).verdict == Verdict::ACCEPT;
        no_rej += known_support_distinguish(np, pd.m, cfg, rn).verdict == Verdict::REJECT;
    }
    double sep = (double(yes_acc) + double(no_rej)) / (2.0 * double(sep_trials));
    pass = pass && sep >= 0.9;

    double worst_tv = 0, worst_se = 0;
    for (const auto& d : detail) {
        if (d.at("estimate").get<double>() > worst_tv) {
            worst_tv = d.at("estimate").get<double>();
            worst_se = d.at("se").get<double>();
        }
    }
    CheckReport r;
    r.name = "leaf-tv";
    r.pass = pass;
    r.payload = Json{{"lemma", "zoo testers cannot separate YES from NO at q <= 3"},
                     {"params", Json{{"seed", seed}, {"trials_per_side", runs}, {"q", 3}}},
                     {"estimate", worst_tv},
                     {"se", worst_se},
                     {"bound", 0.15},
                     {"testers", detail},
                     {"distinguisher_success", sep},
                     {"pass", pass}};
    return r;
}

/// Criterion 12: uniblock pairs are 1/2-far, per-atom bad kappas stay below
/// 2 ceil(sqrt(log2 n)) for n up to 2^32, and the beta band holds at the
/// predicted rate.
inline CheckReport uniblock_suite(std::uint64_t seed, std::uint64_t trials, unsigned jobs) {
    std::uint64_t gens = std::max<std::uint64_t>(trials, 1000);
    std::uint64_t n16 = std::uint64_t(1) << 16;

    std::vector<char> far(gens, 0);
    parallel_trials(gens, jobs, [&](std::uint64_t t) {
        RandomSource rng = RandomSource::stream(seed ^ 0x0771, t);
        auto e = gen_uniblock(n16, Parity::Even, rng);
        auto o = gen_uniblock(n16, Parity::Odd, rng);
        far[t] = tv_exact(*e.dist, *o.dist) >= Rational(1, 2);
    });
    std::uint64_t far_ok = 0;
    for (char c : far) far_ok += c;

    // exhaustive kappa enumeration per atom size, n = 2^16 .. 2^32
    bool kappa_ok = true;
    RandomSource arng(seed ^ 0x0772);
    for (unsigned L = 16; L <= 32 && kappa_ok; ++L) {
        std::uint64_t n = std::uint64_t(1) << L;
        std::vector<std::uint64_t> sizes{0, 1, n / 2, n};
        for (unsigned b = 0; b < L; ++b) sizes.push_back(std::uint64_t(1) << b);
        for (int rnd = 0; rnd < 100; ++rnd) sizes.push_back(arng.below(n) + 1);
        for (std::uint64_t s : sizes) {
            auto r = count_bad_uniblock_kappas(s, n);
            if (r.bad > r.bound) kappa_ok = false;
        }
    }

    // beta-band violation rate against the predicted tail
    std::uint64_t conc_gens = std::min<std::uint64_t>(gens, 1000);
    Rational beta(8);
    std::vector<char> viol(conc_gens, 0);
    std::vector<double> tails(conc_gens, 0);
    parallel_trials(conc_gens, jobs, [&](std::uint64_t t) {
        RandomSource rng = RandomSource::stream(seed ^ 0x0773, t);
        auto inst = gen_uniblock(n16, Parity::Even, rng);
        std::vector<UniblockAtom> atoms;
        for (std::uint64_t size :
             {n16 / 2, n16 / 4, std::uint64_t(1) << 10, std::uint64_t(4), std::uint64_t(1)}) {
            UniblockAtom a;
            a.size = size;
            a.intersection = sample_hypergeometric_fast(
                HypergeomParams{size, inst.support_size, n16}, rng);
            atoms.push_back(a);
        }
        auto rep = uniblock_concentration(inst.support_size, n16, atoms, beta);
        viol[t] = rep.violations > 0;
        tails[t] = std::min(1.0, rep.predicted_tail);
    });
    double viol_rate = 0, tail_avg = 0;
    for (std::uint64_t t = 0; t < conc_gens; ++t) {
        viol_rate += viol[t];
        tail_avg += tails[t];
    }
    viol_rate /= double(conc_gens);
    tail_avg /= double(conc_gens);
    double se = std::sqrt(std::max(viol_rate, 0.002) * (1 - std::max(viol_rate, 0.002)) /
                          double(conc_gens));
    bool conc_ok = viol_rate <= tail_avg + 3 * se;

    bool pass = far_ok == gens && kappa_ok && conc_ok;
    CheckReport r;
    r.name = "uniblock";
    r.pass = pass;
    r.payload = Json{{"lemma", "dTV(D_e,D_o) >= 1/2; bad kappas <= 2 ceil(sqrt(log2 n)); "
                               "beta-band concentration"},
                     {"params", Json{{"seed", seed}, {"generations", gens}}},
                     {"estimate", viol_rate},
                     {"se", se},
                     {"bound", tail_avg},
                     {"tv_half_ok", far_ok},
                     {"kappa_bound_ok", kappa_ok},
                     {"violation_rate", viol_rate},
                     {"predicted_tail", tail_avg},
                     {"pass", pass}};
    return r;
}

} // namespace suites

inline std::vector<std::string> verify_suite_names() {
    return {"tv-quarter", "bucket-structure", "hypergeometric", "cond-decomposition",
            "pair-probe", "distinguisher",    "phi-kappa",      "restricted-equivalence",
            "level-tv",   "good-events",      "leaf-tv",        "uniblock"};
}

inline CheckReport run_verify_suite(const std::string& name, std::uint64_t seed,
                                    std::uint64_t trials, unsigned jobs) {
    using Fn = CheckReport (*)(std::uint64_t, std::uint64_t, unsigned);
    static const std::map<std::string, Fn> table{
        {"tv-quarter", suites::tv_quarter},
        {"bucket-structure", suites::bucket_structure},
        {"hypergeometric", suites::hypergeometric_suite},
        {"cond-decomposition", suites::cond_decomposition},
        {"pair-probe", suites::pair_probe_suite},
        {"distinguisher", suites::distinguisher_suite},
        {"phi-kappa", suites::phi_kappa},
        {"restricted-equivalence", suites::restricted_equivalence},
        {"level-tv", suites::level_tv},
        {"good-events", suites::good_events_suite},
        {"leaf-tv", suites::leaf_tv},
        {"uniblock", suites::uniblock_suite}};
    auto it = table.find(name);
    if (it == table.end())
        throw std::invalid_argument("run_verify_suite: unknown suite '" + name + "'");
    return it->second(seed, trials, jobs);
}

} // namespace condlab
