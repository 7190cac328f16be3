#include "condlab/analysis.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>

using namespace condlab;

namespace {

AnalysisParams lab4() { return AnalysisParams::lab(Rational(8), Rational(4), 2, Rational(8)); }

NodeShape lab_shape() { return NodeShape{std::uint64_t(1) << 20, 16, 8, 4}; }

/// Independent oracle for phi: the literal Delta-scan with Rational arithmetic.
unsigned phi_scan(std::uint64_t size, const NodeShape& p, const Rational& alpha) {
    for (unsigned delta = 0; delta < p.tau; ++delta) {
        Rational ratio(Int(size) * p.b * ipow(Int(p.rho), p.tau - delta), Int(p.n));
        if (ratio < Rational(1) / alpha) return delta;
    }
    return p.tau;
}

} // namespace

TEST_CASE("phi_of: pinned lab values") {
    auto p = lab_shape();
    Rational alpha(4);
    REQUIRE(phi_of(1, p, alpha) == 0);   // 16*4096/2^20 = 1/16 < 1/4
    REQUIRE(phi_of(p.n, p, alpha) == 4); // no Delta qualifies
    REQUIRE(phi_of(64, p, alpha) == 2);  // 4, 0.5, 1/16: first < 1/4 at Delta = 2
}

TEST_CASE("phi_of equals the brute-force scan on an exhaustive grid and is monotone") {
    NodeShape p{std::uint64_t(1) << 12, 2, 4, 3};
    Rational alpha(4);
    unsigned prev = 0;
    for (std::uint64_t size = 0; size <= p.n; ++size) {
        unsigned got = phi_of(size, p, alpha);
        REQUIRE(got == phi_scan(size, p, alpha));
        REQUIRE(got >= prev);
        prev = got;
    }
}

TEST_CASE("classify_node: root shapes, gray-zone atoms, small atoms") {
    auto ap = lab4();
    auto p = lab_shape();

    // no atoms, no queries: vacuously good
    REQUIRE(classify_node({}, {}, p, ap).good);

    // whole-domain atom: every ratio b rho^j >= alpha, good
    REQUIRE(classify_node({p.n}, {}, p, ap).good);

    // |A| b rho / n = 1 sits inside (1/alpha, alpha): condition 1 violated
    std::uint64_t gray = p.n / (p.b * p.rho);
    NodeClass nc = classify_node({gray}, {}, p, ap);
    REQUIRE(!nc.good);
    REQUIRE(nc.violated_cond1);

    // tiny atoms with zero-phi cells: small side of every condition
    NodeClass tiny = classify_node({1, 1, 1}, {{1, 1}}, p, ap);
    REQUIRE(tiny.good);

    // condition 3: engineered S inside the window for j = tau
    // S * b * rho^tau / n must land in (n/gamma, n*gamma) scaled form
    std::vector<std::uint64_t> cell{p.n / (p.b * upow(p.rho, p.tau))};
    unsigned phi_cell = phi_of(cell[0], p, Rational(4));
    if (phi_cell > 0) {
        NodeClass c3 = classify_node({p.n}, {cell}, p, ap);
        // S = phi_cell * |cell|, S b rho^tau / n = phi_cell: inside (1/8, 8) -> bad
        REQUIRE(!c3.good);
        REQUIRE(c3.violated_cond3);
    }
}

TEST_CASE("draft form of condition 3 differs from the main definition") {
    auto p = lab_shape();
    auto ap = lab4();
    // S such that S/(tau n) is far outside [1/gamma, gamma] but S b rho^j / n
    // is inside the per-bucket window for some j
    std::vector<std::uint64_t> cells{64};
    auto main_form = classify_node({p.n}, {cells}, p, ap);
    ap.draft_condition3 = true;
    auto draft_form = classify_node({p.n}, {cells}, p, ap);
    // phi(64) = 2, S = 128: draft compares 128/(4n) to gamma bands: tiny -> good
    REQUIRE(draft_form.good);
    REQUIRE(!main_form.good);
}

TEST_CASE("count_bad_kappas equals direct enumeration and the interval formula") {
    // single atom, no U sets: badness is governed by the K1/K2 intervals
    std::uint64_t n = std::uint64_t(1) << 20;
    std::uint64_t rho = 8;
    unsigned tau = 4;
    auto ap = lab4();
    for (std::uint64_t size : {std::uint64_t(1), std::uint64_t(64), std::uint64_t(8192), n / 2, n}) {
        auto r = count_bad_kappas({size}, {}, n, rho, tau, 1, ap);
        REQUIRE(r.kappas_checked == floor_log2_u64(n) / 2 + 1);

        std::uint64_t expect = 0;
        const Int an = numerator(ap.alpha), ad = denominator(ap.alpha);
        for (unsigned kappa = 0; kappa <= floor_log2_u64(n) / 2; ++kappa) {
            Int b = Int(1) << kappa;
            bool bad = false;
            // K1 membership: n/(alpha |A| rho^j) < 2^kappa < n alpha/(|A| rho^j)
            for (unsigned j = 1; j <= tau && !bad; ++j) {
                Int v = Int(size) * b * ipow(Int(rho), j);
                if (v * ad < Int(n) * an && v * an > Int(n) * ad) bad = true;
            }
            // K2 membership from condition 2 (phi = ap.phi)
            {
                Rational r_large = Rational(Int(size) * b, Int(n));
                std::int64_t e = std::int64_t(tau) - ap.phi;
                if (e >= 0)
                    r_large *= Rational(ipow(Int(rho), unsigned(e)));
                else
                    r_large /= Rational(ipow(Int(rho), unsigned(-e)));
                bool large = r_large >= ap.alpha;
                bool small =
                    Rational(Int(size) * b * ipow(Int(rho), tau), Int(n)) <= Rational(1) / ap.alpha;
                if (!large && !small) bad = true;
            }
            if (bad) ++expect;
        }
        REQUIRE(r.bad == expect);
        REQUIRE(double(r.bad) <= r.analytic_bound);
    }

    // empty node: no bad kappas at all
    REQUIRE(count_bad_kappas({}, {}, n, rho, tau, 1, ap).bad == 0);
}

TEST_CASE("count_bad_kappas stays below the analytic bound on random shapes") {
    RandomSource rng(314);
    auto ap = lab4();
    for (int rep = 0; rep < 100; ++rep) {
        std::uint64_t n = std::uint64_t(1) << (16 + rng.below(8));
        std::uint64_t rho = std::uint64_t(1) << (1 + rng.below(5));
        unsigned tau = 1 + unsigned(rng.below(5));
        unsigned q = 1 + unsigned(rng.below(4));
        std::vector<std::uint64_t> sizes;
        std::uint64_t left = n;
        for (unsigned a = 0; a + 1 < (1u << q) && left > 1; ++a) {
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
        REQUIRE(double(r.bad) <= r.analytic_bound);
    }
}

TEST_CASE("concentration report: full-domain atom, zero-phi atoms") {
    // n = m: the whole-domain atom intersects each bucket in exactly its size,
    // ratio exactly 1, and its mass bands hold with phi_A = tau
    auto p = EquivParams::lab(20, 0, 4, 2);
    auto ap = lab4();
    AtomRealization whole;
    whole.size = 20;
    whole.bucket_counts = {0, 4, 16};
    whole.mass1 = whole.mass2 = Rational(1);
    REQUIRE(concentration_report(p, {whole}, ap).empty());

    // an atom with phi_A = 0 must carry zero mass (needs a sparse domain)
    auto ps = EquivParams::lab(1024, 0, 4, 2);
    REQUIRE(phi_of(1, NodeShape::of(ps), ap.alpha) == 0);
    AtomRealization ghost;
    ghost.size = 1;
    ghost.bucket_counts = {0, 1, 0}; // one bucket-1 element: violates zero-intersection
    ghost.mass1 = Rational(1, 8);
    ghost.mass2 = Rational(1, 8);
    auto violations = concentration_report(ps, {ghost}, ap);
    bool zero_violation = false, mass_violation = false;
    for (const auto& v : violations) {
        if (v.kind == ConcKind::ZeroIntersect) zero_violation = true;
        if (v.kind == ConcKind::MassNonzero) mass_violation = true;
    }
    REQUIRE(zero_violation);
    REQUIRE(mass_violation);
}

TEST_CASE("concentration violation rate stays under the union-bound tail") {
    // random atoms of fixed size on a lab instance, realized through the
    // exchangeable hypergeometric layout, gamma_eff = 8
    auto p = EquivParams::lab(std::uint64_t(1) << 20, 4, 8, 4);
    auto ap = AnalysisParams::lab(Rational(8), Rational(4), 2, Rational(8));
    NodeShape shape = NodeShape::of(p);
    RandomSource rng(2718);
    const int reps = 1000;
    const std::uint64_t atom_size = 1 << 14;
    unsigned phi_a = phi_of(atom_size, shape, ap.alpha);
    int violating = 0;
    double tail = 0;
    for (unsigned j = 1; j <= p.tau; ++j) {
        double e = double(atom_size) * double(p.bucket_size(j)) / double(p.n);
        if (j + phi_a <= p.tau)
            tail += std::min(1.0, e);
        else
            tail += std::min(1.0, 2 * std::exp(-e / (3 * 64.0)));
    }
    for (int rep = 0; rep < reps; ++rep) {
        AtomRealization a;
        a.size = atom_size;
        a.bucket_counts.assign(p.tau + 1, 0);
        std::uint64_t left_atom = atom_size, left_n = p.n;
        for (unsigned j = 1; j <= p.tau; ++j) {
            a.bucket_counts[j] = sample_hypergeometric_fast(
                HypergeomParams{p.bucket_size(j), left_atom, left_n}, rng);
            left_atom -= a.bucket_counts[j];
            left_n -= p.bucket_size(j);
        }
        for (unsigned j = 1; j <= p.tau; ++j) {
            a.mass1 += Rational(Int(a.bucket_counts[j]), Int(p.tau) * p.bucket_size(j));
        }
        a.mass2 = a.mass1;
        if (!concentration_report(p, {a}, ap).empty()) ++violating;
    }
    double freq = double(violating) / reps;
    double se = std::sqrt(std::max(freq, 0.002) * (1 - std::max(freq, 0.002)) / reps);
    REQUIRE(freq <= tail + 3 * se);
}

TEST_CASE("realized_atoms reconstructs atom contents from sealed run data") {
    auto p = EquivParams::lab(200, 1, 4, 2); // m = 40
    RandomSource gen(99);
    auto pair = gen_equivalence(p, Label::NO, gen);
    PairSchema schema = PairSchema::from(p, Label::NO);
    World w = World::eager(pair);
    RandomSource rng(7);
    std::vector<std::set<std::uint64_t>> query_sets;
    for (int qi = 0; qi < 3; ++qi) {
        QueryDirective d;
        d.which = 1 + qi % 2;
        if (qi == 2) d.old_picks = {0};
        for (const auto& a : w.atom_view().atoms) {
            if (a.residue == 0) continue;
            std::uint64_t c = rng.below(std::min<std::uint64_t>(a.residue, 10) + 1);
            if (c) d.fresh_counts.emplace_back(a.sig, c);
        }
        if (d.old_picks.empty() && d.fresh_counts.empty()) d.fresh_counts.emplace_back(0, 1);
        w.resolve_query(d, rng);
        w.answer(OracleKind::COND, rng);
        std::set<std::uint64_t> aset(w.transcript().queries.back().old_tokens.begin(),
                                     w.transcript().queries.back().old_tokens.end());
        for (const auto& members : w.transcript().queries.back().cell_members)
            aset.insert(members.begin(), members.end());
        query_sets.push_back(aset);
    }

    auto atoms = realized_atoms(w.transcript(), schema, 2);
    // brute force: classify every element of [n] by membership signature
    std::map<std::uint64_t, AtomRealization> expect;
    for (std::uint64_t x = 0; x < 200; ++x) {
        std::uint64_t sig = 0;
        for (std::size_t l = 0; l < query_sets.size(); ++l)
            if (query_sets[l].count(x)) sig |= std::uint64_t(1) << l;
        auto& a = expect[sig];
        if (a.bucket_counts.empty()) a.bucket_counts.assign(p.tau + 1, 0);
        a.sig = sig;
        a.size += 1;
        auto pos = pair.d1().support()->position_of(x);
        a.bucket_counts[pos ? pair.bucket_of_position(*pos) : 0] += 1;
        a.mass1 += pair.d1().element_mass(x);
        a.mass2 += pair.d2().element_mass(x);
    }
    REQUIRE(atoms.size() == expect.size());
    for (const auto& a : atoms) {
        const auto& e = expect.at(a.sig);
        REQUIRE(a.size == e.size);
        REQUIRE(a.bucket_counts == e.bucket_counts);
        REQUIRE(a.mass1 == e.mass1);
        REQUIRE(a.mass2 == e.mass2);
    }
}

TEST_CASE("good events on forced runs: vacuous single sample, same-bucket collision") {
    // tau = 1 forces all samples into one bucket
    auto p1 = EquivParams::lab(8, 0, 8, 1);
    RandomSource gen(11);
    auto pair = gen_equivalence(p1, Label::YES, gen);
    PairSchema schema = PairSchema::from(p1, Label::YES);
    auto ap = lab4();

    {
        World w = World::eager(pair);
        RandomSource rng(5);
        QueryDirective d;
        d.which = 1;
        d.fresh_counts.emplace_back(0, 1);
        w.resolve_query(d, rng);
        w.answer(OracleKind::COND, rng);
        EventReport ev = good_events(w.transcript(), schema, ap);
        REQUIRE(ev.good2_buckets); // single sample: vacuously true
    }
    {
        World w = World::eager(pair);
        RandomSource rng(6);
        for (int i = 0; i < 2; ++i) {
            QueryDirective d;
            d.which = 1;
            d.fresh_counts.emplace_back(0, 1); // complement atom keeps residue
            w.resolve_query(d, rng);
            w.answer(OracleKind::COND, rng);
        }
        EventReport ev = good_events(w.transcript(), schema, ap);
        REQUIRE(!ev.good2_buckets); // two positive-mass samples share the only bucket
    }
}

TEST_CASE("good3 detects non-heaviest step-1 outcomes") {
    // one old sample vs a huge fresh set: the set is the unique heaviest, so
    // good3 holds iff step 1 picked U
    auto p = EquivParams::lab(40, 0, 4, 2); // m = 20
    RandomSource gen(21);
    auto pair = gen_equivalence(p, Label::NO, gen);
    PairSchema schema = PairSchema::from(p, Label::NO);
    auto ap = lab4();
    int good = 0, total = 0;
    double share = 0;
    for (int rep = 0; rep < 2000; ++rep) {
        World w = World::eager(pair);
        RandomSource rng = RandomSource::stream(31, rep);
        QueryDirective d1;
        d1.which = 2;
        d1.fresh_counts.emplace_back(0, 20);
        w.resolve_query(d1, rng);
        w.answer(OracleKind::COND, rng);
        QueryDirective d2;
        d2.which = 2;
        d2.old_picks = {0};
        for (const auto& a : w.atom_view().atoms)
            if (a.residue > 0) d2.fresh_counts.emplace_back(a.sig, a.residue);
        w.resolve_query(d2, rng);
        w.answer(OracleKind::COND, rng);
        EventReport ev = good_events(w.transcript(), schema, ap);
        ++total;
        if (ev.good3) ++good;
        share = std::max(share, ev.nonheaviest_share_total);
        REQUIRE(ev.max_theta_dev >= 0);
    }
    // Pr[good3] >= 1 - share by the union bound over queries
    double freq = double(good) / total;
    REQUIRE(freq >= 1 - share - 3 * std::sqrt(0.25 / total));
    REQUIRE(freq > 0.5);
}

TEST_CASE("tv estimation: coupled seeds give exactly zero, histograms behave") {
    NodeHistogram a{{1, 50}, {2, 50}};
    NodeHistogram b{{1, 25}, {3, 75}};
    REQUIRE(tv_histogram(a, 100, b, 100) == Catch::Approx(0.75));

    auto schema = PairSchema::from(EquivParams::lab(256, 1, 4, 2), Label::NO);
    auto tester = make_tester("uniform-fresh:q=3,c=3");
    auto runner = [&](int /*side*/, std::uint64_t trial) {
        return run(*tester, schema, OracleKind::COND, mix64(trial + 17));
    };
    auto ap = lab4();
    LevelTvFilter keep_all;
    auto rep = estimate_level_tv(runner, schema, schema, 3, 2000, ap, keep_all);
    REQUIRE(rep.node_collisions == 0);
    for (const auto& lvl : rep.levels) {
        REQUIRE(lvl.tv == 0.0); // identical seeds on both sides: coupled histograms
    }

    // independent seeds: plug-in TV is positive but within noise allowance
    auto runner2 = [&](int side, std::uint64_t trial) {
        return run(*tester, schema, OracleKind::COND, mix64(trial * 2 + side + 9000));
    };
    auto rep2 = estimate_level_tv(runner2, schema, schema, 3, 4000, ap, keep_all);
    for (const auto& lvl : rep2.levels) REQUIRE(lvl.tv < 0.08);
}

TEST_CASE("uniblock classification and bad-kappa counting") {
    std::uint64_t n = std::uint64_t(1) << 16;
    REQUIRE(uniblock_classify(n, 1 << 8, n) == UniblockClass::Large);
    REQUIRE(uniblock_classify(0, 1 << 8, n) == UniblockClass::Small);

    // threshold exponent is ceil(sqrt(16)) = 4: |A| s / n vs 2^4
    REQUIRE(uniblock_classify(1 << 12, 1 << 8, n) == UniblockClass::Large);  // = 2^4
    REQUIRE(uniblock_classify(1 << 11, 1 << 8, n) == UniblockClass::Neither); // = 2^3
    REQUIRE(uniblock_classify(1, 1 << 8, n) == UniblockClass::Small);         // 2^-8 < 2^-4

    for (std::uint64_t size : {std::uint64_t(0), std::uint64_t(1), std::uint64_t(1) << 10,
                               std::uint64_t(1) << 15, n}) {
        auto r = count_bad_uniblock_kappas(size, n);
        REQUIRE(r.bad <= r.bound);
    }
}

TEST_CASE("uniblock concentration: whole domain exact, small atoms zero") {
    std::uint64_t n = 1 << 16;
    std::uint64_t s = 1 << 8;
    // A = [n]: intersection exactly s, ratio exactly 1
    auto rep = uniblock_concentration(s, n, {{n, s}}, Rational(8));
    REQUIRE(rep.violations == 0);
    // small atom with a nonzero intersection is flagged
    auto rep2 = uniblock_concentration(s, n, {{1, 1}}, Rational(8));
    REQUIRE(rep2.violations == 1);
    // beta-band: large atom with intersection far off
    auto rep3 = uniblock_concentration(s, n, {{n / 2, 0}}, Rational(8));
    REQUIRE(rep3.violations == 1);
}
