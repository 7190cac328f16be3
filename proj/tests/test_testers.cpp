#include "condlab/json_io.hpp"
#include "condlab/testers.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <map>
#include <set>
#include <unordered_map>

using namespace condlab;

namespace {

InstancePair small_pair(Label label, std::uint64_t seed, std::uint64_t n = 100) {
    RandomSource rng(seed);
    auto p = EquivParams::lab(n, 1, 4, 2); // m = 40
    return gen_equivalence(p, label, rng);
}

/// Flatten a query record into the explicit element set A_i (eager mode).
std::set<std::uint64_t> query_set_of(const QueryRecord& rec) {
    std::set<std::uint64_t> a(rec.old_tokens.begin(), rec.old_tokens.end());
    for (const auto& members : rec.cell_members) a.insert(members.begin(), members.end());
    return a;
}

} // namespace

TEST_CASE("atom registry matches brute-force membership classification") {
    RandomSource driver(42);
    for (int rep = 0; rep < 20; ++rep) {
        auto pair = small_pair(rep % 2 ? Label::NO : Label::YES, 100 + rep);
        World w = World::eager(pair);
        RandomSource rng = driver.substream(rep);
        std::vector<std::set<std::uint64_t>> query_sets;
        for (int qi = 0; qi < 3; ++qi) {
            QueryDirective d;
            d.which = 1;
            if (qi > 0 && rng.below(2)) d.old_picks.push_back(std::uint32_t(rng.below(qi)));
            for (const auto& a : w.atom_view().atoms) {
                if (a.residue == 0) continue;
                std::uint64_t c = rng.below(std::min<std::uint64_t>(a.residue, 8) + 1);
                if (c) d.fresh_counts.emplace_back(a.sig, c);
            }
            if (d.old_picks.empty() && d.fresh_counts.empty())
                d.fresh_counts.emplace_back(0, 1);
            w.resolve_query(d, rng);
            w.answer(OracleKind::COND, rng);
            query_sets.push_back(query_set_of(w.transcript().queries.back()));

            // brute force: classify every element of [n] by its membership bits
            std::map<std::uint64_t, std::uint64_t> sizes;
            for (std::uint64_t x = 0; x < 100; ++x) {
                std::uint64_t sig = 0;
                for (std::size_t l = 0; l < query_sets.size(); ++l)
                    if (query_sets[l].count(x)) sig |= std::uint64_t(1) << l;
                sizes[sig] += 1;
            }
            std::map<std::uint64_t, std::uint64_t> engine(
                w.transcript().queries.back().atoms_after.begin(),
                w.transcript().queries.back().atoms_after.end());
            REQUIRE(engine == sizes);

            std::uint64_t total = 0;
            for (auto& [sig, sz] : engine) total += sz;
            REQUIRE(total == 100);
            REQUIRE(engine.size() <= (std::uint64_t(1) << query_sets.size()));
        }
    }
}

TEST_CASE("the whole-domain query produces a single atom") {
    auto pair = small_pair(Label::YES, 7);
    World w = World::eager(pair);
    RandomSource rng(3);
    w.resolve_query(QueryDirective::fresh_all(1), rng);
    w.answer(OracleKind::COND, rng);
    const auto& atoms = w.transcript().queries.back().atoms_after;
    REQUIRE(atoms.size() == 1);
    REQUIRE(atoms[0].first == 1);
    REQUIRE(atoms[0].second == 100);
}

TEST_CASE("configurations: first is empty, collisions set both bit groups") {
    auto pair = small_pair(Label::NO, 9);
    World w = World::eager(pair);
    RandomSource rng(4);
    QueryDirective f1;
    f1.which = 1;
    f1.fresh_counts.emplace_back(0, 1);
    w.resolve_query(f1, rng);
    w.answer(OracleKind::COND, rng);
    REQUIRE(w.transcript().queries[0].config.arity == 0);

    QueryDirective f2 = f1; // another fresh element: new atom key is sig 1's complement
    f2.fresh_counts.clear();
    f2.fresh_counts.emplace_back(0, 1);
    w.resolve_query(f2, rng);
    w.answer(OracleKind::COND, rng);
    REQUIRE(w.transcript().queries[1].config.collide == 0);

    QueryDirective probe;
    probe.which = 1;
    probe.old_picks = {0}; // s3 := s1, in A_1, not in A_2
    w.resolve_query(probe, rng);
    w.answer(OracleKind::COND, rng);
    Configuration c3 = w.transcript().queries[2].config;
    REQUIRE(c3.arity == 2);
    REQUIRE(c3.collide == 0b01);
    REQUIRE(c3.member == 0b01);
}

TEST_CASE("configuration consistency under replay: member bits follow tokens") {
    RandomSource driver(77);
    for (int rep = 0; rep < 10000; ++rep) {
        auto tester = make_tester("random-policy:q=3,c=2");
        auto pair = small_pair(rep % 2 ? Label::NO : Label::YES, 200 + rep % 50);
        RunResult rr = run(*tester, pair, OracleKind::COND, driver.next());
        const auto& queries = rr.transcript.queries;
        for (std::size_t i = 0; i < queries.size(); ++i) {
            const Configuration& c = queries[i].config;
            REQUIRE(configuration_of(std::uint32_t(i + 1), rr.transcript) == c);
            const auto& states = queries[i].samples_after;
            // member bits equal the sealed signature bits of the sample
            std::uint64_t sig = states[i].sig;
            for (std::uint32_t l = 0; l < c.arity; ++l) {
                REQUIRE((((c.member >> l) & 1) == ((sig >> l) & 1)));
                bool tokens_equal = states[i].token == states[l].token;
                REQUIRE((((c.collide >> l) & 1) == (tokens_equal ? 1u : 0u)));
                if (tokens_equal) REQUIRE(states[i].sig == states[l].sig);
            }
        }
    }
}

TEST_CASE("trivial tester runs its budget and accepts") {
    auto tester = make_tester("trivial-accept:q=4");
    auto pair = small_pair(Label::NO, 31);
    RunResult rr = run(*tester, pair, OracleKind::COND, 555);
    REQUIRE(rr.verdict == Verdict::ACCEPT);
    REQUIRE(rr.transcript.query_count() == 4);
}

TEST_CASE("restricted testers: COND and WCOND transcripts are byte-identical") {
    for (const char* name : {"restricted-fresh", "restricted-alternate", "restricted-first"}) {
        auto tester = make_tester(std::string(name) + ":q=4");
        REQUIRE(tester->restricted());
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            auto pair = small_pair(Label::NO, 400 + seed, 256);
            RunResult a = run(*tester, pair, OracleKind::COND, seed);
            RunResult b = run(*tester, pair, OracleKind::WCOND, seed);
            REQUIRE(transcript_body_dump(a.transcript) == transcript_body_dump(b.transcript));
            REQUIRE(a.verdict == b.verdict);
        }
    }
}

TEST_CASE("node ids: deterministic, distinct preimages get distinct ids") {
    RandomSource driver(88);
    std::unordered_map<std::uint64_t, std::vector<Configuration>> preimages;
    auto tester = make_tester("random-policy:q=4,c=3");
    for (int rep = 0; rep < 2000; ++rep) {
        auto pair = small_pair(Label::NO, 500 + rep % 20);
        RunResult rr = run(*tester, pair, OracleKind::COND, driver.next());
        auto cfgs = rr.transcript.configurations();
        for (std::size_t depth = 0; depth <= cfgs.size(); ++depth) {
            std::uint64_t id = node_id(cfgs, depth);
            REQUIRE(id == node_id(cfgs, depth)); // deterministic
            std::vector<Configuration> pre(cfgs.begin(), cfgs.begin() + depth);
            auto [it, fresh] = preimages.try_emplace(id, pre);
            if (!fresh) REQUIRE(it->second == pre);
        }
    }
    REQUIRE(node_id({}, 0) == node_id({}));
}

TEST_CASE("label blindness: relabeling the support leaves runs identical") {
    std::uint64_t n = 256;
    auto p = EquivParams::lab(n, 1, 4, 2);
    RandomSource gen(64);
    auto pair = gen_equivalence(p, Label::NO, gen);

    // permute element identities, keep positions
    RandomSource prng(65);
    std::vector<std::uint64_t> perm(n);
    for (std::uint64_t i = 0; i < n; ++i) perm[i] = i;
    for (std::uint64_t i = n - 1; i > 0; --i)
        std::swap(perm[i], perm[prng.below(i + 1)]);
    std::vector<ElementId> relabeled;
    for (ElementId e : pair.d1().support()->elements()) relabeled.push_back(perm[e]);
    auto sup2 = std::make_shared<const SupportMap>(n, relabeled);
    auto d1 = std::make_shared<const StructuredDistribution>(
        n, DistKind::BucketUniform, pair.d1().layers(), sup2);
    auto d2 = std::make_shared<const StructuredDistribution>(
        n, DistKind::BucketSplit, pair.d2().layers(), sup2);
    InstancePair pair2(p, Label::NO, d1, d2);

    for (const char* spec : {"uniform-fresh:q=3,c=4", "probe-mix:q=3", "random-policy:q=3,c=2"}) {
        auto tester = make_tester(spec);
        for (std::uint64_t seed = 0; seed < 30; ++seed) {
            RunResult a = run(*tester, pair, OracleKind::COND, seed);
            RunResult b = run(*tester, pair2, OracleKind::COND, seed);
            REQUIRE(a.transcript.configurations() == b.transcript.configurations());
            REQUIRE(a.verdict == b.verdict);
        }
    }

    // the full tester-visible input stream (configurations plus the sig/size
    // registry) is identical under relabeling: no element identity reaches it
    struct Recording final : CoreAdaptiveTester {
        mutable std::vector<std::vector<std::tuple<std::uint64_t, std::uint64_t, std::uint64_t>>>
            views;
        std::string name() const override { return "recording"; }
        unsigned budget() const override { return 3; }
        QueryDirective next(const std::vector<Configuration>&, const AtomView& atoms,
                            RandomSource&) const override {
            std::vector<std::tuple<std::uint64_t, std::uint64_t, std::uint64_t>> snap;
            for (const auto& a : atoms.atoms) snap.emplace_back(a.sig, a.size, a.residue);
            views.push_back(snap);
            QueryDirective d;
            d.which = 1;
            for (const auto& a : atoms.atoms)
                if (a.residue > 0) d.fresh_counts.emplace_back(a.sig, std::min<std::uint64_t>(3, a.residue));
            return d;
        }
    };
    Recording ra, rb;
    run(ra, pair, OracleKind::COND, 123);
    run(rb, pair2, OracleKind::COND, 123);
    REQUIRE(ra.views == rb.views);
}

TEST_CASE("deferred and eager worlds induce the same node distribution") {
    auto p = EquivParams::lab(256, 1, 4, 2);
    PairSchema schema = PairSchema::from(p, Label::NO);
    auto tester = make_tester("uniform-fresh:q=3,c=3");
    const int runs = 50000;
    std::unordered_map<std::uint64_t, std::uint64_t> lazy_hist, eager_hist;
    for (int r = 0; r < runs; ++r) {
        RunResult rr = run(*tester, schema, OracleKind::COND, mix64(r * 2 + 1));
        lazy_hist[node_id(rr.transcript.configurations())] += 1;
    }
    RandomSource gen(4242);
    for (int r = 0; r < runs; ++r) {
        auto pair = gen_equivalence(p, Label::NO, gen); // fresh layout per run, like deferred mode
        RunResult rr = run(*tester, pair, OracleKind::COND, mix64(r * 2 + 7000000));
        eager_hist[node_id(rr.transcript.configurations())] += 1;
    }
    double tv = 0;
    std::set<std::uint64_t> keys;
    for (auto& [k, v] : lazy_hist) keys.insert(k);
    for (auto& [k, v] : eager_hist) keys.insert(k);
    for (std::uint64_t k : keys) {
        double pa = lazy_hist.count(k) ? double(lazy_hist[k]) / runs : 0;
        double pb = eager_hist.count(k) ? double(eager_hist[k]) / runs : 0;
        tv += std::abs(pa - pb);
    }
    REQUIRE(tv / 2 < 0.02);
}

TEST_CASE("zoo factory: specs, budgets, rejection of unknown names") {
    REQUIRE(make_tester("trivial-accept")->budget() == 3);
    REQUIRE(make_tester("uniform-fresh:q=7,c=2")->budget() == 7);
    REQUIRE(make_tester("halving-fresh:q=5")->name() == "halving-fresh");
    REQUIRE(!make_tester("probe-mix")->restricted());
    REQUIRE(make_tester("restricted-fresh")->restricted());
    REQUIRE_THROWS_AS(make_tester("nope"), std::invalid_argument);
    REQUIRE_THROWS_AS(make_tester("trivial-accept:q=0"), std::invalid_argument);
    REQUIRE(zoo_names().size() == 8);
}
