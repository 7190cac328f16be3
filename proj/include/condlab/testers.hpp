#pragma once

#include "condlab/oracles.hpp"

#include <algorithm>
#include <cstdint>
#include <functional>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace condlab {

enum class Verdict { ACCEPT, REJECT };

inline const char* verdict_name(Verdict v) { return v == Verdict::ACCEPT ? "ACCEPT" : "REJECT"; }

/// Canonical identity of a decision-tree node: a deterministic hash of the
/// configuration sequence from the root. Collisions are audited by
/// store-and-compare wherever node distributions are estimated.
inline std::uint64_t node_id(const std::vector<Configuration>& configs, std::size_t depth) {
    std::uint64_t h = 0x636f6e646c6162ULL; // fixed root id seed
    for (std::size_t i = 0; i < depth && i < configs.size(); ++i) {
        h = mix64(h ^ (std::uint64_t(configs[i].arity) + RandomSource::golden));
        h = mix64(h ^ configs[i].collide);
        h = mix64(h ^ configs[i].member);
    }
    return h;
}

inline std::uint64_t node_id(const std::vector<Configuration>& configs) {
    return node_id(configs, configs.size());
}

/// Recompute the configuration of sample i (1-based) from sealed run data:
/// collide bits from token equality against earlier samples, member bits from
/// the sample's accumulated query-set signature. Equals the configuration the
/// tester received at that step.
inline Configuration configuration_of(std::uint32_t i, const Transcript& t) {
    if (i == 0 || i > t.queries.size())
        throw std::out_of_range("configuration_of: sample index outside the run");
    const auto& states = t.queries[i - 1].samples_after;
    Configuration c;
    c.arity = i - 1;
    for (std::uint32_t l = 0; l + 1 < i; ++l) {
        if (states[l].token == states[i - 1].token) c.collide |= std::uint64_t(1) << l;
        if ((states[i - 1].sig >> l) & 1) c.member |= std::uint64_t(1) << l;
    }
    return c;
}

/// Behavioral contract of a core-adaptive tester. `next` sees only the
/// configurations of prior samples and the label-free atom registry, never
/// element identities; it must be a pure function of its arguments so one
/// instance can drive many concurrent runs.
class CoreAdaptiveTester {
public:
    virtual ~CoreAdaptiveTester() = default;
    virtual std::string name() const = 0;
    virtual unsigned budget() const = 0;
    virtual QueryDirective next(const std::vector<Configuration>& configs, const AtomView& atoms,
                                RandomSource& rng) const = 0;
    virtual Verdict verdict(const std::vector<Configuration>& configs, RandomSource& rng) const {
        (void)configs;
        (void)rng;
        return Verdict::ACCEPT;
    }
    /// Restricted testers issue only all-fresh or all-old directives; their
    /// runs coincide under COND and WCOND.
    virtual bool restricted() const { return false; }
};

struct RunResult {
    Transcript transcript;
    Verdict verdict = Verdict::ACCEPT;
};

/// Execute q rounds of (next -> resolve -> answer -> configuration) on an
/// already-built world. Streams are derived from run_seed so that the same
/// seed replays identically, including across oracle kinds.
inline RunResult run_world(const CoreAdaptiveTester& tester, World world, OracleKind kind,
                           std::uint64_t run_seed) {
    RandomSource tester_rng = RandomSource::stream(run_seed, 1);
    RandomSource resolve_rng = RandomSource::stream(run_seed, 2);
    RandomSource oracle_rng = RandomSource::stream(run_seed, 3);
    std::vector<Configuration> configs;
    for (unsigned i = 0; i < tester.budget(); ++i) {
        AtomView view = world.atom_view();
        QueryDirective d = tester.next(configs, view, tester_rng);
        world.resolve_query(d, resolve_rng);
        world.answer(kind, oracle_rng);
        configs.push_back(world.transcript().queries.back().config);
    }
    Verdict v = tester.verdict(configs, tester_rng);
    return RunResult{world.take_transcript(), v};
}

inline RunResult run(const CoreAdaptiveTester& tester, const PairSchema& schema, OracleKind kind,
                     std::uint64_t run_seed) {
    return run_world(tester, World::deferred(schema), kind, run_seed);
}

inline RunResult run(const CoreAdaptiveTester& tester, const InstancePair& pair, OracleKind kind,
                     std::uint64_t run_seed) {
    return run_world(tester, World::eager(pair), kind, run_seed);
}

namespace zoo {

inline int alternating_which(std::size_t round) { return round % 2 == 0 ? 1 : 2; }

/// Queries one fresh element from the largest atom each round; always accepts.
class TrivialAccept final : public CoreAdaptiveTester {
public:
    explicit TrivialAccept(unsigned q) : q_(q) {}
    std::string name() const override { return "trivial-accept"; }
    unsigned budget() const override { return q_; }
    QueryDirective next(const std::vector<Configuration>& configs, const AtomView& atoms,
                        RandomSource&) const override {
        QueryDirective d;
        d.which = alternating_which(configs.size());
        const AtomInfo* best = nullptr;
        for (const auto& a : atoms.atoms)
            if (a.residue > 0 && (!best || a.residue > best->residue)) best = &a;
        if (!best) throw std::runtime_error("trivial-accept: no fresh elements left");
        d.fresh_counts.emplace_back(best->sig, 1);
        return d;
    }

private:
    unsigned q_;
};

/// Requests min(c, residue) fresh elements from every atom each round.
class UniformFresh final : public CoreAdaptiveTester {
public:
    UniformFresh(unsigned q, std::uint64_t c) : q_(q), c_(c) {}
    std::string name() const override { return "uniform-fresh"; }
    unsigned budget() const override { return q_; }
    QueryDirective next(const std::vector<Configuration>& configs, const AtomView& atoms,
                        RandomSource&) const override {
        QueryDirective d;
        d.which = alternating_which(configs.size());
        for (const auto& a : atoms.atoms)
            if (a.residue > 0) d.fresh_counts.emplace_back(a.sig, std::min(c_, a.residue));
        if (d.fresh_counts.empty())
            throw std::runtime_error("uniform-fresh: no fresh elements left");
        return d;
    }

private:
    unsigned q_;
    std::uint64_t c_;
};

/// Requests ceil(residue/2) fresh elements from every atom (or only the `top`
/// largest atoms when top > 0): keeps all cells macroscopic, which is what
/// the level-TV experiments need.
class HalvingFresh final : public CoreAdaptiveTester {
public:
    explicit HalvingFresh(unsigned q, std::size_t top = 0) : q_(q), top_(top) {}
    std::string name() const override { return "halving-fresh"; }
    unsigned budget() const override { return q_; }
    QueryDirective next(const std::vector<Configuration>& configs, const AtomView& atoms,
                        RandomSource&) const override {
        QueryDirective d;
        d.which = alternating_which(configs.size());
        std::vector<const AtomInfo*> live;
        for (const auto& a : atoms.atoms)
            if (a.residue > 0) live.push_back(&a);
        if (top_ > 0 && live.size() > top_) {
            std::sort(live.begin(), live.end(), [](const AtomInfo* x, const AtomInfo* y) {
                return x->residue != y->residue ? x->residue > y->residue : x->sig < y->sig;
            });
            live.resize(top_);
        }
        for (const AtomInfo* a : live) d.fresh_counts.emplace_back(a->sig, (a->residue + 1) / 2);
        if (d.fresh_counts.empty())
            throw std::runtime_error("halving-fresh: no fresh elements left");
        return d;
    }

private:
    unsigned q_;
    std::size_t top_;
};

/// Round 1 halves every atom; later rounds include the previous sample as an
/// old pick alongside the fresh halving, exercising the O_i ∪ {U_i} step.
class ProbeMix final : public CoreAdaptiveTester {
public:
    explicit ProbeMix(unsigned q) : q_(q) {}
    std::string name() const override { return "probe-mix"; }
    unsigned budget() const override { return q_; }
    QueryDirective next(const std::vector<Configuration>& configs, const AtomView& atoms,
                        RandomSource&) const override {
        QueryDirective d;
        d.which = alternating_which(configs.size());
        if (!configs.empty())
            d.old_picks.push_back(static_cast<std::uint32_t>(configs.size() - 1));
        for (const auto& a : atoms.atoms)
            if (a.residue > 0) d.fresh_counts.emplace_back(a.sig, (a.residue + 1) / 2);
        if (d.old_picks.empty() && d.fresh_counts.empty())
            throw std::runtime_error("probe-mix: nothing to query");
        return d;
    }

private:
    unsigned q_;
};

/// Randomized directive mix for TV experiments: coin-flips between a small
/// all-atom fresh request, an old pick plus fresh, and an all-old query.
/// Accepts iff no collision was observed.
class RandomPolicy final : public CoreAdaptiveTester {
public:
    RandomPolicy(unsigned q, std::uint64_t c) : q_(q), c_(c) {}
    std::string name() const override { return "random-policy"; }
    unsigned budget() const override { return q_; }
    QueryDirective next(const std::vector<Configuration>& configs, const AtomView& atoms,
                        RandomSource& rng) const override {
        QueryDirective d;
        d.which = 1 + static_cast<int>(rng.below(2));
        std::uint64_t mode = configs.empty() ? 0 : rng.below(3);
        if (mode == 2) {
            d.old_picks.push_back(static_cast<std::uint32_t>(rng.below(configs.size())));
            return d;
        }
        if (mode == 1)
            d.old_picks.push_back(static_cast<std::uint32_t>(rng.below(configs.size())));
        for (const auto& a : atoms.atoms)
            if (a.residue > 0) d.fresh_counts.emplace_back(a.sig, std::min(c_, a.residue));
        if (d.old_picks.empty() && d.fresh_counts.empty())
            throw std::runtime_error("random-policy: nothing to query");
        return d;
    }
    Verdict verdict(const std::vector<Configuration>& configs, RandomSource&) const override {
        for (const auto& c : configs)
            if (c.collide != 0) return Verdict::REJECT;
        return Verdict::ACCEPT;
    }

private:
    unsigned q_;
    std::uint64_t c_;
};

/// Restricted tester: every query is all-fresh.
class RestrictedFresh final : public CoreAdaptiveTester {
public:
    explicit RestrictedFresh(unsigned q) : q_(q) {}
    std::string name() const override { return "restricted-fresh"; }
    unsigned budget() const override { return q_; }
    bool restricted() const override { return true; }
    QueryDirective next(const std::vector<Configuration>& configs, const AtomView&,
                        RandomSource&) const override {
        return QueryDirective::fresh_all(alternating_which(configs.size()));
    }

private:
    unsigned q_;
};

/// Restricted tester alternating all-fresh and all-old (all prior samples).
class RestrictedAlternate final : public CoreAdaptiveTester {
public:
    explicit RestrictedAlternate(unsigned q) : q_(q) {}
    std::string name() const override { return "restricted-alternate"; }
    unsigned budget() const override { return q_; }
    bool restricted() const override { return true; }
    QueryDirective next(const std::vector<Configuration>& configs, const AtomView&,
                        RandomSource&) const override {
        if (configs.size() % 2 == 0) return QueryDirective::fresh_all(1);
        QueryDirective d;
        d.which = 2;
        for (std::uint32_t i = 0; i < configs.size(); ++i) d.old_picks.push_back(i);
        return d;
    }

private:
    unsigned q_;
};

/// Restricted tester: one all-fresh query, then repeated all-old probes of
/// the first sample.
class RestrictedFirst final : public CoreAdaptiveTester {
public:
    explicit RestrictedFirst(unsigned q) : q_(q) {}
    std::string name() const override { return "restricted-first"; }
    unsigned budget() const override { return q_; }
    bool restricted() const override { return true; }
    QueryDirective next(const std::vector<Configuration>& configs, const AtomView&,
                        RandomSource&) const override {
        if (configs.empty()) return QueryDirective::fresh_all(1);
        QueryDirective d;
        d.which = alternating_which(configs.size());
        d.old_picks.push_back(0);
        return d;
    }

private:
    unsigned q_;
};

} // namespace zoo

/// Parse "name" or "name:key=value,key=value" tester specs.
struct TesterSpec {
    std::string name;
    std::unordered_map<std::string, std::string> kv;

    static TesterSpec parse(const std::string& s) {
        TesterSpec spec;
        auto colon = s.find(':');
        spec.name = s.substr(0, colon);
        if (colon != std::string::npos) {
            std::stringstream ss(s.substr(colon + 1));
            std::string item;
            while (std::getline(ss, item, ',')) {
                auto eq = item.find('=');
                if (eq == std::string::npos)
                    throw std::invalid_argument("tester spec: expected key=value, got '" + item + "'");
                spec.kv[item.substr(0, eq)] = item.substr(eq + 1);
            }
        }
        return spec;
    }

    std::uint64_t get_u64(const std::string& key, std::uint64_t def) const {
        auto it = kv.find(key);
        if (it == kv.end()) return def;
        return std::stoull(it->second);
    }
};

inline std::vector<std::string> zoo_names() {
    return {"trivial-accept", "uniform-fresh",    "halving-fresh",        "probe-mix",
            "random-policy",  "restricted-fresh", "restricted-alternate", "restricted-first"};
}

/// Build a zoo tester from a "name[:k=v,...]" spec. Common keys: q (budget),
/// c (per-atom fresh count).
inline std::unique_ptr<CoreAdaptiveTester> make_tester(const std::string& spec_str) {
    TesterSpec spec = TesterSpec::parse(spec_str);
    unsigned q = static_cast<unsigned>(spec.get_u64("q", 3));
    std::uint64_t c = spec.get_u64("c", 4);
    if (q < 1) throw std::invalid_argument("make_tester: budget q must be >= 1");
    if (spec.name == "trivial-accept") return std::make_unique<zoo::TrivialAccept>(q);
    if (spec.name == "uniform-fresh") return std::make_unique<zoo::UniformFresh>(q, c);
    if (spec.name == "halving-fresh")
        return std::make_unique<zoo::HalvingFresh>(q, std::size_t(spec.get_u64("top", 0)));
    if (spec.name == "probe-mix") return std::make_unique<zoo::ProbeMix>(q);
    if (spec.name == "random-policy") return std::make_unique<zoo::RandomPolicy>(q, c);
    if (spec.name == "restricted-fresh") return std::make_unique<zoo::RestrictedFresh>(q);
    if (spec.name == "restricted-alternate") return std::make_unique<zoo::RestrictedAlternate>(q);
    if (spec.name == "restricted-first") return std::make_unique<zoo::RestrictedFirst>(q);
    throw std::invalid_argument("make_tester: unknown tester '" + spec.name + "'");
}

} // namespace condlab
