#pragma once

#include "condlab/hypergeometric.hpp"
#include "condlab/instances.hpp"
#include "condlab/rational.hpp"
#include "condlab/rng.hpp"

#include <algorithm>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace condlab {

enum class OracleKind { COND, WCOND };

inline const char* oracle_name(OracleKind k) { return k == OracleKind::COND ? "cond" : "wcond"; }

/// One uniform-mass cell of the pair layout. Slot 0 is the off-support
/// remainder of [n] (zero mass under both distributions).
struct Slot {
    std::uint64_t size = 0;
    Weight w1 = 0; // per-element mass numerator over PairSchema::denom
    Weight w2 = 0;
    int bucket = 0; // 0 off-support, else 1..tau
    int half = -1;  // -1 whole bucket, 0 heavy, 1 light

    Weight w(int which) const { return which == 1 ? w1 : w2; }
};

/// Integer-weight view of an instance pair: all element masses are integer
/// numerators over one common denominator, so oracle arithmetic is exact.
struct PairSchema {
    std::uint64_t n = 0;
    EquivParams params;
    Label label = Label::YES;
    std::vector<Slot> slots;
    Int denom = 1;

    static PairSchema from(const EquivParams& p, Label label) {
        PairSchema s;
        s.n = p.n;
        s.params = p;
        s.label = label;
        // common denominator 2 * tau * b * rho^tau
        s.denom = Int(2) * p.tau * p.b * ipow(Int(p.rho), p.tau);
        if (s.denom > (Int(1) << 110))
            throw std::invalid_argument("PairSchema: parameters overflow weight arithmetic");
        s.slots.push_back(Slot{p.n - p.m, 0, 0, 0, -1});
        for (unsigned j = 1; j <= p.tau; ++j) {
            std::uint64_t sz = p.bucket_size(j);
            Weight base = static_cast<Weight>(upow(p.rho, p.tau - j)); // denom/(2 tau b rho^j)
            if (label == Label::YES) {
                s.slots.push_back(Slot{sz, 2 * base, 2 * base, int(j), -1});
            } else {
                s.slots.push_back(Slot{sz / 2, 2 * base, 3 * base, int(j), 0});
                s.slots.push_back(Slot{sz / 2, 2 * base, 1 * base, int(j), 1});
            }
        }
        return s;
    }

    Rational unit_mass(int which, std::uint32_t slot) const {
        return Rational(weight_to_int(slots[slot].w(which)), denom);
    }
};

/// The tester's pre-resolution query specification: which distribution to
/// query, which prior samples to include, and how many fresh elements to draw
/// from each atom. `all_fresh` requests the full residue of every atom.
struct QueryDirective {
    int which = 1;
    bool all_fresh = false;
    std::vector<std::uint32_t> old_picks;                         // 0-based prior sample indices
    std::vector<std::pair<std::uint64_t, std::uint64_t>> fresh_counts; // (atom signature, count)

    static QueryDirective fresh_all(int which) {
        QueryDirective d;
        d.which = which;
        d.all_fresh = true;
        return d;
    }
};

/// Tester-visible atom registry entry. `size` counts every element with this
/// signature, `residue` only the not-yet-seen ones available for fresh draws.
struct AtomInfo {
    std::uint64_t sig = 0;
    std::uint64_t size = 0;
    std::uint64_t residue = 0;
};

struct AtomView {
    std::uint64_t n = 0;
    std::uint32_t queries_done = 0;
    std::vector<AtomInfo> atoms; // sorted by sig
};

/// Label-invariant record of one sample: for each earlier step, whether this
/// sample equals that step's sample and whether it lies in that query set.
struct Configuration {
    std::uint32_t arity = 0; // number of earlier steps, i.e. i-1
    std::uint64_t collide = 0;
    std::uint64_t member = 0;

    bool operator==(const Configuration&) const = default;
};

/// One chunk of the resolved fresh set U_i: |U_i ∩ atom ∩ slot| elements.
struct CellDraw {
    std::uint64_t parent_sig = 0;
    std::uint32_t slot = 0;
    std::uint64_t count = 0;
};

struct SampleRec {
    std::uint64_t token = 0; // element id (eager) or synthetic id (deferred)
    std::uint32_t slot = 0;
};

/// Sealed per-query record. Everything below `config` is ground truth hidden
/// from testers and read only by analysis code.
struct QueryRecord {
    QueryDirective directive;
    std::vector<std::uint32_t> old_indices; // deduplicated by token
    std::vector<std::uint64_t> old_tokens;
    std::vector<CellDraw> cells;
    std::vector<std::vector<std::uint64_t>> cell_members; // eager mode: resolved U_i ids per cell

    Weight u_w[2] = {0, 0}; // D_k(U_i) numerators
    Weight a_w[2] = {0, 0}; // D_k(A_i) numerators
    std::uint64_t u_size = 0;
    std::uint64_t a_size = 0;

    int step1 = -1;              // -1: the set U_i was picked; else index into old_indices
    std::uint64_t picked_sig = 0;
    std::uint32_t picked_slot = 0;
    bool fallback_uniform = false;

    SampleRec sample;
    Configuration config;
    std::vector<std::pair<std::uint64_t, std::uint64_t>> atoms_after; // sig -> size
    std::vector<CellDraw> pools_after; // (sig, slot, avail) snapshot, samples excluded

    struct SampleState {
        std::uint64_t token = 0;
        std::uint32_t slot = 0;
        std::uint64_t sig = 0;
    };
    std::vector<SampleState> samples_after; // one entry per sample index so far
};

/// Full record of a run: query count, directives, resolved sets, samples and
/// configurations, plus the sealed analysis data.
struct Transcript {
    OracleKind kind = OracleKind::COND;
    std::uint64_t n = 0;
    EquivParams params;
    Label label = Label::YES;
    Int denom = 1;
    std::vector<QueryRecord> queries;

    std::uint32_t query_count() const { return static_cast<std::uint32_t>(queries.size()); }

    std::vector<Configuration> configurations() const {
        std::vector<Configuration> cs;
        cs.reserve(queries.size());
        for (const auto& q : queries) cs.push_back(q.config);
        return cs;
    }
};

/// Mutable state of one run: the atom partition over [n] held as pools of
/// exchangeable unrealized elements keyed by (signature, slot), plus the
/// materialized samples. In deferred mode pool members are realized lazily;
/// in eager mode pools carry explicit element ids (used by the small-n
/// equivalence tests between the two modes).
class World {
public:
    static World deferred(PairSchema schema) { return World(std::move(schema), nullptr); }

    static World eager(const InstancePair& pair) {
        PairSchema schema = PairSchema::from(pair.params(), pair.label());
        if (schema.n > (std::uint64_t(1) << 22))
            throw std::invalid_argument("World::eager: n too large to materialize");
        World w(std::move(schema), nullptr);
        w.eager_ = true;
        // slot -> explicit ids
        w.contents_.assign(w.schema_.slots.size(), {});
        const auto& sup = *pair.d1().support();
        for (std::uint64_t pos = 0; pos < sup.m(); ++pos)
            w.contents_[w.slot_of_pair_position(pair, pos)].push_back(sup.element_at(pos));
        std::vector<bool> in_support(w.schema_.n, false);
        for (ElementId x : sup.elements()) in_support[x] = true;
        for (std::uint64_t x = 0; x < w.schema_.n; ++x)
            if (!in_support[x]) w.contents_[0].push_back(x);
        return w;
    }

    const PairSchema& schema() const { return schema_; }

    AtomView atom_view() const {
        AtomView v;
        v.n = schema_.n;
        v.queries_done = static_cast<std::uint32_t>(transcript_.queries.size());
        std::map<std::uint64_t, AtomInfo> acc;
        for (const auto& p : pools_) {
            if (p.avail == 0) continue;
            auto& a = acc[p.sig];
            a.sig = p.sig;
            a.size += p.avail;
            a.residue += p.avail;
        }
        for (const auto& [token, sig] : token_sig_) {
            auto& a = acc[sig];
            a.sig = sig;
            a.size += 1;
        }
        v.atoms.reserve(acc.size());
        for (auto& [sig, a] : acc) v.atoms.push_back(a);
        return v;
    }

    /// Resolve a directive into a concrete query set: O_i from prior samples
    /// (deduplicated), U_i as a uniform fresh set meeting the per-atom counts.
    void resolve_query(const QueryDirective& d, RandomSource& rng) {
        if (pending_)
            throw std::logic_error("resolve_query: previous query not yet answered");
        if (transcript_.queries.size() >= 62)
            throw std::invalid_argument("resolve_query: query budget exceeds 62");
        if (d.which != 1 && d.which != 2)
            throw std::invalid_argument("resolve_query: which must be 1 or 2");

        QueryRecord rec;
        rec.directive = d;

        std::vector<std::uint64_t> seen_tokens;
        for (std::uint32_t idx : d.old_picks) {
            if (idx >= samples_.size())
                throw std::invalid_argument("resolve_query: old pick index out of range");
            std::uint64_t tok = samples_[idx].token;
            if (std::find(seen_tokens.begin(), seen_tokens.end(), tok) == seen_tokens.end()) {
                seen_tokens.push_back(tok);
                rec.old_indices.push_back(idx);
                rec.old_tokens.push_back(tok);
            }
        }

        std::vector<std::pair<std::uint64_t, std::uint64_t>> counts = d.fresh_counts;
        if (d.all_fresh) {
            counts.clear();
            std::map<std::uint64_t, std::uint64_t> residues;
            for (const auto& p : pools_)
                if (p.avail > 0) residues[p.sig] += p.avail;
            for (auto& [sig, r] : residues) counts.emplace_back(sig, r);
        }

        for (auto& [sig, count] : counts) {
            if (count == 0) continue;
            std::uint64_t residue = 0;
            std::vector<std::size_t> members;
            for (std::size_t pi = 0; pi < pools_.size(); ++pi) {
                if (pools_[pi].sig == sig && pools_[pi].avail > 0) {
                    residue += pools_[pi].avail;
                    members.push_back(pi);
                }
            }
            if (count > residue)
                throw std::invalid_argument("resolve_query: fresh count exceeds atom residue");
            // uniform subset of the atom: multivariate hypergeometric split
            // across its slot pools, then uniform within each pool
            std::uint64_t remaining = count;
            std::uint64_t pool_left = residue;
            for (std::size_t t = 0; t < members.size() && remaining > 0; ++t) {
                Pool& p = pools_[members[t]];
                std::uint64_t take;
                if (remaining == pool_left) {
                    take = p.avail; // every remaining pool is fully taken
                } else if (t + 1 == members.size()) {
                    take = remaining;
                } else {
                    take = sample_hypergeometric_fast(
                        HypergeomParams{remaining, p.avail, pool_left}, rng);
                }
                pool_left -= p.avail;
                if (take > 0) {
                    rec.cells.push_back(CellDraw{sig, p.pool_slot, take});
                    if (eager_) {
                        draw_explicit_chunk(p, take, rng);
                        rec.cell_members.push_back(staged_chunks_.back());
                    }
                    p.avail -= take;
                    remaining -= take;
                }
            }
        }

        if (rec.old_indices.empty() && rec.cells.empty())
            throw std::invalid_argument("resolve_query: empty conditioning set");

        for (const auto& c : rec.cells) {
            rec.u_size += c.count;
            rec.u_w[0] += Weight(c.count) * schema_.slots[c.slot].w1;
            rec.u_w[1] += Weight(c.count) * schema_.slots[c.slot].w2;
        }
        rec.a_size = rec.u_size + rec.old_indices.size();
        rec.a_w[0] = rec.u_w[0];
        rec.a_w[1] = rec.u_w[1];
        for (std::uint32_t idx : rec.old_indices) {
            rec.a_w[0] += schema_.slots[samples_[idx].slot].w1;
            rec.a_w[1] += schema_.slots[samples_[idx].slot].w2;
        }

        pending_ = true;
        pending_rec_ = std::move(rec);
    }

    /// Answer the pending query through the 3-step decomposition. COND picks
    /// the atom of U_i with probability D_k(V)/D_k(U_i); WCOND picks it with
    /// probability |V|/|U_i|. Everything else is identical, including the
    /// uniform fallback over A_i when D_k(A_i) = 0.
    std::uint64_t answer(OracleKind kind, RandomSource& rng) {
        if (!pending_) throw std::logic_error("answer: no resolved query pending");
        transcript_.kind = kind;
        QueryRecord& rec = pending_rec_;
        int k = rec.directive.which;
        Weight wa = rec.a_w[k - 1];

        std::uint64_t sample_token = 0;
        std::uint32_t sample_slot = 0;

        if (wa == 0) {
            rec.fallback_uniform = true;
            // D_k(A_i) = 0: uniform over the set A_i
            unsigned __int128 r = rng.below128(rec.a_size);
            if (r < rec.old_indices.size()) {
                rec.step1 = static_cast<int>(r);
            } else {
                r -= rec.old_indices.size();
                rec.step1 = -1;
                std::size_t ci = 0;
                while (r >= rec.cells[ci].count) {
                    r -= rec.cells[ci].count;
                    ++ci;
                }
                rec.picked_sig = rec.cells[ci].parent_sig;
                rec.picked_slot = rec.cells[ci].slot;
                sample_token = claim_from_cell(ci, rng);
                sample_slot = rec.cells[ci].slot;
            }
        } else {
            // step 1: element of O_i vs the set U_i, by mass
            int pick = -2;
            if (rec.old_indices.empty()) {
                pick = -1; // U_i, forced
            } else if (rec.cells.empty() && rec.old_indices.size() == 1) {
                pick = 0; // single old sample, forced
            } else {
                unsigned __int128 r = rng.below128(wa);
                for (std::size_t t = 0; t < rec.old_indices.size() && pick == -2; ++t) {
                    Weight w = schema_.slots[samples_[rec.old_indices[t]].slot].w(k);
                    if (r < w)
                        pick = static_cast<int>(t);
                    else
                        r -= w;
                }
                if (pick == -2) pick = -1;
            }
            rec.step1 = pick;
            if (pick == -1) {
                // step 2: atom of U_i, then step 3: within-atom conditional sample
                auto groups = cell_groups(rec);
                std::size_t g;
                if (kind == OracleKind::COND) {
                    g = pick_group(groups, rec, k, true, rng);
                } else {
                    g = pick_group(groups, rec, k, false, rng);
                }
                rec.picked_sig = groups[g].first;
                std::size_t ci = pick_cell_in_group(groups[g].second, rec, k, rng);
                rec.picked_slot = rec.cells[ci].slot;
                sample_token = claim_from_cell(ci, rng);
                sample_slot = rec.cells[ci].slot;
            }
        }

        if (rec.step1 >= 0) {
            std::uint32_t idx = rec.old_indices[rec.step1];
            sample_token = samples_[idx].token;
            sample_slot = samples_[idx].slot;
        }

        finish_query(rec, sample_token, sample_slot);
        std::uint64_t tok = sample_token;
        transcript_.queries.push_back(std::move(pending_rec_));
        pending_rec_ = QueryRecord{};
        pending_ = false;
        return tok;
    }

    const Transcript& transcript() const { return transcript_; }
    Transcript take_transcript() { return std::move(transcript_); }
    std::size_t samples_seen() const { return samples_.size(); }

private:
    struct Pool {
        std::uint64_t sig = 0;
        std::uint32_t pool_slot = 0;
        std::uint64_t avail = 0;
        std::size_t content = SIZE_MAX; // eager: index into contents_ chunks
    };

    World(PairSchema schema, std::nullptr_t) : schema_(std::move(schema)) {
        transcript_.n = schema_.n;
        transcript_.params = schema_.params;
        transcript_.label = schema_.label;
        transcript_.denom = schema_.denom;
        for (std::uint32_t s = 0; s < schema_.slots.size(); ++s)
            if (schema_.slots[s].size > 0)
                pools_.push_back(Pool{0, s, schema_.slots[s].size, s});
    }

    std::uint32_t slot_of_pair_position(const InstancePair& pair, std::uint64_t pos) const {
        unsigned j = pair.bucket_of_position(pos);
        if (pair.label() == Label::YES) return j; // slots: [off, B1..Btau]
        return 1 + 2 * (j - 1) + (pair.half_of_position(pos) == 0 ? 0 : 1);
    }

    /// Eager mode: move `take` uniform elements of the pool into a staged
    /// chunk list (consumed in pool order by claim_from_cell).
    void draw_explicit_chunk(Pool& p, std::uint64_t take, RandomSource& rng) {
        auto& pool_items = contents_[p.content];
        std::vector<std::uint64_t> chunk;
        chunk.reserve(take);
        for (std::uint64_t t = 0; t < take; ++t) {
            std::size_t at = pool_items.size() - 1 - rng.below(pool_items.size());
            std::swap(pool_items[at], pool_items.back());
            chunk.push_back(pool_items.back());
            pool_items.pop_back();
        }
        staged_chunks_.push_back(std::move(chunk));
    }

    std::vector<std::pair<std::uint64_t, std::vector<std::size_t>>>
    cell_groups(const QueryRecord& rec) const {
        std::vector<std::pair<std::uint64_t, std::vector<std::size_t>>> gs;
        for (std::size_t ci = 0; ci < rec.cells.size(); ++ci) {
            auto it = std::find_if(gs.begin(), gs.end(),
                                   [&](const auto& g) { return g.first == rec.cells[ci].parent_sig; });
            if (it == gs.end())
                gs.push_back({rec.cells[ci].parent_sig, {ci}});
            else
                it->second.push_back(ci);
        }
        return gs;
    }

    std::size_t pick_group(const std::vector<std::pair<std::uint64_t, std::vector<std::size_t>>>& gs,
                           const QueryRecord& rec, int k, bool by_mass, RandomSource& rng) {
        if (gs.size() == 1) return 0;
        std::vector<Weight> w(gs.size(), 0);
        Weight total = 0;
        for (std::size_t g = 0; g < gs.size(); ++g) {
            for (std::size_t ci : gs[g].second) {
                const CellDraw& c = rec.cells[ci];
                w[g] += by_mass ? Weight(c.count) * schema_.slots[c.slot].w(k) : Weight(c.count);
            }
            total += w[g];
        }
        if (total == 0)
            throw std::logic_error("pick_group: U_i picked with zero conditional mass");
        unsigned __int128 r = rng.below128(total);
        for (std::size_t g = 0; g < gs.size(); ++g) {
            if (r < w[g]) return g;
            r -= w[g];
        }
        throw std::logic_error("pick_group: fell off the end");
    }

    /// Within the picked atom, sample conditionally on D_k: slot chunks by
    /// mass, uniform inside a chunk (chunks are uniform-mass). Zero-mass atom
    /// falls back to uniform by size, matching D|_V for D(V) = 0.
    std::size_t pick_cell_in_group(const std::vector<std::size_t>& cells, const QueryRecord& rec,
                                   int k, RandomSource& rng) {
        if (cells.size() == 1) return cells[0];
        Weight total = 0;
        for (std::size_t ci : cells)
            total += Weight(rec.cells[ci].count) * schema_.slots[rec.cells[ci].slot].w(k);
        bool by_mass = total > 0;
        if (!by_mass)
            for (std::size_t ci : cells) total += rec.cells[ci].count;
        unsigned __int128 r = rng.below128(total);
        for (std::size_t ci : cells) {
            Weight w = by_mass ? Weight(rec.cells[ci].count) * schema_.slots[rec.cells[ci].slot].w(k)
                               : Weight(rec.cells[ci].count);
            if (r < w) return ci;
            r -= w;
        }
        throw std::logic_error("pick_cell_in_group: fell off the end");
    }

    /// Materialize one uniform element of the given U_i cell.
    std::uint64_t claim_from_cell(std::size_t ci, RandomSource& rng) {
        claimed_cell_ = ci;
        if (!eager_) return (std::uint64_t(1) << 63) | next_token_++;
        // staged chunks are appended in cell order during resolve
        auto& chunk = staged_chunks_[ci];
        std::size_t at = chunk.size() - 1 - rng.below(chunk.size());
        std::swap(chunk[at], chunk.back());
        std::uint64_t tok = chunk.back();
        chunk.pop_back();
        return tok;
    }

    void finish_query(QueryRecord& rec, std::uint64_t token, std::uint32_t slot) {
        std::uint32_t i = static_cast<std::uint32_t>(transcript_.queries.size()); // 0-based
        std::uint64_t bit = std::uint64_t(1) << i;

        // membership updates: everything inside A_i gains bit i
        for (std::uint32_t idx : rec.old_indices) token_sig_[samples_[idx].token] |= bit;
        bool fresh = rec.step1 == -1 && !token_sig_.count(token);
        std::uint64_t cell_sig_of_sample = rec.picked_sig;
        if (fresh) token_sig_[token] = cell_sig_of_sample | bit;

        // remaining cell members become pools with the extended signature
        for (std::size_t ci = 0; ci < rec.cells.size(); ++ci) {
            const CellDraw& c = rec.cells[ci];
            std::uint64_t left = c.count - (claimed_cell_ == ci && rec.step1 == -1 ? 1 : 0);
            if (left > 0) {
                Pool np;
                np.sig = c.parent_sig | bit;
                np.pool_slot = c.slot;
                np.avail = left;
                if (eager_) {
                    np.content = contents_.size();
                    contents_.push_back(std::move(staged_chunks_[ci]));
                }
                pools_.push_back(np);
            }
        }
        staged_chunks_.clear();
        claimed_cell_ = SIZE_MAX;
        pools_.erase(std::remove_if(pools_.begin(), pools_.end(),
                                    [](const Pool& p) { return p.avail == 0; }),
                     pools_.end());

        rec.sample = SampleRec{token, slot};

        // configuration bits against steps 1..i
        Configuration cfg;
        cfg.arity = i;
        std::uint64_t sig = token_sig_.at(token);
        for (std::uint32_t l = 0; l < i; ++l) {
            if (samples_[l].token == token) cfg.collide |= std::uint64_t(1) << l;
            if ((sig >> l) & 1) cfg.member |= std::uint64_t(1) << l;
        }
        rec.config = cfg;

        samples_.push_back(SampleRec{token, slot});

        // registry snapshot (sizes include materialized samples)
        std::map<std::uint64_t, std::uint64_t> sizes;
        for (const auto& p : pools_) sizes[p.sig] += p.avail;
        std::map<std::uint64_t, std::vector<std::uint64_t>> toks;
        for (const auto& [t, s] : token_sig_) toks[s].push_back(t);
        for (auto& [s, ts] : toks) sizes[s] += ts.size();
        rec.atoms_after.assign(sizes.begin(), sizes.end());

        rec.pools_after.reserve(pools_.size());
        for (const auto& p : pools_)
            rec.pools_after.push_back(CellDraw{p.sig, p.pool_slot, p.avail});
        std::sort(rec.pools_after.begin(), rec.pools_after.end(),
                  [](const CellDraw& a, const CellDraw& b) {
                      return a.parent_sig != b.parent_sig ? a.parent_sig < b.parent_sig
                                                          : a.slot < b.slot;
                  });

        rec.samples_after.reserve(samples_.size());
        for (const auto& s : samples_)
            rec.samples_after.push_back({s.token, s.slot, token_sig_.at(s.token)});
    }

    PairSchema schema_;
    bool eager_ = false;
    std::vector<Pool> pools_;
    std::vector<std::vector<std::uint64_t>> contents_; // eager slot/chunk contents
    std::vector<std::vector<std::uint64_t>> staged_chunks_;
    std::size_t claimed_cell_ = SIZE_MAX;
    std::vector<SampleRec> samples_;
    std::unordered_map<std::uint64_t, std::uint64_t> token_sig_;
    std::uint64_t next_token_ = 1;
    bool pending_ = false;
    QueryRecord pending_rec_;
    Transcript transcript_;
};

inline std::uint64_t answer_cond(World& w, RandomSource& rng) {
    return w.answer(OracleKind::COND, rng);
}

inline std::uint64_t answer_wcond(World& w, RandomSource& rng) {
    return w.answer(OracleKind::WCOND, rng);
}

} // namespace condlab
