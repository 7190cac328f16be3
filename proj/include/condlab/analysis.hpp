#pragma once

#include "condlab/instances.hpp"
#include "condlab/oracles.hpp"
#include "condlab/testers.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <set>
#include <stdexcept>
#include <thread>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace condlab {

/// Deterministic trial fan-out: trials are independent and results land in
/// per-trial slots, so the merged outcome is independent of the worker count.
template <typename Fn>
void parallel_trials(std::uint64_t trials, unsigned jobs, Fn&& fn) {
    jobs = std::max(1u, jobs);
    if (jobs == 1 || trials < 2 * jobs) {
        for (std::uint64_t t = 0; t < trials; ++t) fn(t);
        return;
    }
    std::vector<std::thread> workers;
    std::atomic<std::uint64_t> next{0};
    for (unsigned w = 0; w < jobs; ++w) {
        workers.emplace_back([&] {
            for (;;) {
                std::uint64_t t = next.fetch_add(1);
                if (t >= trials) return;
                fn(t);
            }
        });
    }
    for (auto& th : workers) th.join();
}

/// Band parameters for the good-node and concentration checks. Paper mode is
/// only meaningful asymptotically; lab mode takes the parameters directly and
/// the verification suites quantify every bound in terms of these values.
struct AnalysisParams {
    Rational gamma{8};
    Rational alpha{4};
    std::int64_t phi = 2;
    Rational beta{8};
    Rational delta{1, 100};
    bool draft_condition3 = false; // earlier-draft form of condition 3 (no b rho^j scaling)

    static AnalysisParams lab(Rational gamma, Rational alpha, std::int64_t phi, Rational beta) {
        AnalysisParams ap;
        ap.gamma = std::move(gamma);
        ap.alpha = std::move(alpha);
        ap.phi = phi;
        ap.beta = std::move(beta);
        if (ap.gamma <= 2 || ap.alpha < 1 || ap.phi < 1 || ap.beta <= 1)
            throw std::invalid_argument(
                "AnalysisParams: need gamma > 2, alpha >= 1, phi >= 1, beta > 1");
        return ap;
    }

    /// Integer roundings documented here: with L = floor(log2 n) and
    /// LL = floor(log2 L), gamma = LL^9, alpha = L^(LL^2), phi = LL^20,
    /// beta = 2^ceil(sqrt(L)/4).
    static AnalysisParams paper(std::uint64_t n) {
        unsigned L = floor_log2_u64(n);
        if (L < 4) throw std::invalid_argument("AnalysisParams::paper: n too small");
        unsigned LL = floor_log2_u64(L);
        AnalysisParams ap;
        ap.gamma = Rational(ipow(Int(LL), 9));
        ap.alpha = Rational(ipow(Int(L), LL * LL));
        ap.phi = ipow(Int(LL), 20).convert_to<std::int64_t>();
        unsigned bexp = (ceil_sqrt_u(L) + 3) / 4;
        ap.beta = Rational(Int(1) << bexp);
        return ap;
    }
};

/// Instance shape as seen by the node-classification rules (support size m is
/// irrelevant there, so kappa sweeps need not satisfy m <= n).
struct NodeShape {
    std::uint64_t n = 0;
    std::uint64_t b = 1;
    std::uint64_t rho = 2;
    unsigned tau = 1;

    static NodeShape of(const EquivParams& p) { return NodeShape{p.n, p.b, p.rho, p.tau}; }
};

/// phi_A: the smallest Delta in {0..tau-1} with |A| b rho^(tau-Delta) / n < 1/alpha,
/// or tau when no such Delta exists. Exact rational comparison.
inline unsigned phi_of(std::uint64_t atom_size, const NodeShape& p, const Rational& alpha) {
    Int lhs_base = Int(atom_size) * p.b * numerator(alpha);
    Int rhs = Int(p.n) * denominator(alpha);
    for (unsigned delta = 0; delta < p.tau; ++delta) {
        if (lhs_base * ipow(Int(p.rho), p.tau - delta) < rhs) return delta;
    }
    return p.tau;
}

struct NodeClass {
    bool good = true;
    bool violated_cond1 = false;
    bool violated_cond2 = false;
    bool violated_cond3 = false;
};

/// The three good-node conditions, all as exact rational comparisons:
///  1. every atom has |A| b rho^j / n >= alpha or <= 1/alpha for every bucket j;
///  2. every atom is large (|A| b rho^(tau-phi) / n >= alpha) or small
///     (|A| b rho^tau / n <= 1/alpha);
///  3. every recorded fresh set U has sum phi_V |V| / (tau n) outside
///     (1/(gamma tau b rho^j), gamma/(tau b rho^j)) for every j.
/// `u_decomps` lists, per query, the sizes of the cells of At(U_i).
inline NodeClass classify_node(const std::vector<std::uint64_t>& atom_sizes,
                               const std::vector<std::vector<std::uint64_t>>& u_decomps,
                               const NodeShape& p, const AnalysisParams& ap) {
    NodeClass nc;
    const Int an = numerator(ap.alpha), ad = denominator(ap.alpha);
    const Int gn = numerator(ap.gamma), gd = denominator(ap.gamma);
    const Int n = p.n;

    for (std::uint64_t sz : atom_sizes) {
        if (sz == 0) continue;
        Int base = Int(sz) * p.b;
        for (unsigned j = 1; j <= p.tau && !nc.violated_cond1; ++j) {
            Int v = base * ipow(Int(p.rho), j);
            bool big = v * ad >= n * an;   // ratio >= alpha
            bool small = v * an <= n * ad; // ratio <= 1/alpha
            if (!big && !small) nc.violated_cond1 = true;
        }
        // condition 2: rho^(tau-phi) may carry a negative exponent
        Rational r_large = Rational(base, n);
        std::int64_t e = std::int64_t(p.tau) - ap.phi;
        if (e >= 0)
            r_large *= Rational(ipow(Int(p.rho), unsigned(e)));
        else
            r_large /= Rational(ipow(Int(p.rho), unsigned(-e)));
        bool large = r_large >= ap.alpha;
        bool small = Rational(base * ipow(Int(p.rho), p.tau), n) <= Rational(1) / ap.alpha;
        if (!large && !small) nc.violated_cond2 = true;
    }

    for (const auto& cells : u_decomps) {
        Int s = 0;
        for (std::uint64_t csz : cells) s += Int(phi_of(csz, p, ap.alpha)) * csz;
        if (ap.draft_condition3) {
            // earlier-draft form: S/(tau n) >= gamma or <= 1/gamma
            bool big = s * gd >= Int(p.tau) * n * gn;
            bool small = s * gn <= Int(p.tau) * n * gd;
            if (!big && !small) nc.violated_cond3 = true;
            continue;
        }
        for (unsigned j = 1; j <= p.tau && !nc.violated_cond3; ++j) {
            // S/(tau n) vs gamma/(tau b rho^j): tau cancels across both sides
            Int v = s * p.b * ipow(Int(p.rho), j);
            bool big = v * gd >= n * gn;
            bool small = v * gn <= n * gd;
            if (!big && !small) nc.violated_cond3 = true;
        }
    }

    nc.good = !(nc.violated_cond1 || nc.violated_cond2 || nc.violated_cond3);
    return nc;
}

struct BadKappaCount {
    std::uint64_t bad = 0;
    std::uint64_t kappas_checked = 0;
    double analytic_bound = 0;
};

/// Enumerate kappa in {0..floor(log2 n / 2)} and count values for which the
/// node shape is bad with b = 2^kappa, next to the analytic union bound
/// tau 2^(q+1) lg a + 2^q (2 lg a + phi lg rho) + 2 q tau lg gamma.
inline BadKappaCount count_bad_kappas(const std::vector<std::uint64_t>& atom_sizes,
                                      const std::vector<std::vector<std::uint64_t>>& u_decomps,
                                      std::uint64_t n, std::uint64_t rho, unsigned tau, unsigned q,
                                      const AnalysisParams& ap) {
    BadKappaCount r;
    unsigned kmax = floor_log2_u64(n) / 2;
    for (unsigned kappa = 0; kappa <= kmax; ++kappa) {
        NodeShape shape{n, std::uint64_t(1) << kappa, rho, tau};
        if (!classify_node(atom_sizes, u_decomps, shape, ap).good) ++r.bad;
        ++r.kappas_checked;
    }
    double la = std::log2(rational_double(ap.alpha));
    double lr = std::log2(double(rho));
    double lg = std::log2(rational_double(ap.gamma));
    double pow2q = std::pow(2.0, double(q));
    r.analytic_bound = tau * 2.0 * pow2q * la + pow2q * (2.0 * la + double(ap.phi) * lr) +
                       2.0 * double(q) * tau * lg;
    return r;
}

/// A realized atom: size, exact per-bucket intersection counts (index 0 =
/// off-support), and exact masses under both distributions.
struct AtomRealization {
    std::uint64_t sig = 0;
    std::uint64_t size = 0;
    std::vector<std::uint64_t> bucket_counts;
    Rational mass1, mass2;
};

/// Rebuild the realized atoms after query `depth_idx` from sealed run data.
inline std::vector<AtomRealization> realized_atoms(const Transcript& t, const PairSchema& schema,
                                                   std::size_t depth_idx) {
    const QueryRecord& rec = t.queries.at(depth_idx);
    std::map<std::uint64_t, AtomRealization> acc;
    auto add = [&](std::uint64_t sig, std::uint32_t slot, std::uint64_t count) {
        auto& a = acc[sig];
        a.sig = sig;
        if (a.bucket_counts.empty()) a.bucket_counts.assign(schema.params.tau + 1, 0);
        a.size += count;
        a.bucket_counts[std::size_t(schema.slots[slot].bucket)] += count;
        a.mass1 += Rational(Int(count)) * schema.unit_mass(1, slot);
        a.mass2 += Rational(Int(count)) * schema.unit_mass(2, slot);
    };
    for (const auto& p : rec.pools_after) add(p.parent_sig, p.slot, p.count);
    std::unordered_set<std::uint64_t> seen_tokens;
    for (const auto& s : rec.samples_after)
        if (seen_tokens.insert(s.token).second) add(s.sig, s.slot, 1);
    std::vector<AtomRealization> out;
    out.reserve(acc.size());
    for (auto& [sig, a] : acc) out.push_back(std::move(a));
    return out;
}

/// Cell-size decompositions of U_1..U_i (i = depth_idx, 0-based), grouped by
/// the atom signature each chunk was drawn from.
inline std::vector<std::vector<std::uint64_t>> u_decomps_upto(const Transcript& t,
                                                              std::size_t depth_idx) {
    std::vector<std::vector<std::uint64_t>> out;
    for (std::size_t qi = 0; qi <= depth_idx && qi < t.queries.size(); ++qi) {
        std::map<std::uint64_t, std::uint64_t> by_sig;
        for (const auto& c : t.queries[qi].cells) by_sig[c.parent_sig] += c.count;
        std::vector<std::uint64_t> cells;
        for (auto& [sig, sz] : by_sig) cells.push_back(sz);
        out.push_back(std::move(cells));
    }
    return out;
}

inline std::vector<std::uint64_t> atom_sizes_at(const Transcript& t, std::size_t depth_idx) {
    std::vector<std::uint64_t> sizes;
    for (auto& [sig, sz] : t.queries.at(depth_idx).atoms_after) sizes.push_back(sz);
    return sizes;
}

enum class ConcKind { ZeroIntersect, CountBand, MassBand, MassNonzero };

struct ConcViolation {
    std::size_t atom = 0;
    unsigned bucket = 0; // 0 for mass-level violations
    ConcKind kind = ConcKind::CountBand;
};

/// Check the realized atoms against the per-bucket concentration bands and
/// the phi_A |A| / (tau n) mass band:
///  - j <= tau - phi_A: |A ∩ B_j| must be 0;
///  - j >  tau - phi_A: |A ∩ B_j| in [1 -/+ 1/gamma] |A| b rho^j / n;
///  - phi_A = 0: D_k(A) must be 0; else D_k(A) in the band around phi_A|A|/(tau n).
inline std::vector<ConcViolation> concentration_report(const EquivParams& p,
                                                       const std::vector<AtomRealization>& atoms,
                                                       const AnalysisParams& ap) {
    std::vector<ConcViolation> out;
    NodeShape shape = NodeShape::of(p);
    Rational lo_band = Rational(1) - Rational(1) / ap.gamma;
    Rational hi_band = Rational(1) + Rational(1) / ap.gamma;
    for (std::size_t ai = 0; ai < atoms.size(); ++ai) {
        const auto& a = atoms[ai];
        unsigned phi_a = phi_of(a.size, shape, ap.alpha);
        for (unsigned j = 1; j <= p.tau; ++j) {
            std::uint64_t cnt = a.bucket_counts.size() > j ? a.bucket_counts[j] : 0;
            if (j + phi_a <= p.tau) {
                if (cnt != 0) out.push_back({ai, j, ConcKind::ZeroIntersect});
            } else {
                Rational expect(Int(a.size) * p.b * ipow(Int(p.rho), j), Int(p.n));
                if (Rational(Int(cnt)) < lo_band * expect || Rational(Int(cnt)) > hi_band * expect)
                    out.push_back({ai, j, ConcKind::CountBand});
            }
        }
        Rational center(Int(phi_a) * a.size, Int(p.tau) * p.n);
        for (int k = 1; k <= 2; ++k) {
            const Rational& mass = k == 1 ? a.mass1 : a.mass2;
            if (phi_a == 0) {
                if (mass != 0) out.push_back({ai, 0, ConcKind::MassNonzero});
            } else if (mass < lo_band * center || mass > hi_band * center) {
                out.push_back({ai, 0, ConcKind::MassBand});
            }
        }
    }
    return out;
}

/// Run-level event report plus the realized quantities the desk-scale bounds
/// are phrased in: the non-heaviest mass share (drives the Good3 rate), the
/// largest single-bucket pick probability (drives bucket collisions), and the
/// largest atom-pick deviation theta (drives the COND/WCOND level TV).
struct EventReport {
    bool good1 = true;
    bool good2_buckets = true;
    bool good2_ratio = true;
    bool good3 = true;
    double nonheaviest_share_total = 0; // sum over queries of 1 - D_k(e_h)/D_k(A_i)
    double max_bucket_prob = 0;         // max_j D_k(W cap B_j)/D_k(W) over sampled cells W
    double max_theta_dev = 0;           // max |(D_k(V)/D_k(U)) / (|V|/|U|) - 1|
};

inline EventReport good_events(const Transcript& t, const PairSchema& schema,
                               const AnalysisParams& ap) {
    EventReport ev;
    NodeShape shape = NodeShape::of(schema.params);
    const Int gn = numerator(ap.gamma), gd = denominator(ap.gamma);

    // Good1: no bad node along the realized path (root included).
    if (!classify_node({schema.n}, {}, shape, ap).good) ev.good1 = false;
    for (std::size_t i = 0; i < t.queries.size() && ev.good1; ++i) {
        if (!classify_node(atom_sizes_at(t, i), u_decomps_upto(t, i), shape, ap).good)
            ev.good1 = false;
    }

    // Good2 item 1: positive-mass samples lie in pairwise distinct buckets.
    if (!t.queries.empty()) {
        const auto& final_samples = t.queries.back().samples_after;
        std::unordered_set<std::uint64_t> seen;
        std::set<int> buckets_used;
        for (const auto& s : final_samples) {
            if (!seen.insert(s.token).second) continue;
            const Slot& slot = schema.slots[s.slot];
            if (slot.w1 == 0 && slot.w2 == 0) continue;
            if (!buckets_used.insert(slot.bucket).second) ev.good2_buckets = false;
        }
    }

    // Good2 item 2 and Good3 per query.
    for (std::size_t i = 0; i < t.queries.size(); ++i) {
        const QueryRecord& rec = t.queries[i];

        for (int k = 1; k <= 2; ++k) {
            Int wu = weight_to_int(rec.u_w[k - 1]);
            std::unordered_set<std::uint64_t> seen;
            for (std::size_t si = 0; si <= i; ++si) {
                const auto& s = rec.samples_after[si];
                if (!seen.insert(s.token).second) continue;
                Int ws = weight_to_int(schema.slots[s.slot].w(k));
                if (ws == 0) continue;
                // ratio wu/ws inside [1/(3 gamma), 3 gamma]?
                bool ge_lo = wu * Int(3) * gn >= ws * gd;
                bool le_hi = wu * gd <= ws * Int(3) * gn;
                if (ge_lo && le_hi) ev.good2_ratio = false;
            }
        }

        // Good3: step-1 outcome must be the unique heaviest of O_i ∪ {U_i}.
        int k = rec.directive.which;
        std::vector<Weight> w1s, w2s; // per candidate: old picks then U
        for (std::uint32_t idx : rec.old_indices) {
            const auto& s = rec.samples_after[idx];
            w1s.push_back(schema.slots[s.slot].w1);
            w2s.push_back(schema.slots[s.slot].w2);
        }
        bool has_u = rec.u_size > 0;
        if (has_u) {
            w1s.push_back(rec.u_w[0]);
            w2s.push_back(rec.u_w[1]);
        }
        int heaviest = -1;
        for (std::size_t c = 0; c < w1s.size(); ++c) {
            bool dominant = true;
            for (std::size_t o = 0; o < w1s.size() && dominant; ++o) {
                if (o == c) continue;
                if (!(w1s[c] > w1s[o] && w2s[c] > w2s[o])) dominant = false;
            }
            if (dominant) {
                heaviest = static_cast<int>(c);
                break;
            }
        }
        int picked = rec.step1 == -1 ? static_cast<int>(w1s.size()) - 1 : rec.step1;
        if (heaviest < 0 || picked != heaviest) ev.good3 = false;
        Weight wa = rec.a_w[k - 1];
        if (wa > 0 && heaviest >= 0) {
            Weight wh = k == 1 ? w1s[heaviest] : w2s[heaviest];
            ev.nonheaviest_share_total += 1.0 - double(wh) / double(wa);
        } else if (wa > 0) {
            ev.nonheaviest_share_total += 1.0;
        }

        // realized bucket-pick probability of the sampled cell
        if (rec.step1 == -1 && !rec.fallback_uniform) {
            std::map<int, double> bucket_mass;
            double total = 0;
            for (const auto& c : rec.cells) {
                if (c.parent_sig != rec.picked_sig) continue;
                double m = double(c.count) * double(schema.slots[c.slot].w(k));
                bucket_mass[schema.slots[c.slot].bucket] += m;
                total += m;
            }
            if (total > 0)
                for (auto& [bj, m] : bucket_mass)
                    ev.max_bucket_prob = std::max(ev.max_bucket_prob, m / total);
        }

        // realized atom-pick deviation vs the size-proportional pick
        if (rec.u_size > 0 && rec.u_w[k - 1] > 0) {
            std::map<std::uint64_t, std::pair<double, double>> by_sig; // sig -> (mass, size)
            for (const auto& c : rec.cells) {
                auto& e = by_sig[c.parent_sig];
                e.first += double(c.count) * double(schema.slots[c.slot].w(k));
                e.second += double(c.count);
            }
            double wu = double(rec.u_w[k - 1]);
            double su = double(rec.u_size);
            for (auto& [sig, e] : by_sig) {
                if (e.first == 0) continue;
                double theta = (e.first / wu) / (e.second / su);
                ev.max_theta_dev = std::max(ev.max_theta_dev, std::abs(theta - 1.0));
            }
        }
    }
    return ev;
}

// ---------------------------------------------------------------------------
// Node-distribution TV estimation

using NodeHistogram = std::unordered_map<std::uint64_t, std::uint64_t>;

inline double tv_histogram(const NodeHistogram& a, std::uint64_t na, const NodeHistogram& b,
                           std::uint64_t nb) {
    if (na == 0 || nb == 0) return 0.0;
    double acc = 0;
    for (const auto& [k, ca] : a) {
        auto it = b.find(k);
        double pb = it == b.end() ? 0.0 : double(it->second) / double(nb);
        acc += std::abs(double(ca) / double(na) - pb);
    }
    for (const auto& [k, cb] : b)
        if (!a.count(k)) acc += double(cb) / double(nb);
    return acc / 2.0;
}

struct TvEstimate {
    double tv = 0;
    double se = 0;
};

/// Plug-in TV with delete-one-block jackknife SE over per-block histograms.
inline TvEstimate tv_with_jackknife(const std::vector<NodeHistogram>& blocks_a,
                                    const std::vector<std::uint64_t>& counts_a,
                                    const std::vector<NodeHistogram>& blocks_b,
                                    const std::vector<std::uint64_t>& counts_b) {
    std::size_t nblocks = blocks_a.size();
    NodeHistogram all_a, all_b;
    std::uint64_t na = 0, nb = 0;
    for (std::size_t i = 0; i < nblocks; ++i) {
        for (auto& [k, c] : blocks_a[i]) all_a[k] += c;
        for (auto& [k, c] : blocks_b[i]) all_b[k] += c;
        na += counts_a[i];
        nb += counts_b[i];
    }
    TvEstimate est;
    est.tv = tv_histogram(all_a, na, all_b, nb);
    if (nblocks < 2) return est;
    std::vector<double> loo(nblocks);
    double mean = 0;
    for (std::size_t i = 0; i < nblocks; ++i) {
        NodeHistogram ha = all_a, hb = all_b;
        for (auto& [k, c] : blocks_a[i]) ha[k] -= c;
        for (auto& [k, c] : blocks_b[i]) hb[k] -= c;
        loo[i] = tv_histogram(ha, na - counts_a[i], hb, nb - counts_b[i]);
        mean += loo[i];
    }
    mean /= double(nblocks);
    double ss = 0;
    for (double v : loo) ss += (v - mean) * (v - mean);
    est.se = std::sqrt(ss * double(nblocks - 1) / double(nblocks));
    return est;
}

struct LevelTvReport {
    unsigned q = 0;
    std::vector<TvEstimate> levels;      // index i-1 = level i, all runs
    std::vector<TvEstimate> cond_levels; // runs kept by the filter
    double gamma_eff = std::numeric_limits<double>::infinity(); // 2 / max theta dev (kept runs)
    double kept_frac[2] = {1.0, 1.0};
    std::uint64_t node_collisions = 0;
};

struct LevelTvFilter {
    bool require_good1 = false;
    double max_theta_dev = std::numeric_limits<double>::infinity();
};

/// Runs `trials` independent runs per side and reports the plug-in TV between
/// the per-level node distributions, with jackknife SEs, for all runs and for
/// the filter-conditioned subset. gamma_eff = 2 / (largest atom-pick
/// deviation among kept runs), the realized constant in the 4i/gamma bound.
/// Trials fan out over `jobs` workers; the fold is sequential by trial index.
template <typename RunFn>
LevelTvReport estimate_level_tv(RunFn&& run_side, const PairSchema& schema_a,
                                const PairSchema& schema_b, unsigned q, std::uint64_t trials,
                                const AnalysisParams& ap, const LevelTvFilter& filter,
                                unsigned nblocks = 20, unsigned jobs = 1) {
    if (trials < 1000)
        throw std::invalid_argument("estimate_level_tv: needs at least 1000 trials per side");
    LevelTvReport rep;
    rep.q = q;
    if (trials < nblocks) nblocks = std::max<unsigned>(1, unsigned(trials));

    struct Extract {
        std::vector<Configuration> configs;
        bool keep = true;
        double theta = 0;
    };
    std::vector<Extract> extracts(2 * trials);
    parallel_trials(2 * trials, jobs, [&](std::uint64_t slot) {
        int side = int(slot % 2);
        std::uint64_t tr = slot / 2;
        const PairSchema& schema = side == 0 ? schema_a : schema_b;
        RunResult rr = run_side(side, tr);
        EventReport ev = good_events(rr.transcript, schema, ap);
        Extract& e = extracts[slot];
        e.configs = rr.transcript.configurations();
        e.keep = (!filter.require_good1 || ev.good1) && ev.max_theta_dev <= filter.max_theta_dev;
        e.theta = ev.max_theta_dev;
    });

    // sequential fold: per level, per side, per block histograms
    auto make_grid = [&] {
        return std::vector<std::vector<NodeHistogram>>(q, std::vector<NodeHistogram>(nblocks));
    };
    std::vector<std::vector<NodeHistogram>> all_a = make_grid(), all_b = make_grid(),
                                            kept_a = make_grid(), kept_b = make_grid();
    std::vector<std::uint64_t> all_ca(nblocks, 0), all_cb(nblocks, 0), kept_ca(nblocks, 0),
        kept_cb(nblocks, 0);
    std::unordered_map<std::uint64_t, std::vector<Configuration>> preimage;
    double max_theta_kept = 0;
    std::uint64_t kept[2] = {0, 0};

    for (std::uint64_t slot = 0; slot < 2 * trials; ++slot) {
        int side = int(slot % 2);
        std::uint64_t tr = slot / 2;
        const Extract& e = extracts[slot];
        unsigned block = unsigned(tr % nblocks);
        for (unsigned lvl = 1; lvl <= q && lvl <= e.configs.size(); ++lvl) {
            std::uint64_t id = node_id(e.configs, lvl);
            auto [it, fresh] = preimage.try_emplace(
                id, std::vector<Configuration>(e.configs.begin(), e.configs.begin() + lvl));
            if (!fresh) {
                auto& pre = it->second;
                bool same =
                    pre.size() == lvl && std::equal(pre.begin(), pre.end(), e.configs.begin());
                if (!same) ++rep.node_collisions;
            }
            (side == 0 ? all_a : all_b)[lvl - 1][block][id] += 1;
            if (e.keep) (side == 0 ? kept_a : kept_b)[lvl - 1][block][id] += 1;
        }
        (side == 0 ? all_ca : all_cb)[block] += 1;
        if (e.keep) {
            (side == 0 ? kept_ca : kept_cb)[block] += 1;
            ++kept[side];
            max_theta_kept = std::max(max_theta_kept, e.theta);
        }
    }

    for (unsigned lvl = 0; lvl < q; ++lvl) {
        rep.levels.push_back(tv_with_jackknife(all_a[lvl], all_ca, all_b[lvl], all_cb));
        rep.cond_levels.push_back(tv_with_jackknife(kept_a[lvl], kept_ca, kept_b[lvl], kept_cb));
    }
    rep.kept_frac[0] = trials ? double(kept[0]) / double(trials) : 0;
    rep.kept_frac[1] = trials ? double(kept[1]) / double(trials) : 0;
    if (max_theta_kept > 0) rep.gamma_eff = 2.0 / max_theta_kept;
    return rep;
}

// ---------------------------------------------------------------------------
// Uniblock analysis

enum class UniblockClass { Large, Small, Neither };

/// Large/small with respect to a support of size s: |A| s / n >= 2^t or
/// < 2^-t, with the threshold exponent t = ceil(sqrt(log2 n)) (documented
/// rounding of the 2^sqrt(log n) threshold).
inline UniblockClass uniblock_classify(std::uint64_t atom_size, std::uint64_t support_size,
                                       std::uint64_t n) {
    unsigned t = ceil_sqrt_u(floor_log2_u64(n));
    Int prod = Int(atom_size) * support_size;
    if (prod >= (Int(n) << t)) return UniblockClass::Large;
    if ((prod << t) < Int(n)) return UniblockClass::Small;
    return UniblockClass::Neither;
}

struct UniblockBadKappa {
    std::uint64_t bad = 0;
    std::uint64_t kappas_checked = 0;
    std::uint64_t bound = 0; // 2 * ceil(sqrt(log2 n))
};

/// kappa values in [ceil(L/8), floor(3L/8)] for which the atom is `neither`
/// with respect to S_e (2^(2 kappa)) or S_o (2^(2 kappa + 1)).
inline UniblockBadKappa count_bad_uniblock_kappas(std::uint64_t atom_size, std::uint64_t n) {
    unsigned L = floor_log2_u64(n);
    UniblockBadKappa r;
    r.bound = 2ull * ceil_sqrt_u(L);
    for (unsigned kappa = (L + 7) / 8; kappa <= 3 * L / 8; ++kappa) {
        bool bad = false;
        if (2 * kappa < 63 &&
            uniblock_classify(atom_size, std::uint64_t(1) << (2 * kappa), n) ==
                UniblockClass::Neither)
            bad = true;
        if (2 * kappa + 1 < 63 &&
            uniblock_classify(atom_size, std::uint64_t(1) << (2 * kappa + 1), n) ==
                UniblockClass::Neither)
            bad = true;
        if (bad) ++r.bad;
        ++r.kappas_checked;
    }
    return r;
}

struct UniblockAtom {
    std::uint64_t size = 0;
    std::uint64_t intersection = 0; // |A ∩ S|
};

struct UniblockConcReport {
    std::uint64_t violations = 0;
    std::uint64_t neither_skipped = 0;
    double predicted_tail = 0; // union bound over the checked atoms
};

/// Beta-band check: large atoms need |A ∩ S| in [1 -/+ 1/beta] |A| s / n,
/// small atoms need 0. The predicted tail sums the Chernoff/Markov failure
/// bounds so Monte Carlo rates can be compared against it.
inline UniblockConcReport uniblock_concentration(std::uint64_t support_size, std::uint64_t n,
                                                 const std::vector<UniblockAtom>& atoms,
                                                 const Rational& beta) {
    UniblockConcReport rep;
    Rational lo = Rational(1) - Rational(1) / beta;
    Rational hi = Rational(1) + Rational(1) / beta;
    double beta_d = rational_double(beta);
    for (const auto& a : atoms) {
        UniblockClass c = uniblock_classify(a.size, support_size, n);
        Rational expect(Int(a.size) * support_size, Int(n));
        double mu = rational_double(expect);
        if (c == UniblockClass::Neither) {
            ++rep.neither_skipped;
            continue;
        }
        if (c == UniblockClass::Small) {
            if (a.intersection != 0) ++rep.violations;
            rep.predicted_tail += std::min(1.0, mu); // Markov
        } else {
            Rational inter(Int(a.intersection));
            if (inter < lo * expect || inter > hi * expect) ++rep.violations;
            rep.predicted_tail += std::min(1.0, 2.0 * std::exp(-mu / (3.0 * beta_d * beta_d)));
        }
    }
    return rep;
}

} // namespace condlab
