#pragma once

#include "condlab/distribution.hpp"
#include "condlab/hypergeometric.hpp"
#include "condlab/rational.hpp"
#include "condlab/rng.hpp"

#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace condlab {

/// Parameters of the equivalence-testing hard instances: tau buckets of sizes
/// b*rho^j (j = 1..tau), each carrying mass 1/tau.
struct EquivParams {
    std::uint64_t n = 0;
    unsigned kappa = 0;
    std::uint64_t b = 1; // 2^kappa
    std::uint64_t rho = 2;
    unsigned tau = 1;
    std::uint64_t m = 0; // b * (rho + rho^2 + ... + rho^tau)

    std::uint64_t bucket_size(unsigned j) const { return b * upow(rho, j); }

    static EquivParams lab(std::uint64_t n, unsigned kappa, std::uint64_t rho, unsigned tau) {
        if (tau < 1) throw std::invalid_argument("EquivParams: tau must be >= 1");
        if (rho < 2) throw std::invalid_argument("EquivParams: rho must be >= 2");
        if (kappa >= 63) throw std::invalid_argument("EquivParams: kappa too large");
        EquivParams p;
        p.n = n;
        p.kappa = kappa;
        p.b = std::uint64_t(1) << kappa;
        p.rho = rho;
        p.tau = tau;
        Int m = 0;
        for (unsigned j = 1; j <= tau; ++j) {
            Int sz = Int(p.b) * ipow(Int(rho), j);
            if (sz % 2 != 0)
                throw std::invalid_argument("EquivParams: bucket size b*rho^j must be even");
            m += sz;
        }
        if (m > n)
            throw std::invalid_argument("EquivParams: support size m exceeds n");
        p.m = m.convert_to<std::uint64_t>();
        return p;
    }
};

/// rho and tau from the paper-mode formulas, usable symbolically for any
/// log2(n): rho = 2^ceil(sqrt(L)), tau = floor(sqrt(L)/4).
inline std::pair<unsigned, unsigned> paper_rho_exponent_tau(unsigned log2n) {
    unsigned rho_exp = ceil_sqrt_u(log2n);
    unsigned tau = static_cast<unsigned>(std::sqrt(static_cast<long double>(log2n)) / 4.0L);
    return {rho_exp, tau};
}

/// Paper-mode parameters: kappa uniform over the largest feasible prefix of
/// {0, ..., floor(log2(n)/2)}.
inline EquivParams derive_paper_params(std::uint64_t n, RandomSource& rng) {
    if (n < 2) throw std::invalid_argument("derive_paper_params: n too small");
    unsigned L = floor_log2_u64(n);
    auto [rho_exp, tau] = paper_rho_exponent_tau(L);
    if (tau < 1 || rho_exp >= 63)
        throw std::invalid_argument(
            "derive_paper_params: paper-mode parameters degenerate; use lab mode");
    std::uint64_t rho = std::uint64_t(1) << rho_exp;
    // largest kappa in {0..L/2} with m <= n
    std::optional<unsigned> kmax;
    for (unsigned k = 0; k <= L / 2; ++k) {
        Int m = 0;
        for (unsigned j = 1; j <= tau; ++j) m += (Int(1) << k) * ipow(Int(rho), j);
        if (m <= n)
            kmax = k;
        else
            break;
    }
    if (!kmax)
        throw std::invalid_argument(
            "derive_paper_params: paper-mode parameters degenerate; use lab mode");
    unsigned kappa = static_cast<unsigned>(rng.below(*kmax + 1));
    return EquivParams::lab(n, kappa, rho, tau);
}

enum class Label { YES, NO };

inline const char* label_name(Label l) { return l == Label::YES ? "YES" : "NO"; }

/// A (D1, D2) pair plus hidden layout metadata. D1 is bucket-uniform; for NO
/// instances D2 splits each bucket into equal heavy/light halves with masses
/// 3/(4 tau) and 1/(4 tau). YES pairs share one underlying distribution.
class InstancePair {
public:
    InstancePair(EquivParams params, Label label,
                 std::shared_ptr<const StructuredDistribution> d1,
                 std::shared_ptr<const StructuredDistribution> d2)
        : params_(params), label_(label), d1_(std::move(d1)), d2_(std::move(d2)) {}

    const EquivParams& params() const { return params_; }
    Label label() const { return label_; }
    const StructuredDistribution& d1() const { return *d1_; }
    const StructuredDistribution& d2() const { return *d2_; }
    const StructuredDistribution& dist(int which) const {
        if (which != 1 && which != 2) throw std::invalid_argument("dist: which must be 1 or 2");
        return which == 1 ? *d1_ : *d2_;
    }
    Rational epsilon() const { return label_ == Label::NO ? Rational(1, 4) : Rational(0); }

    /// Support-position range [begin, end) of bucket j (1-based).
    std::pair<std::uint64_t, std::uint64_t> bucket_range(unsigned j) const {
        if (j < 1 || j > params_.tau) throw std::out_of_range("bucket_range");
        std::uint64_t off = 0;
        for (unsigned i = 1; i < j; ++i) off += params_.bucket_size(i);
        return {off, off + params_.bucket_size(j)};
    }

    unsigned bucket_of_position(std::uint64_t pos) const {
        std::uint64_t off = 0;
        for (unsigned j = 1; j <= params_.tau; ++j) {
            off += params_.bucket_size(j);
            if (pos < off) return j;
        }
        throw std::out_of_range("bucket_of_position");
    }

    /// 0 = heavy half of the bucket, 1 = light half (layout metadata; for YES
    /// pairs this is still defined by position but carries no mass skew).
    int half_of_position(std::uint64_t pos) const {
        unsigned j = bucket_of_position(pos);
        auto [a, b] = bucket_range(j);
        return pos < a + (b - a) / 2 ? 0 : 1;
    }

    ElementSet bucket_set(unsigned j) const {
        auto [a, b] = bucket_range(j);
        return ElementSet::position_ranges(d1_->support(), {{a, b}});
    }

    ElementSet sub_bucket_set(unsigned j, int half) const {
        auto [a, b] = bucket_range(j);
        std::uint64_t mid = a + (b - a) / 2;
        if (half == 0) return ElementSet::position_ranges(d1_->support(), {{a, mid}});
        return ElementSet::position_ranges(d1_->support(), {{mid, b}});
    }

private:
    EquivParams params_;
    Label label_;
    std::shared_ptr<const StructuredDistribution> d1_;
    std::shared_ptr<const StructuredDistribution> d2_;
};

namespace detail {

inline std::vector<Layer> bucket_uniform_layers(const EquivParams& p) {
    std::vector<Layer> layers;
    std::uint64_t off = 0;
    for (unsigned j = 1; j <= p.tau; ++j) {
        std::uint64_t sz = p.bucket_size(j);
        Layer l;
        l.begin = off;
        l.end = off + sz;
        l.unit = Rational(1, Int(p.tau) * Int(sz));
        l.bucket = static_cast<int>(j);
        l.half = -1;
        layers.push_back(l);
        off += sz;
    }
    return layers;
}

inline std::vector<Layer> bucket_split_layers(const EquivParams& p) {
    std::vector<Layer> layers;
    std::uint64_t off = 0;
    for (unsigned j = 1; j <= p.tau; ++j) {
        std::uint64_t sz = p.bucket_size(j);
        Layer heavy;
        heavy.begin = off;
        heavy.end = off + sz / 2;
        heavy.unit = Rational(3, Int(2) * Int(p.tau) * Int(sz));
        heavy.bucket = static_cast<int>(j);
        heavy.half = 0;
        Layer light;
        light.begin = off + sz / 2;
        light.end = off + sz;
        light.unit = Rational(1, Int(2) * Int(p.tau) * Int(sz));
        light.bucket = static_cast<int>(j);
        light.half = 1;
        layers.push_back(heavy);
        layers.push_back(light);
        off += sz;
    }
    return layers;
}

} // namespace detail

inline constexpr std::uint64_t kRealizeLimit = std::uint64_t(1) << 23;

/// Generate an instance pair with a realized support. The support permutation
/// order is itself uniform, so contiguous slices are a uniformly random
/// bucket partition and the half split of each slice is a uniformly random
/// equal split.
inline InstancePair gen_equivalence(const EquivParams& p, Label label, RandomSource& rng) {
    if (p.m == 0) throw std::invalid_argument("gen_equivalence: invalid params");
    if (p.m > kRealizeLimit)
        throw std::invalid_argument("gen_equivalence: support too large to realize; "
                                    "use the deferred-realization run engine");
    auto support = SupportMap::sample(p.n, p.m, rng);
    auto d1 = std::make_shared<const StructuredDistribution>(
        p.n, DistKind::BucketUniform, detail::bucket_uniform_layers(p), support);
    if (label == Label::YES) return InstancePair(p, label, d1, d1);
    auto d2 = std::make_shared<const StructuredDistribution>(
        p.n, DistKind::BucketSplit, detail::bucket_split_layers(p), support);
    return InstancePair(p, label, d1, d2);
}

/// Exact dTV of a generated pair via the shared-support layer sweep.
inline Rational pair_tv_exact(const InstancePair& pair) {
    return tv_exact(pair.d1(), pair.d2());
}

enum class Parity { Even, Odd };

inline const char* parity_name(Parity p) { return p == Parity::Even ? "even" : "odd"; }

/// Uniform distribution on a random support of size 2^(2 kappa) (even) or
/// 2^(2 kappa + 1) (odd).
struct UniblockInstance {
    std::shared_ptr<const StructuredDistribution> dist;
    unsigned kappa = 0;
    Parity parity = Parity::Even;
    std::uint64_t support_size = 0;
};

/// Admissible kappa range: log2(n)/8 <= kappa <= 3 log2(n)/8, clipped so the
/// support fits in [n].
inline std::pair<unsigned, unsigned> uniblock_kappa_range(std::uint64_t n, Parity parity) {
    unsigned L = floor_log2_u64(n);
    unsigned lo = (L + 7) / 8;
    unsigned hi = 3 * L / 8;
    while (hi >= lo) {
        unsigned bits = 2 * hi + (parity == Parity::Odd ? 1 : 0);
        if (bits < 64 && (std::uint64_t(1) << bits) <= n) break;
        --hi;
    }
    if (hi < lo || lo == 0)
        throw std::invalid_argument("uniblock: no admissible kappa for this n");
    return {lo, hi};
}

inline UniblockInstance gen_uniblock_with_kappa(std::uint64_t n, unsigned kappa, Parity parity,
                                                RandomSource& rng) {
    unsigned bits = 2 * kappa + (parity == Parity::Odd ? 1 : 0);
    if (bits >= 63) throw std::invalid_argument("gen_uniblock: kappa too large");
    std::uint64_t s = std::uint64_t(1) << bits;
    if (s > n) throw std::invalid_argument("gen_uniblock: support does not fit in [n]");
    if (s > kRealizeLimit) throw std::invalid_argument("gen_uniblock: support too large");
    auto support = SupportMap::sample(n, s, rng);
    Layer l;
    l.begin = 0;
    l.end = s;
    l.unit = Rational(1, Int(s));
    std::vector<Layer> layers{l};
    UniblockInstance u;
    u.dist = std::make_shared<const StructuredDistribution>(n, DistKind::FlatUniform,
                                                            std::move(layers), support);
    u.kappa = kappa;
    u.parity = parity;
    u.support_size = s;
    return u;
}

inline UniblockInstance gen_uniblock(std::uint64_t n, Parity parity, RandomSource& rng) {
    auto [lo, hi] = uniblock_kappa_range(n, parity);
    unsigned kappa = lo + static_cast<unsigned>(rng.below(hi - lo + 1));
    return gen_uniblock_with_kappa(n, kappa, parity, rng);
}

} // namespace condlab
