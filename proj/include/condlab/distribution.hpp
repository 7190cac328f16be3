#pragma once

#include "condlab/rational.hpp"
#include "condlab/rng.hpp"

#include <algorithm>
#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace condlab {

using ElementId = std::uint64_t;

inline Int rand_below_int(const Int& bound, RandomSource& rng) {
    if (bound <= 0) throw std::domain_error("rand_below_int: bound must be positive");
    if (bound == 1) return 0;
    Int b = bound - 1;
    unsigned bits = static_cast<unsigned>(boost::multiprecision::msb(b)) + 1;
    unsigned words = (bits + 63) / 64;
    for (;;) {
        Int r = 0;
        for (unsigned w = 0; w < words; ++w) r = (r << 64) | Int(rng.next());
        r >>= words * 64 - bits;
        if (r < bound) return r;
    }
}

/// A size-m uniformly random subset of [n], realized by partial Fisher-Yates
/// over the implicit identity array with a hash map of displaced entries.
/// O(m) time and memory independently of n.
class SupportMap {
public:
    SupportMap(std::uint64_t n, std::vector<ElementId> elems) : n_(n), elems_(std::move(elems)) {
        index_.reserve(elems_.size() * 2);
        for (std::uint64_t i = 0; i < elems_.size(); ++i) index_.emplace(elems_[i], i);
        if (index_.size() != elems_.size())
            throw std::invalid_argument("SupportMap: duplicate elements");
    }

    static std::shared_ptr<const SupportMap> sample(std::uint64_t n, std::uint64_t m,
                                                    RandomSource& rng) {
        if (m > n) throw std::invalid_argument("SupportMap::sample: m > n");
        std::vector<ElementId> elems(m);
        std::unordered_map<std::uint64_t, ElementId> displaced;
        displaced.reserve(m * 2);
        for (std::uint64_t i = 0; i < m; ++i) {
            std::uint64_t j = i + rng.below(n - i);
            auto itj = displaced.find(j);
            ElementId vj = itj != displaced.end() ? itj->second : j;
            auto iti = displaced.find(i);
            ElementId vi = iti != displaced.end() ? iti->second : i;
            elems[i] = vj;
            displaced[j] = vi;
        }
        return std::make_shared<const SupportMap>(n, std::move(elems));
    }

    std::uint64_t n() const { return n_; }
    std::uint64_t m() const { return elems_.size(); }
    ElementId element_at(std::uint64_t pos) const { return elems_.at(pos); }

    std::optional<std::uint64_t> position_of(ElementId x) const {
        auto it = index_.find(x);
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }

    const std::vector<ElementId>& elements() const { return elems_; }

private:
    std::uint64_t n_;
    std::vector<ElementId> elems_;
    std::unordered_map<ElementId, std::uint64_t> index_;
};

/// One uniform-mass block of support positions.
struct Layer {
    std::uint64_t begin = 0; // support position range [begin, end)
    std::uint64_t end = 0;
    Rational unit;  // per-element mass
    int bucket = 0; // 1-based bucket index, 0 if not bucketed
    int half = -1;  // -1 whole bucket, 0 heavy sub-bucket, 1 light sub-bucket

    std::uint64_t count() const { return end - begin; }
};

enum class DistKind { BucketUniform, BucketSplit, FlatUniform };

/// Discrete distribution over [n] with support structured as contiguous
/// uniform-mass layers of a (possibly shared) SupportMap. Immutable.
class StructuredDistribution {
public:
    StructuredDistribution(std::uint64_t n, DistKind kind, std::vector<Layer> layers,
                           std::shared_ptr<const SupportMap> support)
        : n_(n), kind_(kind), layers_(std::move(layers)), support_(std::move(support)) {
        std::uint64_t pos = 0;
        Rational total = 0;
        for (const auto& l : layers_) {
            if (l.begin != pos || l.end < l.begin)
                throw std::invalid_argument("StructuredDistribution: layers must tile [0, m)");
            pos = l.end;
            total += Rational(Int(l.count())) * l.unit;
        }
        if (support_ && pos != support_->m())
            throw std::invalid_argument("StructuredDistribution: layers do not cover support");
        if (support_ && support_->n() != n_)
            throw std::invalid_argument("StructuredDistribution: support domain mismatch");
        if (total != 1)
            throw std::invalid_argument("StructuredDistribution: masses do not sum to 1");
        m_ = pos;
    }

    std::uint64_t n() const { return n_; }
    std::uint64_t m() const { return m_; }
    DistKind kind() const { return kind_; }
    const std::vector<Layer>& layers() const { return layers_; }
    const std::shared_ptr<const SupportMap>& support() const { return support_; }
    bool realized() const { return support_ != nullptr; }

    const Layer& layer_of_position(std::uint64_t pos) const {
        auto it = std::upper_bound(layers_.begin(), layers_.end(), pos,
                                   [](std::uint64_t p, const Layer& l) { return p < l.end; });
        if (it == layers_.end()) throw std::out_of_range("layer_of_position");
        return *it;
    }

    /// Mass of a single element; 0 outside the support.
    Rational element_mass(ElementId x) const {
        if (x >= n_) throw std::out_of_range("element_mass: element outside [0, n)");
        require_realized();
        auto pos = support_->position_of(x);
        if (!pos) return Rational(0);
        return layer_of_position(*pos).unit;
    }

    void require_realized() const {
        if (!support_)
            throw std::logic_error("StructuredDistribution: support not realized");
    }

private:
    std::uint64_t n_;
    std::uint64_t m_ = 0;
    DistKind kind_;
    std::vector<Layer> layers_;
    std::shared_ptr<const SupportMap> support_;
};

/// Conditioning sets: explicit sorted ids, the complement of a small explicit
/// set, or a union of support-position ranges (compressed form for structured
/// sets such as whole buckets).
class ElementSet {
public:
    enum class Form { Explicit, Complement, PositionRanges };

    static ElementSet explicit_set(std::uint64_t n, std::vector<ElementId> items) {
        std::sort(items.begin(), items.end());
        items.erase(std::unique(items.begin(), items.end()), items.end());
        for (ElementId x : items)
            if (x >= n) throw std::out_of_range("ElementSet: element outside [0, n)");
        ElementSet s;
        s.form_ = Form::Explicit;
        s.n_ = n;
        s.items_ = std::move(items);
        return s;
    }

    static ElementSet complement_of(std::uint64_t n, std::vector<ElementId> excluded) {
        ElementSet s = explicit_set(n, std::move(excluded));
        if (s.items_.size() >= n)
            throw std::invalid_argument("ElementSet: complement of everything is empty");
        s.form_ = Form::Complement;
        return s;
    }

    static ElementSet position_ranges(std::shared_ptr<const SupportMap> support,
                                      std::vector<std::pair<std::uint64_t, std::uint64_t>> ranges) {
        std::sort(ranges.begin(), ranges.end());
        std::uint64_t prev = 0;
        bool first = true;
        for (auto& [a, b] : ranges) {
            if (b <= a || b > support->m() || (!first && a < prev))
                throw std::invalid_argument("ElementSet: bad position ranges");
            prev = b;
            first = false;
        }
        ElementSet s;
        s.form_ = Form::PositionRanges;
        s.n_ = support->n();
        s.support_ = std::move(support);
        s.ranges_ = std::move(ranges);
        return s;
    }

    Form form() const { return form_; }
    std::uint64_t n() const { return n_; }

    std::uint64_t size() const {
        switch (form_) {
        case Form::Explicit: return items_.size();
        case Form::Complement: return n_ - items_.size();
        case Form::PositionRanges: {
            std::uint64_t s = 0;
            for (auto& [a, b] : ranges_) s += b - a;
            return s;
        }
        }
        return 0;
    }

    bool empty() const { return size() == 0; }

    bool contains(ElementId x) const {
        if (x >= n_) return false;
        switch (form_) {
        case Form::Explicit:
            return std::binary_search(items_.begin(), items_.end(), x);
        case Form::Complement:
            return !std::binary_search(items_.begin(), items_.end(), x);
        case Form::PositionRanges: {
            auto pos = support_->position_of(x);
            if (!pos) return false;
            for (auto& [a, b] : ranges_)
                if (*pos >= a && *pos < b) return true;
            return false;
        }
        }
        return false;
    }

    const std::vector<ElementId>& items() const { return items_; }
    const std::vector<std::pair<std::uint64_t, std::uint64_t>>& ranges() const { return ranges_; }
    const std::shared_ptr<const SupportMap>& support() const { return support_; }

private:
    Form form_ = Form::Explicit;
    std::uint64_t n_ = 0;
    std::vector<ElementId> items_;
    std::vector<std::pair<std::uint64_t, std::uint64_t>> ranges_;
    std::shared_ptr<const SupportMap> support_;
};

/// D(A) as an exact rational, computed from layer intersection counts.
inline Rational set_mass(const StructuredDistribution& d, const ElementSet& a) {
    if (a.n() != d.n()) throw std::invalid_argument("set_mass: domain mismatch");
    switch (a.form()) {
    case ElementSet::Form::Explicit: {
        d.require_realized();
        // group by layer via position lookups
        Rational total = 0;
        for (ElementId x : a.items()) {
            auto pos = d.support()->position_of(x);
            if (pos) total += d.layer_of_position(*pos).unit;
        }
        return total;
    }
    case ElementSet::Form::Complement: {
        d.require_realized();
        Rational excluded = 0;
        for (ElementId x : a.items()) {
            auto pos = d.support()->position_of(x);
            if (pos) excluded += d.layer_of_position(*pos).unit;
        }
        return Rational(1) - excluded;
    }
    case ElementSet::Form::PositionRanges: {
        if (a.support() != d.support())
            throw std::invalid_argument("set_mass: position ranges over a different support");
        Rational total = 0;
        for (auto& [ra, rb] : a.ranges()) {
            for (const auto& l : d.layers()) {
                std::uint64_t lo = std::max(ra, l.begin);
                std::uint64_t hi = std::min(rb, l.end);
                if (hi > lo) total += Rational(Int(hi - lo)) * l.unit;
            }
        }
        return total;
    }
    }
    return Rational(0);
}

namespace detail {

/// Exact pick among groups with rational weights: index ~ w_i / sum(w).
inline std::size_t pick_weighted(const std::vector<Rational>& weights, RandomSource& rng) {
    Int denom = 1;
    for (const auto& w : weights) denom = boost::multiprecision::lcm(denom, denominator(w));
    Int total = 0;
    std::vector<Int> scaled(weights.size());
    for (std::size_t i = 0; i < weights.size(); ++i) {
        scaled[i] = numerator(weights[i]) * (denom / denominator(weights[i]));
        total += scaled[i];
    }
    if (total <= 0) throw std::logic_error("pick_weighted: zero total");
    Int r = rand_below_int(total, rng);
    for (std::size_t i = 0; i < weights.size(); ++i) {
        if (r < scaled[i]) return i;
        r -= scaled[i];
    }
    throw std::logic_error("pick_weighted: fell off the end");
}

} // namespace detail

/// Draw from D|_A: a in A with probability D(a)/D(A); uniform over A when
/// D(A) = 0. Errors on empty A.
inline ElementId cond_sample(const StructuredDistribution& d, const ElementSet& a,
                             RandomSource& rng) {
    if (a.empty()) throw std::invalid_argument("cond_sample: empty conditioning set");
    if (a.n() != d.n()) throw std::invalid_argument("cond_sample: domain mismatch");

    switch (a.form()) {
    case ElementSet::Form::Explicit: {
        d.require_realized();
        std::vector<Rational> weights;
        std::vector<ElementId> who;
        bool any_mass = false;
        for (ElementId x : a.items()) {
            Rational mx = d.element_mass(x);
            if (mx > 0) {
                weights.push_back(mx);
                who.push_back(x);
                any_mass = true;
            }
        }
        if (!any_mass) return a.items()[rng.below(a.items().size())];
        return who[detail::pick_weighted(weights, rng)];
    }
    case ElementSet::Form::Complement: {
        d.require_realized();
        // Per-layer availability after removing excluded support elements.
        std::vector<std::uint64_t> removed(d.layers().size(), 0);
        for (ElementId x : a.items()) {
            auto pos = d.support()->position_of(x);
            if (pos) {
                const Layer& l = d.layer_of_position(*pos);
                ++removed[&l - d.layers().data()];
            }
        }
        std::vector<Rational> weights;
        std::vector<std::size_t> which;
        for (std::size_t li = 0; li < d.layers().size(); ++li) {
            std::uint64_t avail = d.layers()[li].count() - removed[li];
            if (avail > 0 && d.layers()[li].unit > 0) {
                weights.push_back(Rational(Int(avail)) * d.layers()[li].unit);
                which.push_back(li);
            }
        }
        if (weights.empty()) {
            // zero conditional mass: uniform over [n] minus the excluded set
            for (;;) {
                ElementId x = rng.below(d.n());
                if (a.contains(x)) return x;
            }
        }
        const Layer& l = d.layers()[which[detail::pick_weighted(weights, rng)]];
        for (;;) {
            std::uint64_t pos = l.begin + rng.below(l.count());
            ElementId x = d.support()->element_at(pos);
            if (a.contains(x)) return x;
        }
    }
    case ElementSet::Form::PositionRanges: {
        if (a.support() != d.support())
            throw std::invalid_argument("cond_sample: position ranges over a different support");
        std::vector<Rational> weights;
        std::vector<std::pair<std::uint64_t, std::uint64_t>> cells;
        for (auto& [ra, rb] : a.ranges()) {
            for (const auto& l : d.layers()) {
                std::uint64_t lo = std::max(ra, l.begin);
                std::uint64_t hi = std::min(rb, l.end);
                if (hi > lo && l.unit > 0) {
                    weights.push_back(Rational(Int(hi - lo)) * l.unit);
                    cells.emplace_back(lo, hi);
                }
            }
        }
        if (weights.empty()) {
            // all-units positive in practice; reachable only for empty-mass ranges
            std::uint64_t k = rng.below(a.size());
            for (auto& [ra, rb] : a.ranges()) {
                if (k < rb - ra) return d.support()->element_at(ra + k);
                k -= rb - ra;
            }
            throw std::logic_error("cond_sample: range walk failed");
        }
        auto [lo, hi] = cells[detail::pick_weighted(weights, rng)];
        return d.support()->element_at(lo + rng.below(hi - lo));
    }
    }
    throw std::logic_error("cond_sample: unknown set form");
}

/// Exact total variation distance, computed layer-wise (never by iterating
/// [n]). Distributions over shared supports intersect by position ranges;
/// otherwise the smaller support is walked with hash lookups into the other.
inline Rational tv_exact(const StructuredDistribution& d1, const StructuredDistribution& d2) {
    if (d1.n() != d2.n()) throw std::invalid_argument("tv_exact: domain size mismatch");

    Rational acc = 0;
    if (d1.support() && d1.support() == d2.support()) {
        // Shared support: two-pointer sweep over the common position axis.
        std::size_t i = 0, j = 0;
        std::uint64_t pos = 0;
        while (i < d1.layers().size() && j < d2.layers().size()) {
            const Layer& a = d1.layers()[i];
            const Layer& b = d2.layers()[j];
            std::uint64_t hi = std::min(a.end, b.end);
            if (hi > pos) acc += Rational(Int(hi - pos)) * abs(a.unit - b.unit);
            pos = hi;
            if (a.end == hi) ++i;
            if (b.end == hi) ++j;
        }
        return acc / 2;
    }

    d1.require_realized();
    d2.require_realized();
    const StructuredDistribution& small = d1.m() <= d2.m() ? d1 : d2;
    const StructuredDistribution& big = d1.m() <= d2.m() ? d2 : d1;
    constexpr std::uint64_t kWalkLimit = std::uint64_t(1) << 23;
    if (small.m() > kWalkLimit)
        throw std::invalid_argument("tv_exact: supports too large for element walk");
    Rational big_seen = 0;
    for (std::uint64_t pos = 0; pos < small.m(); ++pos) {
        ElementId x = small.support()->element_at(pos);
        Rational ms = small.layer_of_position(pos).unit;
        Rational mb = big.element_mass(x);
        acc += abs(ms - mb);
        big_seen += mb;
    }
    acc += Rational(1) - big_seen; // mass of big's support outside small's
    return acc / 2;
}

} // namespace condlab
