#pragma once

#include <cassert>
#include <cstdint>
#include <limits>
#include <stdexcept>

namespace condlab {

/// 64-bit finalizer (David Stafford's Mix13 variant, the output stage of
/// SplitMix64). Bijective on uint64.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z ^= z >> 30;
    z *= 0xbf58476d1ce4e5b9ULL;
    z ^= z >> 27;
    z *= 0x94d049bb133111ebULL;
    z ^= z >> 31;
    return z;
}

/// Seedable counter-based generator: output_i = mix64(seed + i * golden).
/// Parallel trials use independent streams derived with `stream`, whose split
/// rule is seed_i = mix64(master + golden * (stream_id + 1)).
class RandomSource {
public:
    static constexpr std::uint64_t golden = 0x9e3779b97f4a7c15ULL;

    explicit RandomSource(std::uint64_t seed) noexcept : seed_(seed) {}

    /// Documented split rule for reproducible parallel streams.
    static RandomSource stream(std::uint64_t master, std::uint64_t stream_id) noexcept {
        return RandomSource(mix64(master + golden * (stream_id + 1)));
    }

    RandomSource substream(std::uint64_t stream_id) const noexcept {
        return stream(seed_, stream_id);
    }

    std::uint64_t next() noexcept {
        counter_ += golden;
        return mix64(seed_ + counter_);
    }

    /// Unbiased uniform draw in [0, bound) via masked rejection. bound > 0.
    std::uint64_t below(std::uint64_t bound) noexcept {
        assert(bound > 0);
        if (bound == 1) return 0;
        std::uint64_t mask = ~std::uint64_t{0} >> __builtin_clzll(bound - 1);
        for (;;) {
            std::uint64_t r = next() & mask;
            if (r < bound) return r;
        }
    }

    /// Unbiased uniform draw in [0, bound) for 128-bit bounds.
    unsigned __int128 below128(unsigned __int128 bound) noexcept {
        assert(bound > 0);
        if (bound <= std::numeric_limits<std::uint64_t>::max())
            return below(static_cast<std::uint64_t>(bound));
        unsigned __int128 one = 1;
        int bits = 128 - clz128(bound - 1);
        unsigned __int128 mask = (bits >= 128) ? ~(unsigned __int128){0} : ((one << bits) - 1);
        for (;;) {
            unsigned __int128 r = ((unsigned __int128)next() << 64) | next();
            r &= mask;
            if (r < bound) return r;
        }
    }

    /// Uniform double in [0, 1) with 53 random bits.
    double unit_double() noexcept {
        return static_cast<double>(next() >> 11) * 0x1.0p-53;
    }

    /// Exact Bernoulli(num/den) using integer arithmetic only.
    bool bernoulli_ratio(std::uint64_t num, std::uint64_t den) noexcept {
        assert(den > 0 && num <= den);
        if (num == 0) return false;
        if (num == den) return true;
        return below(den) < num;
    }

    std::uint64_t state() const noexcept { return counter_; }

private:
    static int clz128(unsigned __int128 x) noexcept {
        std::uint64_t hi = static_cast<std::uint64_t>(x >> 64);
        if (hi) return __builtin_clzll(hi);
        std::uint64_t lo = static_cast<std::uint64_t>(x);
        return lo ? 64 + __builtin_clzll(lo) : 128;
    }

    std::uint64_t seed_;
    std::uint64_t counter_ = 0;
};

} // namespace condlab
