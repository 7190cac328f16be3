#pragma once

#include <boost/multiprecision/cpp_int.hpp>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace condlab {

using Int = boost::multiprecision::cpp_int;
using Rational = boost::multiprecision::cpp_rational;

/// Integer mass numerator over a per-instance common denominator. All engine
/// mass arithmetic stays in integers; Rational appears only at API edges.
using Weight = unsigned __int128;

inline Rational rational_pow2(long k) {
    if (k >= 0) return Rational(Int(1) << k, 1);
    return Rational(1, Int(1) << (-k));
}

inline Int ipow(Int base, unsigned exp) {
    Int r = 1;
    while (exp) {
        if (exp & 1) r *= base;
        base *= base;
        exp >>= 1;
    }
    return r;
}

inline std::uint64_t upow(std::uint64_t base, unsigned exp) {
    std::uint64_t r = 1;
    for (unsigned i = 0; i < exp; ++i) {
        if (base != 0 && r > std::numeric_limits<std::uint64_t>::max() / base)
            throw std::overflow_error("upow overflow");
        r *= base;
    }
    return r;
}

/// floor(log2(x)) for x >= 1.
inline unsigned floor_log2_u64(std::uint64_t x) {
    if (x == 0) throw std::domain_error("floor_log2_u64(0)");
    return 63u - static_cast<unsigned>(__builtin_clzll(x));
}

/// ceil(sqrt(k)) for small integer k, exact.
inline unsigned ceil_sqrt_u(unsigned k) {
    unsigned r = 0;
    while (r * r < k) ++r;
    return r;
}

inline Int weight_to_int(Weight w) {
    Int hi = static_cast<std::uint64_t>(w >> 64);
    Int lo = static_cast<std::uint64_t>(w);
    return (hi << 64) | lo;
}

inline Rational weight_ratio(Weight num, Weight den) {
    if (den == 0) throw std::domain_error("weight_ratio: zero denominator");
    return Rational(weight_to_int(num), weight_to_int(den));
}

inline std::string rational_str(const Rational& r) {
    return r.str();
}

inline double rational_double(const Rational& r) {
    return r.convert_to<double>();
}

} // namespace condlab
