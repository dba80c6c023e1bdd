#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string_view>

namespace atn {

// Self-contained splitmix64 generator. The standard <random> distributions
// are implementation-defined, so all sampling here is done by explicit
// inverse-CDF / rejection-free constructions to keep runs bit-reproducible
// across compilers and standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    /// Uniform double in [0, 1).
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) {
        return lo + (hi - lo) * next_double();
    }

    /// Uniform integer in [lo, hi], inclusive. Multiply-shift, no modulo bias.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        const std::uint64_t n = static_cast<std::uint64_t>(hi - lo) + 1;
        const auto wide = static_cast<unsigned __int128>(next_u64()) * n;
        return lo + static_cast<std::int64_t>(wide >> 64);
    }

    /// Exponential inter-arrival sample with the given rate (events/second).
    double exponential(double rate) {
        return -std::log1p(-next_double()) / rate;
    }

    /// Standard normal via Box-Muller. The spare value is cached.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = next_double();
        double u2 = next_double();
        while (u1 <= 0.0) u1 = next_double();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    /// Index sampled proportionally to the (non-negative) weights.
    /// Weights need not be normalized. Returns the last positive-weight
    /// index when rounding pushes the scan off the end.
    int weighted_index(std::span<const double> weights) {
        double total = 0.0;
        for (double w : weights) total += w;
        double u = next_double() * total;
        int last_positive = 0;
        for (std::size_t i = 0; i < weights.size(); ++i) {
            if (weights[i] > 0.0) last_positive = static_cast<int>(i);
            u -= weights[i];
            if (u < 0.0 && weights[i] > 0.0) return static_cast<int>(i);
        }
        return last_positive;
    }

private:
    std::uint64_t state_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

namespace detail {
inline std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001B3ULL;
    }
    return h;
}
} // namespace detail

/// Derives the seed of an independent labeled substream. Streams derived
/// with distinct (label, index) pairs never share state, so adding a new
/// stream to a caller leaves existing draws untouched.
inline std::uint64_t derive_seed(std::uint64_t base, std::string_view label,
                                 std::uint64_t index = 0) {
    std::uint64_t h = detail::mix64(base + 0x9E3779B97F4A7C15ULL);
    h = detail::mix64(h ^ detail::fnv1a(label));
    h = detail::mix64(h ^ (index * 0xD1B54A32D192ED03ULL + 0x2545F4914F6CDD1DULL));
    return h;
}

} // namespace atn
