#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <span>
#include <utility>

namespace condest {

/// SplitMix64 output function. Bijective on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// Combines a list of words into a single stream key. Used to derive
/// per-matrix substreams from (global seed, class, index).
constexpr std::uint64_t hash_words(std::initializer_list<std::uint64_t> words) noexcept {
    std::uint64_t h = 0x6A09E667F3BCC909ULL;
    for (auto w : words) {
        h = mix64(h ^ mix64(w));
    }
    return h;
}

/// Counter-based 64-bit generator: the i-th output is a pure function of
/// (key, i). Substreams are independent keys, so draws never depend on how
/// work is scheduled.
///
/// All distributions are implemented here rather than through <random> so
/// that streams are bit-identical across standard library implementations.
class CounterRng {
public:
    using result_type = std::uint64_t;

    explicit CounterRng(std::uint64_t key = 0) noexcept : key_(key) {}

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return ~result_type{0}; }

    result_type operator()() noexcept { return mix64(key_ ^ mix64(counter_++)); }

    std::uint64_t key() const noexcept { return key_; }
    std::uint64_t counter() const noexcept { return counter_; }

    /// Derives an independent child stream.
    CounterRng split(std::uint64_t tag) const noexcept { return CounterRng(hash_words({key_, tag})); }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

    /// Uniform integer on [0, bound). Lemire's multiply-shift with rejection.
    std::uint64_t below(std::uint64_t bound) noexcept {
        if (bound <= 1) {
            return 0;
        }
        const std::uint64_t threshold = (0 - bound) % bound;
        for (;;) {
            const std::uint64_t x = (*this)();
            __extension__ const unsigned __int128 m = static_cast<unsigned __int128>(x) * bound;
            if (static_cast<std::uint64_t>(m) >= threshold) {
                return static_cast<std::uint64_t>(m >> 64);
            }
        }
    }

    /// Uniform integer on the closed range [lo, hi].
    std::int64_t between(std::int64_t lo, std::int64_t hi) noexcept {
        return lo + static_cast<std::int64_t>(below(static_cast<std::uint64_t>(hi - lo) + 1));
    }

    /// Standard normal via Box-Muller (one value per call).
    double normal() noexcept {
        double u1 = uniform();
        while (u1 <= 0.0) {
            u1 = uniform();
        }
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    template <class T>
    void shuffle(std::span<T> items) noexcept {
        for (std::size_t i = items.size(); i > 1; --i) {
            const std::size_t j = below(i);
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

}  // namespace condest
