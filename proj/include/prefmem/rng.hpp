#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>

namespace prefmem {

// SplitMix64 (Steele, Lea & Flood). Every derived quantity below is computed
// with integer arithmetic or exact power-of-two scaling, so a given seed
// produces the same stream on every platform and standard library.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        state_ += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n), unbiased by rejection. n must be > 0.
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t threshold = (0 - n) % n;
        for (;;) {
            const std::uint64_t r = next();
            if (r >= threshold) return r % n;
        }
    }

    // Fisher-Yates.
    template <typename T>
    void shuffle(std::span<T> items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(below(i));
            std::swap(items[i - 1], items[j]);
        }
    }

    template <typename Container>
    void shuffle(Container& c) {
        shuffle(std::span(c.data(), c.size()));
    }

    std::uint64_t state() const noexcept { return state_; }

private:
    std::uint64_t state_;
};

// Independent child seed derived from a parent seed and a stream label, so
// unrelated consumers of one user-facing seed do not share a stream.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    Rng mix(seed ^ (stream * 0xd1b54a32d192ed03ULL));
    return mix.next();
}

}  // namespace prefmem
