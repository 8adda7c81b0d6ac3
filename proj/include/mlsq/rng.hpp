#pragma once

#include <cstdint>
#include <initializer_list>

namespace mlsq {

/// Counter-based random stream. A stream is keyed by a seed plus an
/// arbitrary tuple of ids (level, point index, coordinate, ...); streams
/// with distinct keys are statistically independent, and draws within a
/// stream do not depend on any global state. This makes every sampler a
/// pure function of (seed, indices) and keeps results independent of
/// evaluation order and thread count.
class rng_stream {
public:
    explicit rng_stream(std::uint64_t seed) : state_(mix(seed ^ kInit)) {}

    rng_stream(std::uint64_t seed, std::initializer_list<std::uint64_t> ids)
        : rng_stream(seed) {
        for (std::uint64_t id : ids) state_ = mix(state_ ^ mix(id + kInit));
    }

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ULL;
        return mix(state_);
    }

    /// Uniform draw in [0, 1).
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double a, double b) { return a + (b - a) * uniform(); }

    /// Uniform index in {0, ..., n-1}.
    std::size_t uniform_index(std::size_t n) {
        return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n;
    }

private:
    static constexpr std::uint64_t kInit = 0x6A09E667F3BCC908ULL;

    static std::uint64_t mix(std::uint64_t z) {
        z += 0x9E3779B97F4A7C15ULL;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    std::uint64_t state_;
};

/// Derives a child seed; used to give levels/points their own streams.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t id) {
    rng_stream s(seed, {id});
    return s.next_u64();
}

} // namespace mlsq
