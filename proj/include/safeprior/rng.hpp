#ifndef SAFEPRIOR_RNG_HPP
#define SAFEPRIOR_RNG_HPP

#include <cstddef>
#include <cstdint>
#include <random>

namespace safeprior {

/// Seeded random stream. Two streams built from the same seed produce the
/// same draw sequence; independent runs should each own one.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed = 0) : seed_(seed), key_(mix(seed, 0)), engine_(key_) {}

    std::uint64_t seed() const noexcept { return seed_; }

    /// Independent substream, e.g. one per seed or per Monte-Carlo partition.
    /// Derived from this stream's identity, not its position, so nested
    /// substreams never collide with their siblings.
    RngStream substream(std::uint64_t index) const {
        RngStream out(seed_);
        out.key_ = mix(key_, index + 1);
        out.engine_.seed(out.key_);
        return out;
    }

    /// Uniform on [0, 1).
    double uniform() { return unit_(engine_); }

    /// Uniform on [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * unit_(engine_); }

    /// Uniform integer in [0, n). n must be positive.
    std::size_t below(std::size_t n) {
        return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
    }

    bool bernoulli(double p) { return unit_(engine_) < p; }

    std::size_t binomial(std::size_t trials, double p) {
        if (p <= 0.0) return 0;
        if (p >= 1.0) return trials;
        return std::binomial_distribution<std::size_t>(trials, p)(engine_);
    }

private:
    static std::uint64_t mix(std::uint64_t seed, std::uint64_t stream) {
        // splitmix64 finaliser over (seed, stream)
        std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    std::uint64_t seed_;
    std::uint64_t key_;
    std::mt19937_64 engine_;
    std::uniform_real_distribution<double> unit_{0.0, 1.0};
};

}  // namespace safeprior

#endif
