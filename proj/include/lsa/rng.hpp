#pragma once

#include <cstddef>
#include <cstdint>

namespace lsa {

/// Counter-based SplitMix64 generator with a ziggurat normal sampler.
///
/// The whole stream is a pure function of the seed and the call sequence;
/// nothing here defers to implementation-defined std:: distributions, so
/// seeded runs are reproducible across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) noexcept : seed_(seed), counter_(seed) {}

    std::uint64_t seed() const noexcept { return seed_; }

    std::uint64_t next_u64() noexcept;

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() noexcept;

    /// Uniform on the open interval (0, 1).
    double uniform_open() noexcept;

    /// Uniform integer in [0, n). n must be positive.
    std::uint64_t uniform_index(std::uint64_t n) noexcept;

    /// Standard normal draw (Doornik's 128-layer ziggurat).
    double normal() noexcept;

    /// Independent child stream; consumes one value from this stream.
    Rng split(std::uint64_t stream = 0) noexcept;

private:
    double normal_slow(std::uint64_t bits) noexcept;

    std::uint64_t seed_;
    std::uint64_t counter_;
};

/// SplitMix64 finalizer; also used to derive stream seeds.
inline std::uint64_t mix64(std::uint64_t z) noexcept
{
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

namespace detail {
extern const double* const zig_x;
extern const double* const zig_ratio;
} // namespace detail

inline std::uint64_t Rng::next_u64() noexcept
{
    counter_ += 0x9E3779B97F4A7C15ULL;
    return mix64(counter_);
}

inline double Rng::normal() noexcept
{
    const std::uint64_t bits = next_u64();
    // Top 53 bits drive u, the low 7 bits pick the layer.
    const double u = 2.0 * (static_cast<double>(static_cast<std::int64_t>(bits >> 11)) * 0x1.0p-53) - 1.0;
    const auto i = static_cast<int>(bits & 0x7F);
    if ((u < 0.0 ? -u : u) < detail::zig_ratio[i])
        return u * detail::zig_x[i];
    return normal_slow(bits);
}

} // namespace lsa
