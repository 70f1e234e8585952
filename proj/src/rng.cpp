#include "lsa/rng.hpp"

#include <array>
#include <cmath>

namespace lsa {

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

constexpr int kLayers = 128;
constexpr double kTailStart = 3.442619855899;
constexpr double kLayerArea = 9.91256303526217e-3;

struct ZigguratTables {
    std::array<double, kLayers + 1> x{};
    std::array<double, kLayers> ratio{};

    ZigguratTables()
    {
        double f = std::exp(-0.5 * kTailStart * kTailStart);
        x[0] = kLayerArea / f;
        x[1] = kTailStart;
        x[kLayers] = 0.0;
        for (int i = 2; i < kLayers; ++i) {
            x[i] = std::sqrt(-2.0 * std::log(kLayerArea / x[i - 1] + f));
            f = std::exp(-0.5 * x[i] * x[i]);
        }
        for (int i = 0; i < kLayers; ++i)
            ratio[i] = x[i + 1] / x[i];
    }
};

const ZigguratTables& tables()
{
    static const ZigguratTables t;
    return t;
}

} // namespace

namespace detail {
const double* const zig_x = tables().x.data();
const double* const zig_ratio = tables().ratio.data();
} // namespace detail

double Rng::uniform() noexcept
{
    return static_cast<double>(static_cast<std::int64_t>(next_u64() >> 11)) * 0x1.0p-53;
}

double Rng::uniform_open() noexcept
{
    return (static_cast<double>(static_cast<std::int64_t>(next_u64() >> 11)) + 0.5) * 0x1.0p-53;
}

std::uint64_t Rng::uniform_index(std::uint64_t n) noexcept
{
    // Lemire's multiply-shift with rejection; unbiased.
    std::uint64_t x = next_u64();
    unsigned __int128 m = static_cast<unsigned __int128>(x) * n;
    auto low = static_cast<std::uint64_t>(m);
    if (low < n) {
        const std::uint64_t threshold = (0 - n) % n;
        while (low < threshold) {
            x = next_u64();
            m = static_cast<unsigned __int128>(x) * n;
            low = static_cast<std::uint64_t>(m);
        }
    }
    return static_cast<std::uint64_t>(m >> 64);
}

double Rng::normal_slow(std::uint64_t bits) noexcept
{
    const auto& t = tables();
    for (;;) {
        const double u = 2.0 * (static_cast<double>(static_cast<std::int64_t>(bits >> 11)) * 0x1.0p-53) - 1.0;
        const auto i = static_cast<int>(bits & 0x7F);

        if (std::fabs(u) < t.ratio[i])
            return u * t.x[i];

        if (i == 0) {
            double x;
            double y;
            do {
                x = std::log(uniform_open()) / kTailStart;
                y = std::log(uniform_open());
            } while (-2.0 * y < x * x);
            return u < 0.0 ? x - kTailStart : kTailStart - x;
        }

        const double x = u * t.x[i];
        const double f0 = std::exp(-0.5 * (t.x[i] * t.x[i] - x * x));
        const double f1 = std::exp(-0.5 * (t.x[i + 1] * t.x[i + 1] - x * x));
        if (f1 + uniform() * (f0 - f1) < 1.0)
            return x;
        bits = next_u64();
    }
}

Rng Rng::split(std::uint64_t stream) noexcept
{
    return Rng(mix64(next_u64() ^ mix64(stream + kGolden)));
}

} // namespace lsa
