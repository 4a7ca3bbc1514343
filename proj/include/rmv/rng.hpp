#pragma once

// Counter-based random streams. Every Gaussian increment is a pure function of
// (seed, stream tag, particle index, step index), so a run is reproducible
// under any worker count and any particle partitioning.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>

namespace rmv {

// Philox4x32 with 10 rounds (Salmon et al., SC'11).
struct Philox4x32 {
    using Counter = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    static constexpr std::uint32_t kM0 = 0xD2511F53u;
    static constexpr std::uint32_t kM1 = 0xCD9E8D57u;
    static constexpr std::uint32_t kW0 = 0x9E3779B9u;
    static constexpr std::uint32_t kW1 = 0xBB67AE85u;

    static constexpr Counter round(const Counter& c, const Key& k) {
        const std::uint64_t p0 = static_cast<std::uint64_t>(kM0) * c[0];
        const std::uint64_t p1 = static_cast<std::uint64_t>(kM1) * c[2];
        const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
        const auto lo0 = static_cast<std::uint32_t>(p0);
        const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
        const auto lo1 = static_cast<std::uint32_t>(p1);
        return {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
    }

    static constexpr Counter block(Counter c, Key k) {
        for (int r = 0; r < 10; ++r) {
            if (r > 0) {
                k[0] += kW0;
                k[1] += kW1;
            }
            c = round(c, k);
        }
        return c;
    }
};

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

// Derive an independent seed for a sub-experiment (replicate, iteration, ...).
inline constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt) {
    return splitmix64(seed ^ splitmix64(salt + 0x632BE59BD9B4E019ull));
}

// Uniform in (0, 1] from the top 53 bits.
inline double to_unit_open0(std::uint64_t bits) {
    return (static_cast<double>(bits >> 11) + 1.0) * 0x1.0p-53;
}

// Gaussian draws keyed by (seed, tag, particle, step). The tag separates
// unrelated consumers of the same seed (particle noise, initial laws,
// probe points, ...).
class NormalStream {
public:
    NormalStream(std::uint64_t seed, std::uint32_t tag = 0) : seed_(seed), tag_(tag) {}

    std::uint64_t seed() const { return seed_; }
    std::uint32_t tag() const { return tag_; }

    // Fill out with independent N(0,1) values.
    void fill(std::uint64_t particle, std::uint64_t step, std::span<double> out) const {
        const Philox4x32::Key key{static_cast<std::uint32_t>(seed_),
                                  static_cast<std::uint32_t>(seed_ >> 32)};
        std::size_t produced = 0;
        for (std::uint32_t blk = 0; produced < out.size(); ++blk) {
            const Philox4x32::Counter ctr{
                static_cast<std::uint32_t>(step), static_cast<std::uint32_t>(step >> 32),
                static_cast<std::uint32_t>(particle),
                (tag_ << 20) ^ (static_cast<std::uint32_t>(particle >> 32) << 12) ^ blk};
            const auto r = Philox4x32::block(ctr, key);
            const std::uint64_t a = (static_cast<std::uint64_t>(r[0]) << 32) | r[1];
            const std::uint64_t b = (static_cast<std::uint64_t>(r[2]) << 32) | r[3];
            const double u1 = to_unit_open0(a);
            const double u2 = to_unit_open0(b);
            const double rad = std::sqrt(-2.0 * std::log(u1));
            const double ang = 2.0 * std::numbers::pi * u2;
            out[produced++] = rad * std::cos(ang);
            if (produced < out.size()) out[produced++] = rad * std::sin(ang);
        }
    }

    double normal(std::uint64_t particle, std::uint64_t step) const {
        double v = 0.0;
        fill(particle, step, std::span<double>(&v, 1));
        return v;
    }

    // Uniform in (0, 1], independent of the Gaussian draws for the same key.
    double uniform(std::uint64_t particle, std::uint64_t step) const {
        const Philox4x32::Key key{static_cast<std::uint32_t>(seed_) ^ 0x5bd1e995u,
                                  static_cast<std::uint32_t>(seed_ >> 32)};
        const Philox4x32::Counter ctr{static_cast<std::uint32_t>(step),
                                      static_cast<std::uint32_t>(step >> 32),
                                      static_cast<std::uint32_t>(particle),
                                      (tag_ << 20) | 0xFFFFFu};
        const auto r = Philox4x32::block(ctr, key);
        return to_unit_open0((static_cast<std::uint64_t>(r[0]) << 32) | r[1]);
    }

private:
    std::uint64_t seed_;
    std::uint32_t tag_;
};

// Stream tags in use across the library.
namespace stream_tag {
inline constexpr std::uint32_t particle_noise = 1;
inline constexpr std::uint32_t probe_points = 2;
inline constexpr std::uint32_t sliced_directions = 3;
inline constexpr std::uint32_t thinning = 4;
inline constexpr std::uint32_t initial_law = 5;
} // namespace stream_tag

} // namespace rmv
