#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

#include "btp/errors.hpp"

namespace btp {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
struct Philox4x32 {
    using Counter = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    static Counter block(Counter c, Key k) {
        constexpr std::uint32_t M0 = 0xD2511F53u, M1 = 0xCD9E8D57u;
        constexpr std::uint32_t W0 = 0x9E3779B9u, W1 = 0xBB67AE85u;
        for (int r = 0; r < 10; ++r) {
            const std::uint64_t p0 = static_cast<std::uint64_t>(M0) * c[0];
            const std::uint64_t p1 = static_cast<std::uint64_t>(M1) * c[2];
            c = {static_cast<std::uint32_t>(p1 >> 32) ^ c[1] ^ k[0], static_cast<std::uint32_t>(p1),
                 static_cast<std::uint32_t>(p0 >> 32) ^ c[3] ^ k[1], static_cast<std::uint32_t>(p0)};
            k[0] += W0;
            k[1] += W1;
        }
        return c;
    }
};

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

/// Two independent standard normals from one Philox block (Box-Muller).
inline std::array<double, 2> philox_normal_pair(const Philox4x32::Counter& c, const Philox4x32::Key& k) {
    const auto b = Philox4x32::block(c, k);
    const std::uint64_t a = (static_cast<std::uint64_t>(b[0]) << 32) | b[1];
    const std::uint64_t z = (static_cast<std::uint64_t>(b[2]) << 32) | b[3];
    const double u1 = (static_cast<double>(a >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
    const double u2 = static_cast<double>(z >> 11) * 0x1.0p-53;          // [0, 1)
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double th = 2.0 * std::numbers::pi * u2;
    return {r * std::cos(th), r * std::sin(th)};
}

/// Uniform random bit generator over a Philox stream, for <random> distributions.
class PhiloxEngine {
public:
    using result_type = std::uint32_t;
    PhiloxEngine(std::uint64_t key, std::uint64_t stream) : key_{static_cast<std::uint32_t>(key), static_cast<std::uint32_t>(key >> 32)} {
        ctr_ = {0, 0, static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
    }
    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
    result_type operator()() {
        if (pos_ == 4) {
            buf_ = Philox4x32::block(ctr_, key_);
            if (++ctr_[0] == 0) ++ctr_[1];
            pos_ = 0;
        }
        return buf_[pos_++];
    }

private:
    Philox4x32::Key key_;
    Philox4x32::Counter ctr_{};
    Philox4x32::Counter buf_{};
    int pos_ = 4;
};

/// Seeded family of per-site Brownian motions on a uniform base grid.
///
/// Each site's stream is keyed by its absolute coordinates (rounded to 2^-20),
/// so a site shared by two lattices of different spacing sees the same path,
/// and increments over coarser steps are exact sums of base increments.
class NoiseSystem {
public:
    NoiseSystem(std::uint64_t seed, double base_dt, std::size_t steps) : seed_(seed), dt_(base_dt), steps_(steps) {
        if (!(base_dt > 0.0)) throw DomainError("noise base step must be positive");
        if (steps == 0) throw DomainError("noise grid needs at least one step");
    }

    /// Base grid of 2^level steps per unit time covering [0, horizon].
    static NoiseSystem dyadic(std::uint64_t seed, double horizon, int level) {
        const double dt = std::ldexp(1.0, -level);
        const auto steps = static_cast<std::size_t>(std::llround(horizon / dt));
        if (std::abs(steps * dt - horizon) > 1e-12 * horizon) throw DomainError("horizon is not on the dyadic grid");
        return NoiseSystem(seed, dt, steps);
    }

    std::uint64_t seed() const { return seed_; }
    double base_dt() const { return dt_; }
    std::size_t steps() const { return steps_; }
    double horizon() const { return dt_ * steps_; }

    Philox4x32::Key site_key(std::span<const double> coords) const {
        std::uint64_t h = splitmix64(seed_ ^ 0x6A09E667F3BCC909ull);
        for (double c : coords) {
            const auto q = static_cast<std::int64_t>(std::llround(std::ldexp(c, 20)));
            h = splitmix64(h ^ static_cast<std::uint64_t>(q));
        }
        return {static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32)};
    }

    /// Increments over consecutive blocks of `coarsen` base steps for one site and replicate.
    std::vector<double> path(std::span<const double> coords, std::uint64_t replicate, std::size_t coarsen = 1) const {
        if (coarsen == 0 || steps_ % coarsen != 0) throw DomainError("coarsening must divide the base step count");
        const auto key = site_key(coords);
        const double sd = std::sqrt(dt_);
        std::vector<double> out(steps_ / coarsen, 0.0);
        for (std::size_t j = 0; j < steps_; j += 2) {
            const std::uint64_t pair = j / 2;
            const auto z = philox_normal_pair({static_cast<std::uint32_t>(pair), static_cast<std::uint32_t>(pair >> 32),
                                               static_cast<std::uint32_t>(replicate),
                                               static_cast<std::uint32_t>(replicate >> 32)},
                                              key);
            out[j / coarsen] += sd * z[0];
            if (j + 1 < steps_) out[(j + 1) / coarsen] += sd * z[1];
        }
        return out;
    }

private:
    std::uint64_t seed_;
    double dt_;
    std::size_t steps_;
};

}  // namespace btp
