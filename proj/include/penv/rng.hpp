#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <initializer_list>

#include "penv/core.hpp"

namespace penv {

// Philox4x32-10 (Salmon et al., SC'11). Counter-based: output block i is a
// pure function of (key, counter), so every search stream is addressable by
// (seed, point, restart) and parallel and serial runs draw identical numbers.
class Philox4x32 {
public:
    using Block = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    static Block generate(Block ctr, Key key) {
        for (int round = 0; round < 10; ++round) {
            ctr = single_round(ctr, key);
            key[0] += kWeyl0;
            key[1] += kWeyl1;
        }
        return ctr;
    }

private:
    static constexpr std::uint32_t kMul0 = 0xD2511F53u;
    static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
    static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
    static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

    static Block single_round(const Block& c, const Key& k) {
        const std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * c[0];
        const std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * c[2];
        const auto hi0 = static_cast<std::uint32_t>(p0 >> 32), lo0 = static_cast<std::uint32_t>(p0);
        const auto hi1 = static_cast<std::uint32_t>(p1 >> 32), lo1 = static_cast<std::uint32_t>(p1);
        return {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
    }
};

/// One independent random stream, addressed by a seed and a two-word stream id.
/// Satisfies UniformRandomBitGenerator, but callers should prefer uniform()/normal(),
/// which are implemented here so the numbers do not depend on the standard library.
class CounterRng {
public:
    using result_type = std::uint32_t;

    CounterRng(std::uint64_t seed, std::uint32_t stream_a, std::uint32_t stream_b)
        : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
          stream_{stream_a, stream_b} {}

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return 0xFFFFFFFFu; }

    result_type operator()() {
        if (lane_ == 4) refill();
        return buffer_[lane_++];
    }

    /// Uniform on (0, 1], 53 random bits.
    double uniform() {
        const std::uint64_t hi = (*this)() >> 5;
        const std::uint64_t lo = (*this)() >> 6;
        return (static_cast<double>(hi * 67108864u + lo) + 1.0) / 9007199254740992.0;
    }

    /// Standard normal via Box-Muller; the second variate is cached.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double r = std::sqrt(-2.0 * std::log(uniform()));
        const double theta = kTwoPi * uniform();
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    /// Circularly symmetric complex Gaussian with E|z|^2 = 1.
    cplx complex_normal() {
        const double a = normal();
        const double b = normal();
        return {a * M_SQRT1_2, b * M_SQRT1_2};
    }

private:
    void refill() {
        Philox4x32::Block ctr{static_cast<std::uint32_t>(counter_), static_cast<std::uint32_t>(counter_ >> 32),
                              stream_[0], stream_[1]};
        buffer_ = Philox4x32::generate(ctr, key_);
        ++counter_;
        lane_ = 0;
    }

    Philox4x32::Key key_;
    std::array<std::uint32_t, 2> stream_;
    std::uint64_t counter_ = 0;
    Philox4x32::Block buffer_{};
    int lane_ = 4;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

/// Mixes a list of small identifiers into one 32-bit stream word.
inline std::uint32_t stream_id(std::initializer_list<std::uint32_t> parts) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (auto p : parts) {
        for (int b = 0; b < 4; ++b) {
            h ^= (p >> (8 * b)) & 0xFFu;
            h *= 0x100000001b3ull;
        }
    }
    return static_cast<std::uint32_t>(h ^ (h >> 32));
}

}  // namespace penv
