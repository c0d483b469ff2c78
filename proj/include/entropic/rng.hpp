#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace entropic {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
///
/// Every draw is a pure function of (key, counter), so walkers can be advanced in any
/// order or on any number of threads and still see the same numbers.
class Philox4x32 {
public:
    using Counter = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    static Counter generate(Counter ctr, Key key) noexcept {
        for (int round = 0; round < 10; ++round) {
            ctr = single_round(ctr, key);
            key[0] += 0x9E3779B9U;
            key[1] += 0xBB67AE85U;
        }
        return ctr;
    }

private:
    static Counter single_round(const Counter& c, const Key& k) noexcept {
        const std::uint64_t p0 = std::uint64_t{0xD2511F53U} * c[0];
        const std::uint64_t p1 = std::uint64_t{0xCD9E8D57U} * c[2];
        const auto hi0 = static_cast<std::uint32_t>(p0 >> 32), lo0 = static_cast<std::uint32_t>(p0);
        const auto hi1 = static_cast<std::uint32_t>(p1 >> 32), lo1 = static_cast<std::uint32_t>(p1);
        return {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
    }
};

/// Purposes a stream can be drawn for; keeps initialisation and stepping draws disjoint.
enum class StreamTag : std::uint32_t { step = 0, init = 1, pairs = 2, auxiliary = 3 };

/// Random stream keyed by (seed, walker, step). Successive calls advance a private draw
/// counter, so a walker's k-th draw within a step is always the same number.
class RandomStream {
public:
    RandomStream(std::uint64_t seed, std::uint64_t walker, std::uint64_t step,
                 StreamTag tag = StreamTag::step) noexcept
        : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
          walker_lo_(static_cast<std::uint32_t>(walker)),
          // walker bits 32..47, step bits 32..39 and the tag share the last word
          high_word_((static_cast<std::uint32_t>(walker >> 32) & 0xFFFFU) |
                     ((static_cast<std::uint32_t>(step >> 32) & 0xFFU) << 16) |
                     (static_cast<std::uint32_t>(tag) << 24)),
          step_lo_(static_cast<std::uint32_t>(step)) {}

    /// Uniform on the open interval (0, 1) with 53 random bits.
    double uniform() noexcept {
        if (cached_ == 0) refill();
        const std::uint64_t hi = block_[4 - cached_];
        const std::uint64_t lo = block_[5 - cached_];
        cached_ -= 2;
        const std::uint64_t bits = ((hi << 32) | lo) >> 11;
        return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
    }

    /// Standard normal via Box-Muller; pairs are cached so each call costs half a transform.
    double normal() noexcept {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        constexpr double two_pi = 6.283185307179586476925286766559;
        spare_ = r * std::sin(two_pi * u2);
        has_spare_ = true;
        return r * std::cos(two_pi * u2);
    }

private:
    void refill() noexcept {
        block_ = Philox4x32::generate({draw_++, step_lo_, walker_lo_, high_word_}, key_);
        cached_ = 4;
    }

    Philox4x32::Key key_;
    std::uint32_t walker_lo_;
    std::uint32_t high_word_;
    std::uint32_t step_lo_;
    std::uint32_t draw_ = 0;
    Philox4x32::Counter block_{};
    int cached_ = 0;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace entropic
