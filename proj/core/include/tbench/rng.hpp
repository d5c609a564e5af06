#pragma once

#include <cstdint>
#include <initializer_list>
#include <string_view>

namespace tbench {

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// Order-sensitive combination of 64-bit words.
constexpr std::uint64_t hash64(std::initializer_list<std::uint64_t> words) noexcept {
    std::uint64_t h = 0x6A09E667F3BCC908ULL;
    for (auto w : words) h = mix64(h ^ mix64(w));
    return h;
}

/// FNV-1a over a string, for folding names into seeds.
constexpr std::uint64_t hash_name(std::string_view s) noexcept {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

/// Fixed stream ids for every stochastic draw site. New sites get new ids so
/// existing streams are never perturbed.
namespace streams {
inline constexpr std::uint64_t kSimReset = 1;
inline constexpr std::uint64_t kActorInit = 2;
inline constexpr std::uint64_t kCriticInit = 3;
inline constexpr std::uint64_t kPolicyNoise = 4;
inline constexpr std::uint64_t kMinibatch = 5;
inline constexpr std::uint64_t kExplore = 6;
inline constexpr std::uint64_t kReplaySample = 7;
inline constexpr std::uint64_t kHerRelabel = 8;
inline constexpr std::uint64_t kBootstrap = 9;
inline constexpr std::uint64_t kWorkerBase = 1000;
}  // namespace streams

/// Counter-based generator: output i of stream s under key k is a pure
/// function of (k, s, i). Splitting derives an independent child key.
class CounterRng {
public:
    CounterRng() = default;
    CounterRng(std::uint64_t key, std::uint64_t stream) noexcept
        : key_(key), stream_(stream) {}

    using result_type = std::uint64_t;
    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return ~result_type{0}; }

    result_type operator()() noexcept { return next_u64(); }

    std::uint64_t next_u64() noexcept {
        return mix64(mix64(key_ ^ mix64(stream_)) + counter_++ * 0xD1B54A32D192ED03ULL);
    }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() noexcept {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). n must be > 0.
    std::uint64_t below(std::uint64_t n) noexcept {
        // Lemire's multiply-shift; bias is negligible at the sizes used here.
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    /// Standard normal via Box-Muller (one output per two uniforms).
    double normal() noexcept;

    /// Child generator for a sub-stream, independent of this one's counter.
    CounterRng split(std::uint64_t child) const noexcept {
        return CounterRng(hash64({key_, stream_, child}), 0);
    }

    std::uint64_t key() const noexcept { return key_; }
    std::uint64_t stream() const noexcept { return stream_; }
    std::uint64_t counter() const noexcept { return counter_; }

private:
    std::uint64_t key_ = 0;
    std::uint64_t stream_ = 0;
    std::uint64_t counter_ = 0;
};

}  // namespace tbench
