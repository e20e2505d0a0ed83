#pragma once

#include <cmath>
#include <cstdint>
#include <utility>

namespace crossview {

// SplitMix64 used as a counter-based stream: the i-th output is
// mix64(seed + i * golden) for i = 1, 2, ...  The full generator state is the
// pair (seed, calls), which is what checkpoints persist, so any consumer in
// any language can reproduce and resume the stream exactly.
class Rng {
public:
    static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

    explicit Rng(std::uint64_t seed, std::uint64_t calls = 0)
        : seed_(seed), calls_(calls) {}

    static constexpr std::uint64_t mix64(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    std::uint64_t next_u64() {
        ++calls_;
        return mix64(seed_ + calls_ * kGolden);
    }

    // Uniform in [0, 1) with 53-bit resolution.
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) {
        return lo + (hi - lo) * next_double();
    }

    // Uniform integer in [0, n) via 128-bit multiply-shift.
    int next_int(int n) {
        return static_cast<int>(
            (static_cast<unsigned __int128>(next_u64()) * static_cast<std::uint64_t>(n)) >> 64);
    }

    // Box-Muller; consumes two draws and keeps only the cosine leg so the
    // per-sample counter advance is fixed.
    double normal() {
        const double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53; // (0, 1]
        const double u2 = next_double();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    // Standard normal clipped by rejection to |z| <= clip, then scaled.
    double trunc_normal(double stddev, double clip = 2.0) {
        double z = normal();
        while (std::abs(z) > clip) z = normal();
        return z * stddev;
    }

    // Fisher-Yates.
    template <typename It>
    void shuffle(It first, It last) {
        const auto n = static_cast<int>(last - first);
        for (int i = n - 1; i > 0; --i) {
            const int j = next_int(i + 1);
            std::swap(first[i], first[j]);
        }
    }

    // Independent stream keyed by (seed, tag); does not disturb this stream.
    Rng child(std::uint64_t tag) const {
        return Rng(mix64(seed_ ^ mix64(tag + kGolden)));
    }

    std::uint64_t seed() const { return seed_; }
    std::uint64_t calls() const { return calls_; }

private:
    std::uint64_t seed_;
    std::uint64_t calls_;
};

} // namespace crossview
