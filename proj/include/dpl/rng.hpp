#pragma once

#include <cstdint>
#include <vector>

namespace dpl {

// Deterministic PRNG: xoshiro256++ seeded through splitmix64.
// The generator, the uniform-double construction (53 bit) and the gaussian
// (Box-Muller with cached spare) are all spelled out here, so identical
// seeds give identical streams on every platform. Never use std::random
// distributions anywhere in the project; their output is
// implementation-defined.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    // Independent sub-stream for module `tag` (data, init, augmentation, ...).
    // Derivation mixes seed and tag through splitmix64, so streams never
    // overlap for distinct tags.
    static Rng stream(std::uint64_t seed, std::uint64_t tag);

    std::uint64_t next_u64();

    // Uniform in [0, 1), 53 bits of mantissa.
    double next_unit();

    // Standard normal via Box-Muller; the second value of each pair is cached.
    double next_gaussian();

    // Uniform integer in [0, bound), unbiased (rejection sampling). bound > 0.
    std::uint64_t below(std::uint64_t bound);

    // In-place Fisher-Yates shuffle.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::uint64_t state_[4];
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// Fixed sub-stream tags. One per module that owns randomness.
namespace rng_tag {
inline constexpr std::uint64_t data = 0x01;
inline constexpr std::uint64_t init = 0x02;
inline constexpr std::uint64_t augment = 0x03;
inline constexpr std::uint64_t loader_labeled = 0x04;
inline constexpr std::uint64_t loader_unlabeled = 0x05;
inline constexpr std::uint64_t teacher = 0x06;
inline constexpr std::uint64_t split = 0x07;
}  // namespace rng_tag

// mean + scale * N(0, I). scale must be >= 0; scale 0 returns mean exactly.
std::vector<double> gaussian_sample(Rng& rng, const std::vector<double>& mean, double scale);

}  // namespace dpl
