#pragma once

#include <cstdint>

namespace tpgst {

// splitmix64: 64-bit state, bit-exact across implementations and platforms.
// Reference: Vigna's fixed-increment SplittableRandom variant.
class Prng {
  public:
    explicit Prng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform double in [0, 1): top 53 bits over 2^53.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform double in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n). Exact for the small n used here.
    int below(int n) { return static_cast<int>(uniform() * n); }

    bool bernoulli(double p) { return uniform() < p; }

    std::uint64_t state() const { return state_; }

  private:
    std::uint64_t state_;
};

// Derives an independent stream seed from (seed, lane); used so per-epoch
// shuffles are recomputable from the step counter alone when resuming.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t lane) {
    Prng mixer(seed ^ (0xD1B54A32D192ED03ULL * (lane + 1)));
    return mixer.next_u64();
}

}  // namespace tpgst
