// Seedable, splittable random streams. Every consumer derives its stream from
// (master_seed, sample_index, stream_tag) so realizations are reproducible
// regardless of evaluation order or concurrency.
#pragma once

#include <cstdint>

namespace homog {

enum class StreamTag : std::uint64_t {
    PoissonPoints = 1,
    Checkerboard = 2,
    Perturbation = 3,
    Generic = 4,
};

std::uint64_t splitmix64(std::uint64_t& state);

// One mixing step: deterministic 64-bit hash chain.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

inline std::uint64_t derive_stream_key(std::uint64_t master_seed, std::uint64_t sample_index,
                                       StreamTag tag) {
    return mix_seed(mix_seed(master_seed, sample_index), static_cast<std::uint64_t>(tag));
}

// xoshiro256++ with SplitMix64 state expansion.
class Rng {
  public:
    explicit Rng(std::uint64_t key);

    std::uint64_t next_u64();
    double next_u01();                       // uniform in [0,1)
    double next_uniform(double a, double b); // uniform in [a,b)
    double next_normal();                    // standard normal (Box-Muller)
    std::int64_t next_poisson(double mean);  // exact sampler, any mean >= 0

  private:
    std::uint64_t s_[4];
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace homog
