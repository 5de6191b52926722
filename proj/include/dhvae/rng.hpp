#pragma once

// Deterministic RNG with an explicitly specified algorithm (xoshiro256++ +
// Box-Muller) so that streams are reproducible across processes and
// independent of the standard library's distribution implementations.

#include <array>
#include <cstdint>
#include <string>

#include "dhvae/tensor.hpp"

namespace dhvae {

std::uint64_t splitmix64(std::uint64_t& state);

// Stable mix of a base seed with stream labels; used to derive independent
// per-cell / per-subject seeds.
std::uint64_t mix_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0);

class Rng {
  public:
    explicit Rng(std::uint64_t seed = 0);

    std::uint64_t next_u64();
    // uniform in [0, 1)
    double uniform();
    double uniform(double lo, double hi);
    // standard normal via Box-Muller (caches the second draw)
    double normal();
    std::int64_t uniform_int(std::int64_t n);  // [0, n)

    Tensor normal_tensor(const Shape& shape, double mean = 0.0, double stddev = 1.0);
    Tensor uniform_tensor(const Shape& shape, double lo = 0.0, double hi = 1.0);

    // serializable state (resume support)
    std::string state_str() const;
    static Rng from_state_str(const std::string& s);

  private:
    std::array<std::uint64_t, 4> s_{};
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace dhvae
