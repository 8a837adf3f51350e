#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace thg {

// Deterministic PRNG. Raw bits come from std::mt19937_64 (its sequence is
// pinned by the standard); the uniform/normal transforms are implemented here
// because the std distributions are not bit-stable across library versions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  // Stable named sub-seed so data/init/shuffle streams stay independent and
  // individually reproducible from one master seed.
  static std::uint64_t derive(std::uint64_t master, std::string_view stream);

  std::uint64_t next_u64() { return gen_(); }

  // [0, 1)
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Unbiased draw from [0, bound), bound >= 1.
  std::uint64_t uniform_int(std::uint64_t bound);

  // Standard normal via Box-Muller; the spare draw is cached.
  double normal();

 private:
  std::mt19937_64 gen_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace thg
