#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace relucert {

// Seeded RNG with hand-rolled transforms. std::mt19937_64 output is fully
// specified by the standard; the distribution adapters in <random> are not,
// and seeded fixtures must be bit-identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  // Uniform in [0,1) with 53 bits of precision.
  double uniform() { return (gen_() >> 11) * 0x1.0p-53; }

  // Uniform in (0,1], safe as a log argument.
  double uniform_pos() { return ((gen_() >> 11) + 1) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Marsaglia polar method; one spare value cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double mul = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * mul;
    has_spare_ = true;
    return u * mul;
  }

  double exponential() { return -std::log(uniform_pos()); }

  std::uint64_t next_u64() { return gen_(); }

  // Uniform integer in [0, n), n >= 1. Modulo bias is negligible at the
  // fixture sizes used here (n << 2^64) and keeps the stream portable.
  std::uint64_t below(std::uint64_t n) { return gen_() % n; }

  // Derive an independent child seed (splitmix64 finalizer).
  static std::uint64_t split(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

 private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace relucert
