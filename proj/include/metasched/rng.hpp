#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>

namespace metasched {

// Deterministic RNG wrapper. All draws go through an explicit u64 -> double
// conversion so sequences do not depend on the standard library's
// distribution implementations.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(mix(seed)) {}
  Rng(uint64_t seed, uint64_t stream) : gen_(mix(seed ^ mix(stream + 0x9e3779b97f4a7c15ULL))) {}

  uint64_t next_u64() { return gen_(); }

  // [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // [0, n)
  int uniform_int(int n) {
    if (n <= 0) throw std::invalid_argument("uniform_int: n must be positive");
    return static_cast<int>(uniform() * n) % n;
  }

  // Knuth's method; fine for the small rates used here.
  int poisson(double lambda) {
    if (lambda < 0) throw std::invalid_argument("poisson: negative rate");
    if (lambda == 0) return 0;
    const double limit = std::exp(-lambda);
    double prod = uniform();
    int count = 0;
    while (prod > limit) {
      ++count;
      prod *= uniform();
    }
    return count;
  }

  // Box-Muller (one value per call keeps the stream position predictable).
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

 private:
  static uint64_t mix(uint64_t x) {
    // splitmix64 finalizer
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

  std::mt19937_64 gen_;
};

}  // namespace metasched
