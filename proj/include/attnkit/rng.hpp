#ifndef ATTNKIT_RNG_HPP
#define ATTNKIT_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>

namespace attnkit {

// Seeded random source owned by each caller; never shared across threads.
//
// Gaussian draws use plain Box-Muller over explicit uniform bits instead of
// std::normal_distribution, so the stream for a given seed is pinned by this
// file alone and tests can freeze expected values against it.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t bits() { return gen_(); }

  // uniform in [0, 1)
  double uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  // uniform in (0, 1]
  double uniform_pos() {
    return static_cast<double>((gen_() >> 11) + 1) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // inclusive bounds
  int uniform_int(int lo, int hi) {
    return lo + static_cast<int>(gen_() % static_cast<uint64_t>(hi - lo + 1));
  }

  bool bernoulli(double p) { return uniform() < p; }

  // standard normal, Box-Muller (two uniforms per draw, no caching)
  double gaussian() {
    double u1 = uniform_pos();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  double gaussian(double mean, double stddev) { return mean + stddev * gaussian(); }

 private:
  std::mt19937_64 gen_;
};

}  // namespace attnkit

#endif  // ATTNKIT_RNG_HPP
