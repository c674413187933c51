#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <utility>

namespace unetkit {

// All randomness in the toolkit funnels through this class. mt19937_64 has a
// standard-mandated output sequence, and the distributions below are
// hand-rolled because the std ones are implementation-defined; together that
// makes every seeded run reproducible across compilers and platforms.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform index in [0, n). n must be >= 1.
  std::size_t index(std::size_t n) {
    return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n;
  }

  // Standard normal via Box-Muller; caches the spare draw.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    constexpr double two_pi = 6.283185307179586476925286766559;
    double u1 = 1.0 - uniform();  // (0, 1], log-safe
    double u2 = uniform();
    double radius = std::sqrt(-2.0 * std::log(u1));
    double angle = two_pi * u2;
    spare_ = radius * std::sin(angle);
    have_spare_ = true;
    return radius * std::cos(angle);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Fisher-Yates, deterministic for a given seed.
  template <typename Container>
  void shuffle(Container& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[index(i)]);
    }
  }

 private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace unetkit
