#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace mz {

// Deterministic, platform-independent PRNG (xoshiro256** seeded via splitmix64).
// The standard <random> distributions are implementation-defined, which breaks
// bit-reproducibility of runs; everything here is hand-rolled instead.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) {
    uint64_t x = seed;
    for (auto& word : state_) word = splitmix64(x);
  }

  uint64_t next_u64() {
    const uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in (0, 1); safe as a log argument.
  double uniform_positive() {
    double u = uniform();
    return u > 0.0 ? u : 0x1.0p-53;
  }

  // Uniform integer in [lo, hi], both inclusive.
  int uniform_int(int lo, int hi) {
    const uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(next_u64() % span);
  }

  // Index in [0, n).
  size_t index(size_t n) { return static_cast<size_t>(next_u64() % n); }

  double normal() {
    const double u1 = uniform_positive();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  // Standard Gumbel(0, 1) draw.
  double gumbel() { return -std::log(-std::log(uniform_positive())); }

  // Marsaglia-Tsang; handles alpha < 1 via the boost identity.
  double gamma(double alpha) {
    if (alpha < 1.0) {
      const double u = uniform_positive();
      return gamma(alpha + 1.0) * std::pow(u, 1.0 / alpha);
    }
    const double d = alpha - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x, v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = uniform_positive();
      if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) return d * v;
    }
  }

  // Symmetric Dirichlet over k components.
  std::vector<double> dirichlet(double alpha, size_t k) {
    std::vector<double> out(k);
    double sum = 0.0;
    for (auto& g : out) {
      g = gamma(alpha);
      sum += g;
    }
    for (auto& g : out) g /= sum;
    return out;
  }

  // Categorical draw from an (unnormalized is fine) nonnegative weight vector.
  size_t categorical(const std::vector<double>& weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    double r = uniform() * total;
    for (size_t i = 0; i < weights.size(); ++i) {
      r -= weights[i];
      if (r < 0.0) return i;
    }
    return weights.size() - 1;
  }

  static uint64_t splitmix64(uint64_t& x) {
    uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

 private:
  static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  uint64_t state_[4];
};

// Stable seed derivation so that every worker, game, batch and eval pass draws
// from its own stream, independent of thread scheduling and resume points.
inline uint64_t derive_seed(uint64_t master, uint64_t stream, uint64_t a = 0, uint64_t b = 0) {
  uint64_t x = master;
  uint64_t h = Rng::splitmix64(x);
  x = h ^ (stream * 0x9e3779b97f4a7c15ULL);
  h = Rng::splitmix64(x);
  x = h ^ (a * 0xc2b2ae3d27d4eb4fULL);
  h = Rng::splitmix64(x);
  x = h ^ (b * 0x165667b19e3779f9ULL);
  return Rng::splitmix64(x);
}

}  // namespace mz
