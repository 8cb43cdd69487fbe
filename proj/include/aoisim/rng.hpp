#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace aoisim {

// Mixing step used to derive substream seeds. Mutates the state and
// returns the next mixed value (Steele/Lea splitmix64 constants).
inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Deterministic uniform generator. The engine is std::mt19937_64, whose
// raw output sequence is pinned by the C++ standard, and all mappings to
// doubles and to non-uniform variates are implemented here explicitly, so
// a given (seed, call sequence) produces the same draws on every platform
// and standard library. std::*_distribution is never used.
//
// Streams: environment randomness (arrivals, channel uniform) and
// policy-internal randomness must never share a generator, otherwise
// swapping the policy would reshuffle the environment. Use stream() with
// distinct stream ids to derive independent generators from one seed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  static Rng stream(std::uint64_t seed, std::uint64_t stream_id) {
    std::uint64_t s = seed ^ (0x9e3779b97f4a7c15ULL * (stream_id + 1));
    return Rng(splitmix64(s));
  }

  std::uint64_t next_u64() { return engine_(); }

  // uniform on [0,1), 53-bit resolution
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // uniform on (0,1); safe as a log/division argument
  double uniform_open() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  bool bernoulli(double p) { return uniform() < p; }

  // uniform integer in [0, n)
  int uniform_int(int n) {
    assert(n > 0);
    int v = static_cast<int>(uniform() * static_cast<double>(n));
    return v < n ? v : n - 1;
  }

  // standard normal via Box-Muller (two uniforms per draw, no caching)
  double normal() {
    const double u1 = uniform_open();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  // Gamma(shape, 1) for shape >= 1, Marsaglia-Tsang squeeze method
  double gamma(double shape) {
    assert(shape >= 1.0);
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x, v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = uniform_open();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  // Beta(a, b) for a, b >= 1 (posterior parameters are integer counts >= 1)
  double beta(double a, double b) {
    const double x = gamma(a);
    const double y = gamma(b);
    return x / (x + y);
  }

 private:
  std::mt19937_64 engine_;
};

// Stream ids used by the simulator. Policy streams are separate from the
// environment stream so that learner randomness never perturbs arrivals
// or channel states.
enum : std::uint64_t {
  kEnvStream = 0,
  kLearnerPolicyStream = 1,
  kGenieEnvStream = 2,
};

}  // namespace aoisim
