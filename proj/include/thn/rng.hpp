#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace thn {

// splitmix64-based PRNG. Self-contained so that streams are bit-identical
// across platforms and standard-library versions. Every source of randomness
// in the project derives from one master seed through named sub-streams.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), state_(seed) {}

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ull;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // uniform in [0, 1)
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // inclusive range
  int uniform_int(int lo, int hi) {
    std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(next_u64() % span);
  }

  double gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    while (u1 == 0.0) u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Independent child stream identified by name. Derivation uses the
  // original seed, not the current state, so stream layout is stable no
  // matter how much of the parent has been consumed.
  Rng stream(std::string_view name) const {
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (char ch : name) {
      h ^= static_cast<unsigned char>(ch);
      h *= 0x100000001B3ull;
    }
    Rng child(seed_ ^ h);
    child.next_u64();  // decorrelate adjacent seeds
    return child;
  }

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace thn
