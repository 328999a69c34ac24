#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <vector>

namespace dne {

inline constexpr std::uint64_t kGoldenGamma = 0x9E3779B97F4A7C15ull;

// Standard splitmix64 finalizer: add the golden-ratio constant, then two
// xor-shift-multiply rounds and a final xor-shift.
inline std::uint64_t splitmix64_mix(std::uint64_t x) {
  std::uint64_t z = x + kGoldenGamma;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    const std::uint64_t r = splitmix64_mix(state_);
    state_ += kGoldenGamma;
    return r;
  }

 private:
  std::uint64_t state_;
};

// xoshiro256** (Blackman/Vigna), state expanded from the seed via splitmix64.
class Xoshiro256SS {
 public:
  explicit Xoshiro256SS(std::uint64_t seed) {
    SplitMix64 sm(seed);
    for (auto& s : s_) s = sm.next();
  }

  std::uint64_t next() {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // uniform double in [0,1), 53 significant bits
  double next_unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // uniform double in (0,1]; never 0, so log() of it is finite
  double next_unit_pos() {
    return static_cast<double>((next() >> 11) + 1) * 0x1.0p-53;
  }

  // uniform double strictly inside (0,1)
  double next_unit_open() {
    return (static_cast<double>(next() >> 11) + 0.5) * 0x1.0p-53;
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  std::uint64_t s_[4];
};

// Per-child mutation seed: a pure mix of (master seed, generation, child
// index), stable across machines so any worker can regenerate any child.
inline std::uint64_t derive_child_seed(std::uint64_t master_seed,
                                       std::uint64_t generation,
                                       std::uint64_t child_index) {
  return splitmix64_mix(master_seed ^
                        splitmix64_mix(generation * kGoldenGamma + child_index));
}

struct GaussPair {
  float z0 = 0.0f;
  float z1 = 0.0f;
};

// Box-Muller transform of one uniform pair. The transform runs in float32:
// outputs are float32 and the trig cost dominates noise generation.
inline GaussPair box_muller(double u1, double u2) {
  const float r = std::sqrt(-2.0f * std::log(static_cast<float>(u1)));
  const float a = static_cast<float>(2.0 * std::numbers::pi * u2);
  float s;
  float c;
#if defined(__GLIBC__)
  ::sincosf(a, &s, &c);
#else
  s = std::sin(a);
  c = std::cos(a);
#endif
  return {r * c, r * s};
}

// Deterministic stream of standard-normal float32 values: xoshiro256**
// uniforms consumed in consecutive pairs through box_muller.
class GaussianStream {
 public:
  explicit GaussianStream(std::uint64_t seed) : rng_(seed) {}

  float next() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const GaussPair p = next_pair();
    spare_ = p.z1;
    have_spare_ = true;
    return p.z0;
  }

  // Identical to calling next() out.size() times.
  void fill(std::span<float> out) {
    std::size_t i = 0;
    if (have_spare_ && i < out.size()) {
      out[i++] = spare_;
      have_spare_ = false;
    }
    for (; i + 1 < out.size(); i += 2) {
      const GaussPair p = next_pair();
      out[i] = p.z0;
      out[i + 1] = p.z1;
    }
    if (i < out.size()) {
      const GaussPair p = next_pair();
      out[i] = p.z0;
      spare_ = p.z1;
      have_spare_ = true;
    }
  }

 private:
  GaussPair next_pair() {
    const double u1 = rng_.next_unit_pos();
    const double u2 = rng_.next_unit_pos();
    return box_muller(u1, u2);
  }

  Xoshiro256SS rng_;
  float spare_ = 0.0f;
  bool have_spare_ = false;
};

// The mutation vector of one child, regenerated on demand from its seed.
inline std::vector<float> sample_noise(std::uint64_t seed, std::size_t len) {
  std::vector<float> out(len);
  GaussianStream g(seed);
  g.fill(out);
  return out;
}

}  // namespace dne
