#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace voxenc::rng {

// splitmix64 finalizer, used to derive substream keys from (seed, ids).
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
// A (key, counter) pair maps to 4 output words through 10 rounds; streams
// never share state, so draws are independent of evaluation order.
class Philox {
 public:
  explicit Philox(std::uint64_t key) : k0_(static_cast<std::uint32_t>(key)),
                                       k1_(static_cast<std::uint32_t>(key >> 32)) {}

  std::array<std::uint32_t, 4> block(std::uint64_t counter) const {
    return rounds({static_cast<std::uint32_t>(counter),
                   static_cast<std::uint32_t>(counter >> 32), 0u, 0u},
                  {k0_, k1_});
  }

  // The raw 10-round core over a full 128-bit counter and 64-bit key.
  static std::array<std::uint32_t, 4> rounds(std::array<std::uint32_t, 4> x,
                                             std::array<std::uint32_t, 2> k) {
    for (int round = 0; round < 10; ++round) {
      const std::uint64_t p0 = kMul0 * static_cast<std::uint64_t>(x[0]);
      const std::uint64_t p1 = kMul1 * static_cast<std::uint64_t>(x[2]);
      const std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32);
      const std::uint32_t lo0 = static_cast<std::uint32_t>(p0);
      const std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32);
      const std::uint32_t lo1 = static_cast<std::uint32_t>(p1);
      x = {hi1 ^ x[1] ^ k[0], lo1, hi0 ^ x[3] ^ k[1], lo0};
      k[0] += kWeyl0;
      k[1] += kWeyl1;
    }
    return x;
  }

 private:
  static constexpr std::uint64_t kMul0 = 0xD2511F53ull;
  static constexpr std::uint64_t kMul1 = 0xCD9E8D57ull;
  static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

  std::uint32_t k0_, k1_;
};

// Substream identifiers for the synthetic-study generator. Streams keyed by
// (seed, subject, run, stream) so per-run generation can run in any order.
enum class Stream : std::uint64_t {
  events = 1,
  activations = 2,
  noise = 3,
  beta = 4,
  signal_set = 5,
  effect_dir = 6,
  generic = 7,
};

// Sequential draw interface over one Philox substream.
class Substream {
 public:
  Substream(std::uint64_t seed, std::uint64_t subject, std::uint64_t run, Stream stream)
      : philox_(derive_key(seed, subject, run, static_cast<std::uint64_t>(stream))) {}

  explicit Substream(std::uint64_t key) : philox_(key) {}

  std::uint32_t next_u32() {
    if (pos_ == 4) {
      buf_ = philox_.block(counter_++);
      pos_ = 0;
    }
    return buf_[pos_++];
  }

  std::uint64_t next_u64() {
    const std::uint64_t lo = next_u32();
    const std::uint64_t hi = next_u32();
    return (hi << 32) | lo;
  }

  // Uniform double in [0, 1), 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller on explicit uniforms; implementation-
  // independent so outputs are stable across platforms and stdlibs.
  double normal() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * M_PI * u2;
    cached_ = r * std::sin(theta);
    have_cached_ = true;
    return r * std::cos(theta);
  }

  // Integer in [0, n), rejection-free modulo bias is negligible for n << 2^64
  // but we keep it exact with rejection sampling anyway.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t v;
    do {
      v = next_u64();
    } while (v >= limit);
    return v % n;
  }

  static std::uint64_t derive_key(std::uint64_t seed, std::uint64_t subject, std::uint64_t run,
                                  std::uint64_t stream) {
    std::uint64_t k = mix64(seed);
    k = mix64(k ^ mix64(subject + 0x53756200ull));
    k = mix64(k ^ mix64(run + 0x52756E00ull));
    k = mix64(k ^ mix64(stream + 0x53747200ull));
    return k;
  }

 private:
  Philox philox_;
  std::uint64_t counter_ = 0;
  std::array<std::uint32_t, 4> buf_{};
  int pos_ = 4;
  double cached_ = 0.0;
  bool have_cached_ = false;
};

}  // namespace voxenc::rng
