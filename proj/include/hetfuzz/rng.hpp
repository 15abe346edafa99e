#pragma once

#include <cstdint>

namespace hetfuzz {

// Deterministic PRNG used everywhere randomness is needed. All campaign
// randomness flows from one user-supplied seed through split(); the stream
// produced by a given seed is identical across platforms and builds, which
// std::uniform_int_distribution does not guarantee.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    // splitmix64 step
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform value in [0, n). n == 0 is treated as 1.
  std::uint64_t below(std::uint64_t n) {
    if (n <= 1) return 0;
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next()) * n) >> 64);
  }

  // Uniform value in [lo, hi] inclusive.
  std::uint64_t between(std::uint64_t lo, std::uint64_t hi) {
    return lo + below(hi - lo + 1);
  }

  bool chance(std::uint64_t num, std::uint64_t den) { return below(den) < num; }

  // Derive an independent child stream. Children with distinct tags never
  // correlate with the parent or each other.
  Rng split(std::uint64_t tag) {
    std::uint64_t s = next();
    return Rng(s ^ (tag * 0x9e3779b97f4a7c15ULL) ^ 0xd1b54a32d192ed03ULL);
  }

 private:
  std::uint64_t state_;
};

}  // namespace hetfuzz
