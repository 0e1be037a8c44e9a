#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace copyseq {

// Deterministic RNG wrapper. All sampling goes through the helpers below
// instead of std::uniform_*_distribution, whose output is
// implementation-defined; this keeps generated datasets and training runs
// byte-identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t u64() { return engine_(); }

  // Uniform integer in [0, n). n must be > 0.
  std::size_t index(std::size_t n) { return static_cast<std::size_t>(u64() % n); }

  // Uniform integer in [lo, hi] inclusive.
  long range(long lo, long hi) { return lo + static_cast<long>(index(static_cast<std::size_t>(hi - lo + 1))); }

  // Uniform real in [0, 1) with 53 random bits.
  double real() { return static_cast<double>(u64() >> 11) * (1.0 / 9007199254740992.0); }

  double uniform(double lo, double hi) { return lo + (hi - lo) * real(); }

  bool coin() { return (u64() & 1u) != 0; }

  std::mt19937_64& engine() { return engine_; }
  const std::mt19937_64& engine() const { return engine_; }

 private:
  std::mt19937_64 engine_;
};

// Derives an independent stream seed from a base seed and a tag (FNV-1a over
// the tag, mixed with splitmix64). Stable across platforms.
inline std::uint64_t derive_seed(std::uint64_t base, std::string_view tag, std::uint64_t salt = 0) {
  std::uint64_t h = 1469598103934665603ull;
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  std::uint64_t z = base ^ h ^ (salt * 0x9e3779b97f4a7c15ull);
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// In-place Fisher-Yates with Rng::index (std::shuffle is implementation-defined).
template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::size_t j = rng.index(i);
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace copyseq
