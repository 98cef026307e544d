#pragma once

#include <cstdint>
#include <vector>

namespace gm {

// splitmix64: the single PRNG used everywhere so runs are reproducible
// from one u64 seed. Deliberately tiny; statistical quality is plenty
// for augmentation jitter and sampling.
class Prng {
 public:
  explicit Prng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // [0, 1)
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // [0, n)
  uint64_t uniform_int(uint64_t n) { return n ? next_u64() % n : 0; }

  // [lo, hi] inclusive
  int64_t uniform_int(int64_t lo, int64_t hi) {
    return lo + static_cast<int64_t>(uniform_int(static_cast<uint64_t>(hi - lo + 1)));
  }

  bool coin(double p) { return uniform() < p; }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = uniform_int(static_cast<uint64_t>(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // derive an independent stream from this seed and a salt
  static uint64_t mix(uint64_t a, uint64_t b) {
    Prng p(a ^ (0x9e3779b97f4a7c15ull + (b << 1)));
    p.next_u64();
    return p.next_u64() ^ b;
  }

 private:
  uint64_t state_;
};

// FNV-1a over bytes; used for checkpoint checksums and config fingerprints.
inline uint64_t fnv1a(const void* data, size_t n, uint64_t h = 14695981039346656037ull) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace gm
