#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace tfnk {

// Deterministic RNG used everywhere seeds matter. All value mappings are done
// by hand so results do not depend on libstdc++'s distribution internals.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(mix32(seed)) {}

  uint32_t next_u32() { return gen_(); }

  // [0, 1)
  double uniform() { return next_u32() * (1.0 / 4294967296.0); }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // inclusive range, lo <= hi
  int uniform_int(int lo, int hi) {
    uint64_t span = static_cast<uint64_t>(hi) - static_cast<uint64_t>(lo) + 1;
    return lo + static_cast<int>((static_cast<uint64_t>(next_u32()) * span) >> 32);
  }

  // standard normal via Box-Muller, pair cached
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    while (u1 <= 0.0) u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * M_PI * u2);
    have_spare_ = true;
    return r * std::cos(2.0 * M_PI * u2);
  }

  // Fisher-Yates, descending
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(uniform_int(0, static_cast<int>(i) - 1));
      std::swap(v[i - 1], v[j]);
    }
  }

  static uint32_t mix32(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    x = x ^ (x >> 31);
    return static_cast<uint32_t>(x ^ (x >> 32));
  }

 private:
  std::mt19937 gen_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

// Bit-reversed unit value in [0, 1): consecutive seeds map to a
// low-discrepancy sequence, which keeps per-scene categorical draws
// well balanced across a batch of generated scenes.
inline double bit_reversed_unit(uint32_t x) {
  x = ((x & 0x55555555u) << 1) | ((x >> 1) & 0x55555555u);
  x = ((x & 0x33333333u) << 2) | ((x >> 2) & 0x33333333u);
  x = ((x & 0x0f0f0f0fu) << 4) | ((x >> 4) & 0x0f0f0f0fu);
  x = (x << 24) | ((x & 0xff00u) << 8) | ((x >> 8) & 0xff00u) | (x >> 24);
  return x * (1.0 / 4294967296.0);
}

}  // namespace tfnk
