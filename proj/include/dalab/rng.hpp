#ifndef DALAB_RNG_HPP
#define DALAB_RNG_HPP

#include <cstdint>
#include <cmath>
#include <vector>

namespace dalab {

// Counter-based deterministic generator (SplitMix64). The stream depends only
// on the 64-bit seed and the number of draws, so identical seeds reproduce
// identical streams across runs and platforms.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // uniform in [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller; one fresh pair per call keeps the draw count shape-independent.
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  bool bernoulli(double p) { return uniform() < p; }

  uint64_t below(uint64_t n) { return n == 0 ? 0 : next_u64() % n; }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // Independent child stream; distinct tags give decorrelated streams.
  Rng fork(uint64_t tag) const {
    Rng r(state_ ^ (0x6a09e667f3bcc909ULL + tag * 0x8f1bbcdcbfa53e0bULL));
    r.next_u64();
    return r;
  }

 private:
  uint64_t state_;
};

}  // namespace dalab

#endif
