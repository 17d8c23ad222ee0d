#pragma once

#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>

namespace pscc {

// Deterministic RNG. Distributions are implemented here rather than taken
// from <random> so that sequences do not depend on the standard library
// build. Streams derived via derive() are independent: parallel sample
// generation with per-sample streams reproduces serial generation.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0x9E3779B97F4A7C15ull) { state_ = splitmix(seed + 1); }

  static uint64_t splitmix(uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
  }

  uint64_t next_u64() {
    // xorshift64* step
    uint64_t x = state_;
    x ^= x >> 12;
    x ^= x << 25;
    x ^= x >> 27;
    state_ = x;
    return x * 0x2545F4914F6CDD1Dull;
  }

  Rng derive(uint64_t stream) const {
    Rng r;
    r.state_ = splitmix(state_ ^ splitmix(stream * 0xA24BAED4963EE407ull + 1));
    return r;
  }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  int64_t uniform_int(int64_t n) {
    return n <= 0 ? 0 : static_cast<int64_t>(next_u64() % static_cast<uint64_t>(n));
  }

  int64_t uniform_int(int64_t lo, int64_t hi_inclusive) {
    return lo + uniform_int(hi_inclusive - lo + 1);
  }

  // Standard normal via Box-Muller; the pair partner is cached.
  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 1e-300);
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    cached_ = r * std::sin(a);
    has_cached_ = true;
    return r * std::cos(a);
  }

  template <typename It>
  void shuffle(It first, It last) {
    int64_t n = static_cast<int64_t>(last - first);
    for (int64_t i = n - 1; i > 0; --i) {
      int64_t j = uniform_int(i + 1);
      std::swap(first[i], first[j]);
    }
  }

  // State serialization for checkpoints.
  std::string save_state() const {
    std::ostringstream os;
    os << state_ << " " << (has_cached_ ? 1 : 0) << " ";
    os.precision(17);
    os << cached_;
    return os.str();
  }

  void load_state(const std::string& s) {
    std::istringstream is(s);
    int hc = 0;
    is >> state_ >> hc >> cached_;
    has_cached_ = hc != 0;
  }

 private:
  uint64_t state_ = 0;
  bool has_cached_ = false;
  double cached_ = 0.0;
};

}  // namespace pscc
