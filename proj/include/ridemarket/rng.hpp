#pragma once

#include <cstdint>
#include <initializer_list>
#include <limits>
#include <random>

namespace ridemarket {

inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// Counter-based stream keyed by a path such as (seed, episode, location, stage).
class KeyedStream {
 public:
  using result_type = std::uint64_t;

  explicit KeyedStream(std::uint64_t seed, std::initializer_list<std::uint64_t> path = {}) : key_(mix64(seed)) {
    for (auto p : path) key_ = mix64(key_ ^ mix64(p + 0x632BE59BD9B4E019ull));
  }

  KeyedStream child(std::initializer_list<std::uint64_t> path) const {
    KeyedStream s(0);
    s.key_ = key_;
    for (auto p : path) s.key_ = mix64(s.key_ ^ mix64(p + 0x632BE59BD9B4E019ull));
    return s;
  }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
  result_type operator()() { return mix64(key_ + mix64(counter_++)); }

  // [0, 1)
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  std::uint64_t below(std::uint64_t n) {
    if (n <= 1) return 0;
    std::uint64_t limit = max() - max() % n;
    for (;;) {
      std::uint64_t v = (*this)();
      if (v < limit) return v % n;
    }
  }

  long binomial(long n, double p) {
    if (n <= 0 || p <= 0) return 0;
    if (p >= 1) return n;
    return std::binomial_distribution<long>(n, p)(*this);
  }
  long poisson(double mean) {
    if (mean <= 0) return 0;
    return std::poisson_distribution<long>(mean)(*this);
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace ridemarket
