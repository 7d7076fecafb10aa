#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Core>

namespace srlm {

// Seeded random stream with deterministic substream derivation. Substreams
// are keyed off the parent seed (not the draw position), so chains indexed by
// (example, sample) produce identical draws regardless of evaluation order or
// thread scheduling. Normal draws use Box-Muller on top of mt19937_64 so the
// byte stream does not depend on the standard library's normal_distribution.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : key_(seed), eng_(mix(seed)) {}

  // Derive an independent stream for (a, b) under this stream's key.
  RngStream child(std::uint64_t a, std::uint64_t b = 0) const {
    std::uint64_t k = key_;
    k = mix(k ^ mix(a + 0x9e3779b97f4a7c15ULL));
    k = mix(k ^ mix(b + 0xbf58476d1ce4e5b9ULL));
    return RngStream(k);
  }

  std::uint64_t next_u64() { return eng_(); }

  // Uniform in [0, 1); 53-bit resolution.
  double uniform() {
    return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
  }

  // Uniform integer in [0, n).
  int uniform_int(int n) {
    return static_cast<int>(eng_() % static_cast<std::uint64_t>(n));
  }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  Eigen::VectorXd normal_vec(int d) {
    Eigen::VectorXd v(d);
    for (int i = 0; i < d; ++i) v[i] = normal();
    return v;
  }

  std::uint64_t key() const { return key_; }

 private:
  static std::uint64_t mix(std::uint64_t x) {
    // splitmix64 finalizer
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

  std::uint64_t key_;
  std::mt19937_64 eng_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace srlm
