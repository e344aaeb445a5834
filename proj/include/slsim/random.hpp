#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace slsim {

/// Named random streams derived from one master seed.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the
/// standard. The distribution transforms below are written out by hand
/// because the std:: distributions are implementation-defined, and runs
/// must reproduce bit-for-bit on any host.
class RandomStream {
 public:
  RandomStream() : engine_(0) {}
  explicit RandomStream(std::uint64_t seed) : engine_(seed) {}

  /// Stream `name`/`index` of the master seed. Distinct names or indices
  /// give statistically independent streams.
  static RandomStream derive(std::uint64_t master_seed, std::string_view name,
                             std::uint64_t index = 0) {
    std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
    for (unsigned char c : name) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    std::uint64_t state = master_seed ^ h;
    std::uint64_t s = splitmix(state);
    s ^= splitmix(state) + index * 0x9e3779b97f4a7c15ULL;
    return RandomStream(splitmix(s));
  }

  std::uint64_t next() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Exponential with the given rate (events per unit).
  double exponential(double rate) { return -std::log1p(-uniform()) / rate; }

  bool bernoulli(double p) { return uniform() < p; }

  /// Uniform integer in [0, n). Lemire's multiply-shift with rejection.
  std::uint64_t index(std::uint64_t n) {
    unsigned __int128 m = static_cast<unsigned __int128>(engine_()) * n;
    auto low = static_cast<std::uint64_t>(m);
    if (low < n) {
      const std::uint64_t threshold = (0 - n) % n;
      while (low < threshold) {
        m = static_cast<unsigned __int128>(engine_()) * n;
        low = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

 private:
  static std::uint64_t splitmix(std::uint64_t& x) {
    std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::mt19937_64 engine_;
};

}  // namespace slsim
