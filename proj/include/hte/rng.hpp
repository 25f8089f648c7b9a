#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace hte {

// Counter-based deterministic generator. Every draw is a hash of
// (seed, stream, counter), so child streams split by label produce the
// same sequence regardless of what other modules have drawn.
class RngState {
 public:
  explicit RngState(uint64_t seed, uint64_t stream = 0)
      : seed_(seed), stream_(stream) {
    key_ = mix(mix(seed_ + 0x9e3779b97f4a7c15ull) ^ mix(stream_ + 0x3c6ef372fe94f82bull));
  }

  // Derive an independent child stream from a text label.
  RngState split(std::string_view label) const {
    uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a
    for (char c : label) {
      h ^= static_cast<unsigned char>(c);
      h *= 0x100000001b3ull;
    }
    return RngState(seed_, mix(stream_ ^ h));
  }

  uint64_t next_u64() {
    ++counter_;
    return mix(key_ + counter_ * 0x9e3779b97f4a7c15ull);
  }

  // Uniform in the open interval (0, 1).
  double uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * (1.0 / 9007199254740992.0);
  }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  double exponential(double rate) { return -std::log(uniform()) / rate; }

  bool bernoulli(double p) { return uniform() < p; }

  // Uniform index in [0, n).
  uint64_t uniform_index(uint64_t n) { return next_u64() % n; }

  uint64_t seed() const { return seed_; }
  uint64_t stream() const { return stream_; }

 private:
  static uint64_t mix(uint64_t z) {
    z ^= z >> 30;
    z *= 0xbf58476d1ce4e5b9ull;
    z ^= z >> 27;
    z *= 0x94d049bb133111ebull;
    z ^= z >> 31;
    return z;
  }

  uint64_t seed_;
  uint64_t stream_;
  uint64_t key_;
  uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace hte
