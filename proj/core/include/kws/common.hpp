// Shared error type, deterministic RNG, and integer rounding helpers.
#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace kws {

enum class ErrorKind {
  Format,              // malformed input file
  Unsupported,         // recognized container, unsupported encoding
  Shape,               // dimension/length contract violation
  DegenerateMix,       // zero-power noise segment
  Calibration,         // unusable calibration batch
  IncompleteArtifacts, // a class is missing from the batch
  InsufficientData,    // too few samples per class
  Dataset,             // dataset root missing or empty
  State,               // snapshot/resume problem
  Usage,               // bad CLI/config value
};

class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& msg) {
  throw Error(kind, msg);
}

inline int64_t round_half_away(double x) {
  return static_cast<int64_t>(x >= 0.0 ? std::floor(x + 0.5) : std::ceil(x - 0.5));
}

inline int16_t sat_i16(int64_t v) {
  if (v > 32767) return 32767;
  if (v < -32768) return -32768;
  return static_cast<int16_t>(v);
}

inline int8_t sat_i8(int64_t v) {
  if (v > 127) return 127;
  if (v < -128) return -128;
  return static_cast<int8_t>(v);
}

// Deterministic RNG. All mappings from raw mt19937 words are spelled out here
// so streams do not depend on libstdc++'s distribution implementations.
class SeededRng {
public:
  explicit SeededRng(uint64_t seed)
      : seed_(seed), gen_(static_cast<uint32_t>(seed ^ (seed >> 32) ^ 0x9e3779b9u)) {}

  uint64_t seed() const noexcept { return seed_; }

  uint32_t next_u32() { return gen_(); }

  // [0, 1)
  double uniform() { return next_u32() * (1.0 / 4294967296.0); }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // uniform integer in [0, n)
  uint32_t below(uint32_t n) { return n == 0 ? 0 : next_u32() % n; }

  // standard normal via Box-Muller
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 1.0 - uniform(); // (0, 1]
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = below(static_cast<uint32_t>(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // Independent substream keyed by `stream`; splitmix64 over (seed, stream).
  SeededRng fork(uint64_t stream) const {
    uint64_t z = seed_ + 0x9e3779b97f4a7c15ull * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return SeededRng(z ^ (z >> 31));
  }

private:
  uint64_t seed_;
  std::mt19937 gen_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

} // namespace kws
