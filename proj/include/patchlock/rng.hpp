#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace patchlock {

// Deterministic random stream used everywhere reproducibility matters.
//
// The mapping is fixed so that independent implementations can agree on it:
//   - state: std::mt19937_64 seeded via std::seed_seq over the given 32-bit
//     words (both engines are fully specified by the C++ standard)
//   - uniform double in [0,1): (next_u64() >> 11) * 2^-53
//   - standard normals: Box-Muller on consecutive uniforms u1, u2:
//       r = sqrt(-2 ln(1 - u1)), theta = 2*pi*u2
//       first value r*cos(theta), second r*sin(theta)
// Streams for unrelated purposes are separated by a domain tag word.
class RandomStream {
 public:
  explicit RandomStream(const std::vector<uint32_t>& seed_words) {
    std::seed_seq seq(seed_words.begin(), seed_words.end());
    engine_.seed(seq);
  }

  uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1), 53 random mantissa bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n); n must be positive. Uses plain modulo, which
  // is deterministic and whose bias is irrelevant at our stream lengths.
  uint64_t below(uint64_t n) { return next_u64() % n; }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(1.0 - u1));
    const double theta = 2.0 * kPi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

 private:
  static constexpr double kPi = 3.141592653589793238462643383279502884;
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// Domain tags keeping unrelated streams apart even under equal seeds.
namespace rng_domain {
constexpr uint32_t kKeyExpansion = 0x4b455831;   // "KEX1"
constexpr uint32_t kKeyFromSeed = 0x4b534431;    // "KSD1"
constexpr uint32_t kModelInit = 0x4d494e31;      // "MIN1"
constexpr uint32_t kBatchSampling = 0x42415431;  // "BAT1"
constexpr uint32_t kDataset = 0x44415431;        // "DAT1"
constexpr uint32_t kWrongKeys = 0x574b4531;      // "WKE1"
}  // namespace rng_domain

inline std::vector<uint32_t> seed_words_from_u64(uint64_t seed, uint32_t domain) {
  return {static_cast<uint32_t>(seed & 0xffffffffu),
          static_cast<uint32_t>(seed >> 32), domain};
}

}  // namespace patchlock
