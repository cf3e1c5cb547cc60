#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "patchlock/matrix.hpp"

namespace patchlock {

// 256-bit secret key; the seed from which the encryption matrix is expanded.
struct SecretKey {
  std::array<uint8_t, 32> bytes{};

  bool operator==(const SecretKey&) const = default;

  std::string to_hex() const;
  static SecretKey from_hex(const std::string& hex);  // 64 hex chars
};

// Encryption matrix, its inverse, and the geometry they were derived for.
struct KeyMaterial {
  Matrix enc;      // (p^2 c) x (p^2 c), invertible
  Matrix inv;      // enc^-1
  int patch_size;  // p
  int channels;    // c
  double kappa;    // 1-norm condition number of enc
};

// Fresh key from the OS entropy source.
SecretKey generate_key();

// Deterministic key from a 64-bit seed; for scripted, reproducible runs.
SecretKey key_from_seed(uint64_t seed);

// Expand a key into the encryption matrix and its inverse. Entries are drawn
// i.i.d. standard normal from the keyed stream; draws that come out singular,
// with kappa > 1e6, or with inverse residual above 1e-8 are rejected and the
// stream is re-seeded with an incremented attempt counter.
KeyMaterial derive_matrices(const SecretKey& key, int patch_size, int channels);

// Acceptance bounds for generated material.
constexpr double kMaxKappa = 1e6;
constexpr double kMaxInverseResidual = 1e-8;
constexpr int kMaxDeriveAttempts = 8;
constexpr int kMaxMatrixSide = 4096;

// Key file: magic "PLK1" followed by the 32 seed bytes.
void write_key(const std::string& path, const SecretKey& key);
SecretKey read_key(const std::string& path);

}  // namespace patchlock
