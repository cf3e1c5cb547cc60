#include "patchlock/key.hpp"

#include <fstream>
#include <random>
#include <sstream>
#include <vector>

#include "patchlock/rng.hpp"

namespace patchlock {

namespace {

constexpr char kKeyMagic[4] = {'P', 'L', 'K', '1'};

int hex_digit(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

// Seed words for key expansion: the key as eight little-endian u32 words,
// the domain tag, and the attempt counter.
std::vector<uint32_t> expansion_seed(const SecretKey& key, uint32_t attempt) {
  std::vector<uint32_t> words;
  words.reserve(10);
  for (int w = 0; w < 8; ++w) {
    uint32_t v = 0;
    for (int b = 3; b >= 0; --b) v = (v << 8) | key.bytes[w * 4 + b];
    words.push_back(v);
  }
  words.push_back(rng_domain::kKeyExpansion);
  words.push_back(attempt);
  return words;
}

}  // namespace

std::string SecretKey::to_hex() const {
  static const char* digits = "0123456789abcdef";
  std::string out;
  out.reserve(64);
  for (uint8_t b : bytes) {
    out.push_back(digits[b >> 4]);
    out.push_back(digits[b & 0xf]);
  }
  return out;
}

SecretKey SecretKey::from_hex(const std::string& hex) {
  if (hex.size() != 64) {
    std::ostringstream os;
    os << "key hex must be 64 characters, got " << hex.size();
    throw FormatError(os.str());
  }
  SecretKey key;
  for (int i = 0; i < 32; ++i) {
    const int hi = hex_digit(hex[2 * i]);
    const int lo = hex_digit(hex[2 * i + 1]);
    if (hi < 0 || lo < 0) {
      throw FormatError("key hex contains a non-hex character");
    }
    key.bytes[i] = static_cast<uint8_t>((hi << 4) | lo);
  }
  return key;
}

SecretKey generate_key() {
  SecretKey key;
  try {
    std::random_device rd;
    for (int w = 0; w < 8; ++w) {
      const uint32_t v = rd();
      for (int b = 0; b < 4; ++b) key.bytes[w * 4 + b] = static_cast<uint8_t>(v >> (8 * b));
    }
  } catch (const std::exception& e) {
    throw EnvironmentError(std::string("entropy source unavailable: ") + e.what());
  }
  return key;
}

SecretKey key_from_seed(uint64_t seed) {
  RandomStream stream(seed_words_from_u64(seed, rng_domain::kKeyFromSeed));
  SecretKey key;
  for (int w = 0; w < 4; ++w) {
    const uint64_t v = stream.next_u64();
    for (int b = 0; b < 8; ++b) key.bytes[w * 8 + b] = static_cast<uint8_t>(v >> (8 * b));
  }
  return key;
}

KeyMaterial derive_matrices(const SecretKey& key, int patch_size, int channels) {
  if (patch_size < 1 || channels < 1) {
    throw InvalidArgument("patch_size and channels must be >= 1");
  }
  const long side_long = static_cast<long>(patch_size) * patch_size * channels;
  if (side_long > kMaxMatrixSide) {
    std::ostringstream os;
    os << "matrix side p^2*c = " << side_long << " exceeds limit " << kMaxMatrixSide;
    throw InvalidArgument(os.str());
  }
  const int side = static_cast<int>(side_long);

  for (uint32_t attempt = 0; attempt < kMaxDeriveAttempts; ++attempt) {
    RandomStream stream(expansion_seed(key, attempt));
    Matrix enc(side, side);
    for (double& v : enc.data) v = stream.normal();

    Matrix inv;
    try {
      inv = inverse(enc);
    } catch (const SingularError&) {
      continue;  // re-draw with the next attempt counter
    }
    const double kappa = norm_1(enc) * norm_1(inv);
    if (kappa > kMaxKappa) continue;
    if (identity_residual(enc, inv) > kMaxInverseResidual) continue;
    return KeyMaterial{std::move(enc), std::move(inv), patch_size, channels, kappa};
  }
  std::ostringstream os;
  os << "key expansion failed after " << kMaxDeriveAttempts
     << " attempts (every draw singular or ill-conditioned)";
  throw GenerationError(os.str());
}

void write_key(const std::string& path, const SecretKey& key) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open key file for writing: " + path);
  out.write(kKeyMagic, 4);
  out.write(reinterpret_cast<const char*>(key.bytes.data()), key.bytes.size());
  if (!out) throw IoError("failed writing key file: " + path);
}

SecretKey read_key(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open key file: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::string(magic, 4) != std::string(kKeyMagic, 4)) {
    std::ostringstream os;
    os << "bad key file magic: expected \"PLK1\", found \""
       << std::string(magic, in ? 4 : in.gcount()) << "\" in " << path;
    throw FormatError(os.str());
  }
  SecretKey key;
  in.read(reinterpret_cast<char*>(key.bytes.data()), key.bytes.size());
  if (!in) throw FormatError("key file truncated: " + path);
  return key;
}

}  // namespace patchlock
