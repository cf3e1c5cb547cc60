#pragma once

// Little-endian primitives shared by the binary file formats.

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>

#include "patchlock/error.hpp"

namespace patchlock::binio {

inline void write_u32(std::ostream& out, uint32_t v) {
  char buf[4];
  for (int i = 0; i < 4; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(buf, 4);
}

inline void write_f64(std::ostream& out, double v) {
  const uint64_t bits = std::bit_cast<uint64_t>(v);
  char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
  out.write(buf, 8);
}

inline uint32_t read_u32(std::istream& in, const std::string& context) {
  unsigned char buf[4];
  in.read(reinterpret_cast<char*>(buf), 4);
  if (!in) throw FormatError("truncated file while reading " + context);
  uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | buf[i];
  return v;
}

inline double read_f64(std::istream& in, const std::string& context) {
  unsigned char buf[8];
  in.read(reinterpret_cast<char*>(buf), 8);
  if (!in) throw FormatError("truncated file while reading " + context);
  uint64_t bits = 0;
  for (int i = 7; i >= 0; --i) bits = (bits << 8) | buf[i];
  return std::bit_cast<double>(bits);
}

// Reads and checks a 4-byte magic. Errors name both the expected and the
// found bytes.
inline void expect_magic(std::istream& in, const char* expected, const std::string& context) {
  char found[4] = {0, 0, 0, 0};
  in.read(found, 4);
  const std::string found_str(found, static_cast<size_t>(in ? 4 : in.gcount()));
  if (!in || found_str != std::string(expected, 4)) {
    throw FormatError("bad magic in " + context + ": expected \"" + std::string(expected, 4) +
                      "\", found \"" + found_str + "\"");
  }
}

}  // namespace patchlock::binio
