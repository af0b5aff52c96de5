#pragma once

#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

namespace spikekour {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed input file; offset is the byte position of the first bad field.
struct ParseError : Error {
  std::size_t offset;
  ParseError(const std::string& msg, std::size_t off)
      : Error(msg + " (byte offset " + std::to_string(off) + ")"), offset(off) {}
};

struct IoError : Error {
  using Error::Error;
};

struct TrainDivergence : Error {
  using Error::Error;
};

struct CheckpointMismatch : Error {
  using Error::Error;
};

struct SpecError : Error {
  using Error::Error;
};

namespace binio {

// Explicit little-endian encoding so files are portable regardless of host order.
inline void put_u16(std::ostream& os, uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>(v >> 8)};
  os.write(reinterpret_cast<const char*>(b), 2);
}

inline void put_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_u64(std::ostream& os, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 8);
}

inline void put_i8(std::ostream& os, int8_t v) {
  os.write(reinterpret_cast<const char*>(&v), 1);
}

inline void put_f32(std::ostream& os, float v) {
  uint32_t u;
  std::memcpy(&u, &v, 4);
  put_u32(os, u);
}

inline void put_f64(std::ostream& os, double v) {
  uint64_t u;
  std::memcpy(&u, &v, 8);
  put_u64(os, u);
}

inline bool get_bytes(std::istream& is, void* dst, std::size_t n) {
  is.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
  return static_cast<std::size_t>(is.gcount()) == n;
}

inline uint16_t decode_u16(const unsigned char* b) {
  return static_cast<uint16_t>(b[0] | (b[1] << 8));
}

inline uint32_t decode_u32(const unsigned char* b) {
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

inline uint64_t decode_u64(const unsigned char* b) {
  uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

inline float decode_f32(const unsigned char* b) {
  uint32_t u = decode_u32(b);
  float f;
  std::memcpy(&f, &u, 4);
  return f;
}

inline double decode_f64(const unsigned char* b) {
  uint64_t u = decode_u64(b);
  double d;
  std::memcpy(&d, &u, 8);
  return d;
}

}  // namespace binio
}  // namespace spikekour
