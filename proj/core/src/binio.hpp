// Little-endian primitives shared by the on-disk formats.
#pragma once

#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "kws/common.hpp"

namespace kws::binio {

inline void write_u8(std::ostream& out, uint8_t v) { out.put(char(v)); }

inline void write_u16(std::ostream& out, uint16_t v) {
  char b[2] = {char(v & 0xff), char(v >> 8)};
  out.write(b, 2);
}

inline void write_u32(std::ostream& out, uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = char((v >> (8 * i)) & 0xff);
  out.write(b, 4);
}

inline void write_u64(std::ostream& out, uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = char((v >> (8 * i)) & 0xff);
  out.write(b, 8);
}

inline void write_f32(std::ostream& out, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  write_u32(out, bits);
}

inline void write_f64(std::ostream& out, double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, 8);
  write_u64(out, bits);
}

inline void write_i32(std::ostream& out, int32_t v) { write_u32(out, uint32_t(v)); }

inline uint8_t read_u8(std::istream& in) {
  int c = in.get();
  if (c == EOF) fail(ErrorKind::Format, "unexpected end of file");
  return uint8_t(c);
}

inline uint16_t read_u16(std::istream& in) {
  uint16_t v = read_u8(in);
  return uint16_t(v | (uint16_t(read_u8(in)) << 8));
}

inline uint32_t read_u32(std::istream& in) {
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= uint32_t(read_u8(in)) << (8 * i);
  return v;
}

inline uint64_t read_u64(std::istream& in) {
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= uint64_t(read_u8(in)) << (8 * i);
  return v;
}

inline float read_f32(std::istream& in) {
  uint32_t bits = read_u32(in);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

inline double read_f64(std::istream& in) {
  uint64_t bits = read_u64(in);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

inline int32_t read_i32(std::istream& in) { return int32_t(read_u32(in)); }

inline void write_str(std::ostream& out, const std::string& s) {
  write_u16(out, uint16_t(s.size()));
  out.write(s.data(), std::streamsize(s.size()));
}

inline std::string read_str(std::istream& in) {
  uint16_t n = read_u16(in);
  std::string s(n, '\0');
  in.read(s.data(), n);
  if (!in) fail(ErrorKind::Format, "unexpected end of file");
  return s;
}

} // namespace kws::binio
