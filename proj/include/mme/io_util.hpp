#pragma once

#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

namespace mme {

inline int32_t read_le32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw std::runtime_error("unexpected end of file");
  return static_cast<int32_t>(static_cast<uint32_t>(b[0]) |
                              (static_cast<uint32_t>(b[1]) << 8) |
                              (static_cast<uint32_t>(b[2]) << 16) |
                              (static_cast<uint32_t>(b[3]) << 24));
}

inline void write_le32(std::ostream& out, int32_t v) {
  uint32_t u = static_cast<uint32_t>(v);
  unsigned char b[4] = {static_cast<unsigned char>(u & 0xff),
                        static_cast<unsigned char>((u >> 8) & 0xff),
                        static_cast<unsigned char>((u >> 16) & 0xff),
                        static_cast<unsigned char>((u >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

inline float read_le_float(std::istream& in) {
  int32_t bits = read_le32(in);
  float f;
  static_assert(sizeof(f) == sizeof(bits));
  std::memcpy(&f, &bits, 4);
  return f;
}

inline void write_le_float(std::ostream& out, float f) {
  int32_t bits;
  std::memcpy(&bits, &f, 4);
  write_le32(out, bits);
}

inline std::string read_string(std::istream& in) {
  int32_t n = read_le32(in);
  if (n < 0) throw std::runtime_error("bad string length");
  std::string s(static_cast<size_t>(n), '\0');
  in.read(s.data(), n);
  if (!in) throw std::runtime_error("unexpected end of file");
  return s;
}

inline void write_string(std::ostream& out, const std::string& s) {
  write_le32(out, static_cast<int32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

}  // namespace mme
