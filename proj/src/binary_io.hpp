#pragma once

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>

#include "tvmf/errors.hpp"

namespace tvmf::detail {

template <typename UInt>
void write_le(std::ostream& out, UInt bits) {
  char bytes[sizeof(UInt)];
  for (std::size_t i = 0; i < sizeof(UInt); ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xFFu);
  out.write(bytes, sizeof(UInt));
}

inline void write_f64(std::ostream& out, double v) { write_le(out, std::bit_cast<std::uint64_t>(v)); }
inline void write_f32(std::ostream& out, float v) { write_le(out, std::bit_cast<std::uint32_t>(v)); }

/// Reads a little-endian word, tracking the byte offset for error reports.
template <typename UInt>
UInt read_le(std::istream& in, std::size_t& offset, const char* what) {
  unsigned char bytes[sizeof(UInt)];
  in.read(reinterpret_cast<char*>(bytes), sizeof(UInt));
  if (in.gcount() != static_cast<std::streamsize>(sizeof(UInt))) {
    throw FormatError(std::string("truncated ") + what, offset + static_cast<std::size_t>(in.gcount()));
  }
  UInt v = 0;
  for (std::size_t i = 0; i < sizeof(UInt); ++i) v |= static_cast<UInt>(bytes[i]) << (8 * i);
  offset += sizeof(UInt);
  return v;
}

inline double read_f64(std::istream& in, std::size_t& offset, const char* what) {
  return std::bit_cast<double>(read_le<std::uint64_t>(in, offset, what));
}
inline float read_f32(std::istream& in, std::size_t& offset, const char* what) {
  return std::bit_cast<float>(read_le<std::uint32_t>(in, offset, what));
}

/// Reads up to and including '\n'; the newline is not part of the result.
inline std::string read_line(std::istream& in, std::size_t& offset, std::size_t max_len, const char* what) {
  std::string line;
  char ch = 0;
  while (line.size() <= max_len && in.get(ch)) {
    if (ch == '\n') {
      offset += line.size() + 1;
      return line;
    }
    line.push_back(ch);
  }
  throw FormatError(std::string("unterminated ") + what, offset + line.size());
}

}  // namespace tvmf::detail
