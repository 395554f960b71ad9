#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace dispdiff {

// Flat little-endian float64 array I/O. On-disk formats (datasets,
// checkpoints, episode logs) all store raw doubles through these helpers.

inline void write_f64_le(std::ostream& out, const double* values, std::size_t count) {
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(values), static_cast<std::streamsize>(count * 8));
  } else {
    for (std::size_t i = 0; i < count; ++i) {
      std::uint64_t bits;
      std::memcpy(&bits, &values[i], 8);
      char b[8];
      for (int k = 0; k < 8; ++k) b[k] = static_cast<char>((bits >> (8 * k)) & 0xff);
      out.write(b, 8);
    }
  }
}

inline void read_f64_le(std::istream& in, double* values, std::size_t count) {
  if constexpr (std::endian::native == std::endian::little) {
    in.read(reinterpret_cast<char*>(values), static_cast<std::streamsize>(count * 8));
  } else {
    for (std::size_t i = 0; i < count; ++i) {
      char b[8];
      in.read(b, 8);
      std::uint64_t bits = 0;
      for (int k = 0; k < 8; ++k)
        bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(b[k])) << (8 * k);
      std::memcpy(&values[i], &bits, 8);
    }
  }
  if (!in) throw std::runtime_error("read_f64_le: unexpected end of stream");
}

inline void write_f64_le(std::ostream& out, const std::vector<double>& values) {
  write_f64_le(out, values.data(), values.size());
}

inline std::vector<double> read_f64_le(std::istream& in, std::size_t count) {
  std::vector<double> v(count);
  if (count > 0) read_f64_le(in, v.data(), count);
  return v;
}

inline std::uint64_t file_size_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary | std::ios::ate);
  if (!f) throw std::runtime_error("cannot open file: " + path);
  return static_cast<std::uint64_t>(f.tellg());
}

}  // namespace dispdiff
