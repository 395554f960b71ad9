#pragma once

#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "dispdiff/binio.hpp"
#include "dispdiff/checkpoint.hpp"
#include "dispdiff/tensor.hpp"

// Generic named-array container (prediction sets, episode logs): the same
// header-plus-payload layout as checkpoints with magic "DDAR".

namespace dispdiff {

namespace detail {
inline constexpr char kArrayFileMagic[4] = {'D', 'D', 'A', 'R'};
}

inline void save_arrays(const std::string& path, const std::vector<NamedArray>& arrays) {
  nlohmann::json dir = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& a : arrays) {
    dir.push_back({{"name", a.name}, {"shape", a.shape}, {"offset", offset}, {"count", a.values.size()}});
    offset += a.values.size() * 8;
  }
  nlohmann::json header = {{"format_version", 1},
                           {"dtype", "f64"},
                           {"endianness", "little"},
                           {"arrays", dir}};
  std::string header_str = header.dump();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("save_arrays: cannot open " + path);
  out.write(detail::kArrayFileMagic, 4);
  detail::write_u32_le(out, 1);
  detail::write_u64_le(out, header_str.size());
  out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
  for (const auto& a : arrays) write_f64_le(out, a.values);
  if (!out) throw std::runtime_error("save_arrays: write failed for " + path);
}

inline std::vector<NamedArray> load_arrays(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_arrays: cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::string(magic, 4) != std::string(detail::kArrayFileMagic, 4))
    throw std::runtime_error("load_arrays: bad magic in " + path);
  std::uint32_t version = detail::read_u32_le(in);
  if (version != 1) throw std::runtime_error("load_arrays: unknown version " + std::to_string(version));
  std::uint64_t header_len = detail::read_u64_le(in);
  std::string header_str(header_len, '\0');
  in.read(header_str.data(), static_cast<std::streamsize>(header_len));
  nlohmann::json header = nlohmann::json::parse(header_str);
  std::vector<NamedArray> arrays;
  for (const auto& aj : header.at("arrays")) {
    NamedArray a;
    a.name = aj.at("name").get<std::string>();
    a.shape = aj.at("shape").get<std::vector<int>>();
    std::size_t count = aj.at("count").get<std::size_t>();
    if (Tensor::numel_of(a.shape) != static_cast<std::int64_t>(count))
      throw std::runtime_error("load_arrays: array " + a.name + " shape/count mismatch");
    a.values = read_f64_le(in, count);
    arrays.push_back(std::move(a));
  }
  return arrays;
}

inline NamedArray to_named_array(const std::string& name, const Tensor& t) {
  NamedArray a;
  a.name = name;
  a.shape = t.shape;
  a.values = *t.data;
  return a;
}

inline Tensor to_tensor(const NamedArray& a) { return Tensor::from(a.shape, a.values); }

}  // namespace dispdiff
