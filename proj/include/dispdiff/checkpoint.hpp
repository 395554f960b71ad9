#pragma once

#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "dispdiff/binio.hpp"
#include "dispdiff/model.hpp"
#include "dispdiff/schedule.hpp"

// Checkpoint container: a JSON metadata header (model config, schedule
// parameters, seed, training step, array directory) followed by named flat
// little-endian float64 arrays.
//
//   bytes 0..3   magic "DDCP"
//   bytes 4..7   format version, u32 LE
//   bytes 8..15  header length in bytes, u64 LE
//   header JSON, then payload arrays at the offsets the header declares.

namespace dispdiff {

struct CheckpointMeta {
  ModelConfig config;
  int schedule_T = 100;
  double beta_start = -1.0;  // < 0 means schedule defaults
  double beta_end = -1.0;
  std::uint64_t seed = 0;
  std::int64_t step = 0;
};

namespace detail {

inline constexpr char kCheckpointMagic[4] = {'D', 'D', 'C', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline void write_u32_le(std::ostream& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 4);
}

inline void write_u64_le(std::ostream& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 8);
}

inline std::uint32_t read_u32_le(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

inline std::uint64_t read_u64_le(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

inline nlohmann::json config_to_json(const ModelConfig& c) {
  return {{"variant", variant_name(c.variant)}, {"depth", c.depth},
          {"num_heads", c.num_heads},           {"hidden_size", c.hidden_size},
          {"encoder_hidden", c.encoder_hidden}, {"time_freq_dim", c.time_freq_dim}};
}

inline ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.variant = variant_from_string(j.at("variant").get<std::string>());
  c.depth = j.at("depth").get<int>();
  c.num_heads = j.at("num_heads").get<int>();
  c.hidden_size = j.at("hidden_size").get<int>();
  c.encoder_hidden = j.at("encoder_hidden").get<int>();
  c.time_freq_dim = j.at("time_freq_dim").get<int>();
  return c;
}

}  // namespace detail

// Extra named arrays (optimizer state) may ride along with the parameters.
struct NamedArray {
  std::string name;
  std::vector<int> shape;
  std::vector<double> values;
};

inline void save_checkpoint(const std::string& path, const ModelWeights& w, const CheckpointMeta& meta,
                            const std::vector<NamedArray>& extra = {}) {
  nlohmann::json arrays = nlohmann::json::array();
  std::uint64_t offset = 0;
  auto describe = [&](const std::string& name, const std::vector<int>& shape, std::size_t count) {
    arrays.push_back({{"name", name}, {"shape", shape}, {"offset", offset}, {"count", count}});
    offset += count * 8;
  };
  for (const auto& [name, t] : w.params) describe("param:" + name, t.shape, t.data->size());
  for (const auto& a : extra) describe(a.name, a.shape, a.values.size());

  nlohmann::json header = {{"format_version", detail::kCheckpointVersion},
                           {"config", detail::config_to_json(meta.config)},
                           {"schedule", {{"T", meta.schedule_T},
                                         {"beta_start", meta.beta_start},
                                         {"beta_end", meta.beta_end}}},
                           {"seed", meta.seed},
                           {"step", meta.step},
                           {"endianness", "little"},
                           {"dtype", "f64"},
                           {"arrays", arrays}};
  std::string header_str = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
  out.write(detail::kCheckpointMagic, 4);
  detail::write_u32_le(out, detail::kCheckpointVersion);
  detail::write_u64_le(out, header_str.size());
  out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
  for (const auto& [name, t] : w.params) write_f64_le(out, *t.data);
  for (const auto& a : extra) write_f64_le(out, a.values);
  if (!out) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

struct LoadedCheckpoint {
  ModelWeights weights;
  CheckpointMeta meta;
  std::vector<NamedArray> extra;
};

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::string(magic, 4) != std::string(detail::kCheckpointMagic, 4))
    throw std::runtime_error("load_checkpoint: bad magic in " + path);
  std::uint32_t version = detail::read_u32_le(in);
  if (version != detail::kCheckpointVersion)
    throw std::runtime_error("load_checkpoint: unknown version " + std::to_string(version));
  std::uint64_t header_len = detail::read_u64_le(in);
  std::string header_str(header_len, '\0');
  in.read(header_str.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw std::runtime_error("load_checkpoint: truncated header in " + path);
  nlohmann::json header = nlohmann::json::parse(header_str);

  LoadedCheckpoint lc;
  lc.meta.config = detail::config_from_json(header.at("config"));
  lc.meta.schedule_T = header.at("schedule").at("T").get<int>();
  lc.meta.beta_start = header.at("schedule").at("beta_start").get<double>();
  lc.meta.beta_end = header.at("schedule").at("beta_end").get<double>();
  lc.meta.seed = header.at("seed").get<std::uint64_t>();
  lc.meta.step = header.at("step").get<std::int64_t>();

  lc.weights = build_weights(lc.meta.config);
  std::uint64_t payload_base = 4 + 4 + 8 + header_len;
  for (const auto& a : header.at("arrays")) {
    std::string name = a.at("name").get<std::string>();
    std::vector<int> shape = a.at("shape").get<std::vector<int>>();
    std::uint64_t offset = a.at("offset").get<std::uint64_t>();
    std::size_t count = a.at("count").get<std::size_t>();
    if (Tensor::numel_of(shape) != static_cast<std::int64_t>(count))
      throw std::runtime_error("load_checkpoint: array " + name + " shape/count mismatch");
    in.seekg(static_cast<std::streamoff>(payload_base + offset));
    if (name.rfind("param:", 0) == 0) {
      Tensor& t = lc.weights.at(name.substr(6));
      if (t.shape != shape)
        throw std::runtime_error("load_checkpoint: parameter " + name + " has shape " +
                                 shape_str(shape) + ", model expects " + shape_str(t.shape));
      read_f64_le(in, t.data->data(), count);
    } else {
      NamedArray arr;
      arr.name = name;
      arr.shape = std::move(shape);
      arr.values = read_f64_le(in, count);
      lc.extra.push_back(std::move(arr));
    }
  }
  return lc;
}

}  // namespace dispdiff
