#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

#include "ipguard/error.hpp"
#include "ipguard/forest.hpp"
#include "ipguard/nn.hpp"

// Container layout (little-endian):
//   "BMK1" | u64 header length | JSON header | f64 parameter blocks (networks only)
// Parameter blocks follow layer order: weights (row-major) then bias.

namespace ipguard {

inline constexpr int kModelFormatVersion = 1;

using Model = std::variant<Network, Forest>;

namespace detail {

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xff));
}

inline std::uint64_t get_u64(const std::string& in, std::size_t pos) {
  std::uint64_t v = 0;
  for (int b = 0; b < 8; ++b) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + b])) << (8 * b);
  return v;
}

}  // namespace detail

inline std::string encode_model(const Model& model) {
  nlohmann::json header;
  std::string blocks;
  if (const auto* net = std::get_if<Network>(&model)) {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : net->layers()) {
      layers.push_back({{"in", l.in}, {"out", l.out}, {"activation", to_string(l.activation)}});
      for (double v : l.weights) detail::put_u64(blocks, std::bit_cast<std::uint64_t>(v));
      for (double v : l.bias) detail::put_u64(blocks, std::bit_cast<std::uint64_t>(v));
    }
    header = {{"format_version", kModelFormatVersion},
              {"kind", "network"},
              {"arch_id", net->arch_id()},
              {"input_dim", net->input_dim()},
              {"num_classes", net->num_classes()},
              {"layers", std::move(layers)},
              {"lineage", net->lineage()}};
  } else {
    header = {{"format_version", kModelFormatVersion}, {"kind", "forest"},
              {"forest", forest_to_json(std::get<Forest>(model))}};
  }
  const std::string text = header.dump();
  std::string out = "BMK1";
  detail::put_u64(out, text.size());
  out += text;
  out += blocks;
  return out;
}

inline Model decode_model(const std::string& bytes) {
  if (bytes.size() < 12 || bytes.compare(0, 4, "BMK1") != 0) throw FormatError("not a model file (bad magic)");
  const std::uint64_t len = detail::get_u64(bytes, 4);
  if (len > bytes.size() - 12) throw FormatError("model file truncated inside header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(12, len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("model header is not valid JSON: ") + e.what());
  }
  std::size_t pos = 12 + len;
  try {
    const int version = header.at("format_version").get<int>();
    if (version != kModelFormatVersion)
      throw FormatError("unsupported model format version " + std::to_string(version) + " (supported: " +
                        std::to_string(kModelFormatVersion) + ")");
    const std::string kind = header.at("kind").get<std::string>();
    if (kind == "forest") {
      if (pos != bytes.size()) throw FormatError("trailing bytes after forest header");
      return forest_from_json(header.at("forest"));
    }
    if (kind != "network") throw FormatError("unknown model kind '" + kind + "'");
    std::vector<DenseLayer> layers;
    for (const auto& lj : header.at("layers")) {
      DenseLayer l;
      l.in = lj.at("in").get<std::size_t>();
      l.out = lj.at("out").get<std::size_t>();
      l.activation = activation_from_string(lj.at("activation").get<std::string>());
      const std::size_t count = l.in * l.out + l.out;
      if (bytes.size() - pos < count * 8) throw FormatError("model file truncated inside parameter blocks");
      l.weights.resize(l.in * l.out);
      l.bias.resize(l.out);
      for (double& v : l.weights) {
        v = std::bit_cast<double>(detail::get_u64(bytes, pos));
        pos += 8;
      }
      for (double& v : l.bias) {
        v = std::bit_cast<double>(detail::get_u64(bytes, pos));
        pos += 8;
      }
      layers.push_back(std::move(l));
    }
    if (pos != bytes.size()) throw FormatError("trailing bytes after parameter blocks");
    Network net(std::move(layers), header.at("arch_id").get<std::string>(), header.value("lineage", std::string()));
    if (net.input_dim() != header.at("input_dim").get<std::size_t>() ||
        net.num_classes() != header.at("num_classes").get<std::size_t>())
      throw FormatError("model header dimensions disagree with layer shapes");
    return net;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed model header: ") + e.what());
  } catch (const InputError& e) {
    throw FormatError(std::string("invalid network in model file: ") + e.what());
  }
}

inline void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write '" + path + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw InputError("failed writing '" + path + "'");
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void save_model(const Model& model, const std::string& path) { write_file(path, encode_model(model)); }

inline Model load_any_model(const std::string& path) { return decode_model(read_file(path)); }

inline Network load_model(const std::string& path) {
  auto model = load_any_model(path);
  if (auto* net = std::get_if<Network>(&model)) return std::move(*net);
  throw FormatError("'" + path + "' holds a forest, expected a network");
}

/// 64-bit FNV-1a over the encoded model, as 16 hex digits.
inline std::string model_digest(const Model& model) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : encode_model(model)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream ss;
  ss << std::hex << std::setw(16) << std::setfill('0') << h;
  return ss.str();
}

}  // namespace ipguard
