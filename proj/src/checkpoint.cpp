#include "dtx/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

namespace dtx {

namespace {

constexpr char kMagic[5] = {'C', 'T', 'X', 'T', '1'};

void write_u64(std::ofstream& out, std::uint64_t x) {
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>((x >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(buf), 8);
}

std::uint64_t read_u64(std::ifstream& in) {
  unsigned char buf[8];
  in.read(reinterpret_cast<char*>(buf), 8);
  std::uint64_t x = 0;
  for (int i = 0; i < 8; ++i) x |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return x;
}

}  // namespace

void save_checkpoint(const std::string& path, const NamedArrays& arrays) {
  nlohmann::json manifest = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, arr] : arrays) {
    manifest.push_back({{"name", name},
                        {"shape", arr.shape},
                        {"dtype", "f64"},
                        {"offset", offset}});
    offset += arr.size() * sizeof(double);
  }
  const std::string json_bytes = manifest.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out.write(kMagic, sizeof(kMagic));
  write_u64(out, json_bytes.size());
  out.write(json_bytes.data(), static_cast<std::streamsize>(json_bytes.size()));
  for (const auto& [name, arr] : arrays) {
    out.write(reinterpret_cast<const char*>(arr.v.data()),
              static_cast<std::streamsize>(arr.size() * sizeof(double)));
  }
  if (!out) throw std::runtime_error("short write to checkpoint: " + path);
}

NamedArrays load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read checkpoint: " + path);
  char magic[5];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error("bad checkpoint magic in " + path);
  }
  const std::uint64_t json_len = read_u64(in);
  std::string json_bytes(json_len, '\0');
  in.read(json_bytes.data(), static_cast<std::streamsize>(json_len));
  if (!in) throw std::runtime_error("truncated checkpoint manifest in " + path);
  const auto manifest = nlohmann::json::parse(json_bytes);

  const std::streampos data_start = in.tellg();
  NamedArrays out;
  for (const auto& entry : manifest) {
    const std::string name = entry.at("name").get<std::string>();
    const std::vector<int> shape = entry.at("shape").get<std::vector<int>>();
    const std::string dtype = entry.at("dtype").get<std::string>();
    const std::uint64_t offset = entry.at("offset").get<std::uint64_t>();
    nn::Array arr(shape);
    in.seekg(data_start + static_cast<std::streamoff>(offset));
    if (dtype == "f64") {
      in.read(reinterpret_cast<char*>(arr.v.data()),
              static_cast<std::streamsize>(arr.size() * sizeof(double)));
    } else if (dtype == "f32") {
      std::vector<float> tmp(arr.size());
      in.read(reinterpret_cast<char*>(tmp.data()),
              static_cast<std::streamsize>(tmp.size() * sizeof(float)));
      for (std::size_t i = 0; i < arr.size(); ++i) arr.v[i] = static_cast<double>(tmp[i]);
    } else {
      throw std::runtime_error("unsupported dtype '" + dtype + "' in " + path);
    }
    if (!in) throw std::runtime_error("truncated checkpoint data in " + path);
    out.emplace_back(name, std::move(arr));
  }
  return out;
}

NamedArrays snapshot(const nn::ParamStore& params) {
  NamedArrays out;
  for (const auto& [name, t] : params.items()) out.emplace_back(name, t.value());
  return out;
}

void restore(nn::ParamStore* params, const NamedArrays& arrays) {
  if (arrays.size() != params->items().size()) {
    throw std::runtime_error("checkpoint parameter count mismatch");
  }
  for (const auto& [name, arr] : arrays) {
    nn::Tensor t = params->get(name);
    if (!(t.value().shape == arr.shape)) {
      throw std::runtime_error("checkpoint shape mismatch for " + name);
    }
    t.mutable_value() = arr;
  }
}

}  // namespace dtx
