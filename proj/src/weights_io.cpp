#include "srnet/weights_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>

#include "json.hpp"
#include "srnet/version.hpp"

namespace srnet {

static_assert(std::endian::native == std::endian::little,
              "weights container stores little-endian float64 data");

namespace {

constexpr char kMagic[4] = {'S', 'R', 'N', 'W'};
constexpr std::uint32_t kFormatVersion = 1;

template <typename T>
void write_raw(std::ofstream& f, const T& v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
void read_raw(std::ifstream& f, T& v, const std::string& what) {
  f.read(reinterpret_cast<char*>(&v), sizeof v);
  if (static_cast<std::size_t>(f.gcount()) != sizeof v)
    throw std::runtime_error("corrupt weights file: truncated " + what);
}

}  // namespace

void save_weights(Network& net, const std::string& path) {
  auto tensors = net.persistent_tensors();
  nlohmann::json meta;
  meta["engine_version"] = kEngineVersion;
  const NetworkSpec& s = net.spec();
  meta["network"] = {{"arch", s.arch},
                     {"size", s.size},
                     {"input_channels", s.input_channels},
                     {"input_height", s.input_height},
                     {"input_width", s.input_width},
                     {"class_count", s.class_count}};
  nlohmann::json table = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& t : tensors) {
    table.push_back({{"name", t.name}, {"shape", t.tensor->shape()}, {"offset", offset}});
    offset += t.tensor->size() * sizeof(double);
  }
  meta["tensors"] = table;
  const std::string meta_str = meta.dump();

  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write weights file '" + path + "'");
  f.write(kMagic, 4);
  write_raw(f, kFormatVersion);
  const std::uint64_t meta_len = meta_str.size();
  write_raw(f, meta_len);
  f.write(meta_str.data(), static_cast<std::streamsize>(meta_str.size()));
  for (const auto& t : tensors)
    f.write(reinterpret_cast<const char*>(t.tensor->data()),
            static_cast<std::streamsize>(t.tensor->size() * sizeof(double)));
  if (!f) throw std::runtime_error("write failed for weights file '" + path + "'");
}

Network load_weights(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::invalid_argument("cannot open weights file '" + path + "'");
  char magic[4];
  f.read(magic, 4);
  if (f.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("'" + path + "' is not a weights file (bad magic)");
  std::uint32_t version;
  read_raw(f, version, "format version");
  if (version != kFormatVersion)
    throw std::runtime_error("weights file format version " + std::to_string(version) +
                             " not supported by this engine (expected " +
                             std::to_string(kFormatVersion) + ")");
  std::uint64_t meta_len;
  read_raw(f, meta_len, "header length");
  std::string meta_str(meta_len, '\0');
  f.read(meta_str.data(), static_cast<std::streamsize>(meta_len));
  if (static_cast<std::uint64_t>(f.gcount()) != meta_len)
    throw std::runtime_error("corrupt weights file: truncated header at byte offset " +
                             std::to_string(4 + sizeof version + sizeof meta_len));

  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(meta_str);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("corrupt weights file header: ") + e.what());
  }
  const std::string file_engine = meta.at("engine_version").get<std::string>();
  if (file_engine != kEngineVersion)
    throw std::runtime_error("weights file written by engine " + file_engine +
                             ", this engine is " + std::string(kEngineVersion));

  const nlohmann::json& n = meta.at("network");
  NetworkSpec spec;
  spec.arch = n.at("arch").get<std::string>();
  spec.size = n.at("size").get<std::string>();
  spec.input_channels = n.at("input_channels").get<std::size_t>();
  spec.input_height = n.at("input_height").get<std::size_t>();
  spec.input_width = n.at("input_width").get<std::size_t>();
  spec.class_count = n.at("class_count").get<std::size_t>();

  Network net(spec, 0);
  std::map<std::string, Tensor*> by_name;
  for (const auto& t : net.persistent_tensors()) by_name[t.name] = t.tensor;

  const std::uint64_t data_start = static_cast<std::uint64_t>(f.tellg());
  std::size_t filled = 0;
  for (const auto& entry : meta.at("tensors")) {
    const std::string name = entry.at("name").get<std::string>();
    const std::vector<std::size_t> shape = entry.at("shape").get<std::vector<std::size_t>>();
    const std::uint64_t offset = entry.at("offset").get<std::uint64_t>();
    auto it = by_name.find(name);
    if (it == by_name.end())
      throw std::runtime_error("weights file contains unknown tensor '" + name + "'");
    if (it->second->shape() != shape)
      throw std::runtime_error("tensor '" + name + "' has shape " + shape_str(shape) +
                               " in the file but the network expects " +
                               shape_str(it->second->shape()));
    f.seekg(static_cast<std::streamoff>(data_start + offset));
    f.read(reinterpret_cast<char*>(it->second->data()),
           static_cast<std::streamsize>(it->second->size() * sizeof(double)));
    if (static_cast<std::size_t>(f.gcount()) != it->second->size() * sizeof(double))
      throw std::runtime_error("corrupt weights file: tensor '" + name +
                               "' truncated at byte offset " + std::to_string(data_start + offset));
    ++filled;
  }
  if (filled != by_name.size())
    throw std::runtime_error("weights file is missing " + std::to_string(by_name.size() - filled) +
                             " tensor(s) for this network");
  return net;
}

}  // namespace srnet
