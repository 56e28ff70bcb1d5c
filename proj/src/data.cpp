#include "srnet/data.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "srnet/rng.hpp"

namespace srnet {

namespace {

namespace fs = std::filesystem;

constexpr std::size_t kCifarDim = 32;
constexpr std::size_t kCifarPixels = 3 * kCifarDim * kCifarDim;

// Reads one cifar-style file: per record `label_bytes` label bytes followed
// by 3072 pixel bytes; `label_index` selects which label byte to keep.
void load_cifar_records(const std::string& path, std::size_t label_bytes,
                        std::size_t label_index, int class_count, std::size_t limit,
                        Dataset& out) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::invalid_argument("cannot open dataset file '" + path + "'");
  f.seekg(0, std::ios::end);
  const std::uint64_t file_len = static_cast<std::uint64_t>(f.tellg());
  f.seekg(0);
  const std::uint64_t record = label_bytes + kCifarPixels;
  if (file_len % record != 0)
    throw std::runtime_error("file '" + path + "' has " + std::to_string(file_len) +
                             " bytes, not a multiple of the " + std::to_string(record) +
                             "-byte record size");
  std::vector<unsigned char> buf(record);
  std::uint64_t offset = 0;
  while (offset < file_len && out.images.size() < limit) {
    f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(record));
    if (static_cast<std::uint64_t>(f.gcount()) != record)
      throw std::runtime_error("truncated record in '" + path + "' at byte offset " +
                               std::to_string(offset));
    const int label = buf[label_index];
    if (label >= class_count)
      throw std::runtime_error("label " + std::to_string(label) + " out of range in '" + path +
                               "' at byte offset " + std::to_string(offset));
    Tensor img({3, kCifarDim, kCifarDim});
    for (std::size_t i = 0; i < kCifarPixels; ++i)
      img[i] = static_cast<double>(buf[label_bytes + i]) / 255.0;
    out.images.push_back(std::move(img));
    out.labels.push_back(label);
    offset += record;
  }
}

Dataset load_cifar(const std::string& path, std::size_t label_bytes, std::size_t label_index,
                   int class_count, const std::vector<std::string>& dir_files,
                   std::size_t limit = SIZE_MAX) {
  Dataset d;
  d.class_count = class_count;
  if (fs::is_directory(path)) {
    for (const std::string& name : dir_files) {
      if (d.images.size() >= limit) break;
      load_cifar_records((fs::path(path) / name).string(), label_bytes, label_index, class_count,
                         limit, d);
    }
  } else {
    load_cifar_records(path, label_bytes, label_index, class_count, limit, d);
  }
  if (d.images.empty()) throw std::runtime_error("no records loaded from '" + path + "'");
  return d;
}

}  // namespace

Dataset load_cifar10(const std::string& path) {
  return load_cifar(path, 1, 0, 10,
                    {"data_batch_1.bin", "data_batch_2.bin", "data_batch_3.bin",
                     "data_batch_4.bin", "data_batch_5.bin"});
}

Dataset load_cifar10_test(const std::string& dir) {
  const std::string p =
      fs::is_directory(dir) ? (fs::path(dir) / "test_batch.bin").string() : dir;
  return load_cifar(p, 1, 0, 10, {});
}

Dataset load_cifar100(const std::string& path) {
  return load_cifar(path, 2, 1, 100, {"train.bin"});
}

Dataset load_cifar100_test(const std::string& dir) {
  const std::string p = fs::is_directory(dir) ? (fs::path(dir) / "test.bin").string() : dir;
  return load_cifar(p, 2, 1, 100, {});
}

Dataset synthetic_dataset(std::size_t n, int classes, std::size_t image_size, std::uint64_t seed,
                          double noise_amplitude) {
  if (classes < 2) throw std::invalid_argument("synthetic_dataset: need at least 2 classes");
  if (n < static_cast<std::size_t>(classes))
    throw std::invalid_argument("synthetic_dataset: need at least one sample per class (n=" +
                                std::to_string(n) + ", classes=" + std::to_string(classes) + ")");
  if (image_size < 4) throw std::invalid_argument("synthetic_dataset: image size must be >= 4");

  const std::size_t s = image_size;
  const double center = (static_cast<double>(s) - 1.0) / 2.0;
  const double bar_sigma = 0.09 * static_cast<double>(s);

  // Noiseless class templates; a function of (label, classes, size) only.
  std::vector<Tensor> templates;
  templates.reserve(classes);
  for (int c = 0; c < classes; ++c) {
    Tensor t({3, s, s});
    const double theta = M_PI * static_cast<double>(c) / static_cast<double>(classes);
    const double ct = std::cos(theta), st = std::sin(theta);
    double color[3];
    for (int ch = 0; ch < 3; ++ch)
      color[ch] = 0.5 * std::sin(2.0 * M_PI * static_cast<double>(c) /
                                     static_cast<double>(classes) +
                                 2.0943951023931953 * ch);
    for (std::size_t y = 0; y < s; ++y)
      for (std::size_t x = 0; x < s; ++x) {
        const double dy = static_cast<double>(y) - center;
        const double dx = static_cast<double>(x) - center;
        const double dist = dx * st - dy * ct;  // perpendicular distance to the bar
        const double bar = std::exp(-dist * dist / (2.0 * bar_sigma * bar_sigma));
        for (int ch = 0; ch < 3; ++ch)
          t(static_cast<std::size_t>(ch), y, x) = 0.3 + 0.4 * bar + 0.2 * color[ch];
      }
    templates.push_back(std::move(t));
  }

  Dataset d;
  d.class_count = classes;
  d.images.reserve(n);
  d.labels.reserve(n);
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % static_cast<std::size_t>(classes));
    Tensor img = templates[label];
    if (noise_amplitude != 0.0) {
      for (std::size_t j = 0; j < img.size(); ++j)
        img[j] += noise_amplitude * rng.uniform(-1.0, 1.0);
    }
    for (std::size_t j = 0; j < img.size(); ++j)
      img[j] = std::min(1.0, std::max(0.0, img[j]));
    d.images.push_back(std::move(img));
    d.labels.push_back(label);
  }
  return d;
}

std::pair<Dataset, Dataset> split_monitor(const Dataset& dataset, std::size_t n_monitor,
                                          std::uint64_t seed) {
  if (n_monitor == 0) return {dataset, Dataset{{}, {}, dataset.class_count}};
  if (n_monitor >= dataset.size())
    throw std::invalid_argument("monitor split of " + std::to_string(n_monitor) +
                                " from a dataset of " + std::to_string(dataset.size()));
  std::vector<std::size_t> idx(dataset.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng rng(seed);
  shuffle_indices(idx, rng);
  Dataset monitor, train;
  monitor.class_count = train.class_count = dataset.class_count;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    Dataset& dst = i < n_monitor ? monitor : train;
    dst.images.push_back(dataset.images[idx[i]]);
    dst.labels.push_back(dataset.labels[idx[i]]);
  }
  return {std::move(train), std::move(monitor)};
}

std::vector<std::vector<std::size_t>> batch_indices(std::size_t n, std::size_t batch_size,
                                                    std::uint64_t seed, int epoch) {
  if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng(mix_seed(seed, static_cast<std::uint64_t>(epoch)));
  shuffle_indices(idx, rng);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t at = 0; at < n; at += batch_size) {
    const std::size_t end = std::min(n, at + batch_size);
    out.emplace_back(idx.begin() + static_cast<std::ptrdiff_t>(at),
                     idx.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

std::pair<Tensor, std::vector<int>> gather_batch(const Dataset& d,
                                                 const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw std::invalid_argument("gather_batch: empty index list");
  const std::size_t c = d.channels(), h = d.height(), w = d.width();
  Tensor batch({indices.size(), c, h, w});
  std::vector<int> labels(indices.size());
  const std::size_t plane = c * h * w;
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const Tensor& img = d.images[indices[i]];
    for (std::size_t j = 0; j < plane; ++j) batch[i * plane + j] = img[j];
    labels[i] = d.labels[indices[i]];
  }
  return {std::move(batch), std::move(labels)};
}

std::uint64_t dataset_checksum(const Dataset& d) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const unsigned char* p, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 0x100000001b3ULL;
    }
  };
  const std::uint32_t cc = static_cast<std::uint32_t>(d.class_count);
  mix(reinterpret_cast<const unsigned char*>(&cc), sizeof cc);
  for (std::size_t i = 0; i < d.size(); ++i) {
    const std::int32_t l = d.labels[i];
    mix(reinterpret_cast<const unsigned char*>(&l), sizeof l);
    mix(reinterpret_cast<const unsigned char*>(d.images[i].data()),
        d.images[i].size() * sizeof(double));
  }
  return h;
}

// --- dataset spec strings ----------------------------------------------------

namespace {

struct SynthParams {
  std::size_t n = 2000, val = 500, size = 16;
  int classes = 5;
  double noise = 0.5;
  std::uint64_t seed = 0;
  bool seed_given = false;
};

SynthParams parse_synth(const std::string& args) {
  SynthParams p;
  std::stringstream ss(args);
  std::string kv;
  while (std::getline(ss, kv, ',')) {
    if (kv.empty()) continue;
    const auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("synthetic dataset spec: expected key=value, got '" + kv + "'");
    const std::string k = kv.substr(0, eq);
    const std::string v = kv.substr(eq + 1);
    try {
      if (k == "n")
        p.n = std::stoul(v);
      else if (k == "val")
        p.val = std::stoul(v);
      else if (k == "classes")
        p.classes = std::stoi(v);
      else if (k == "size")
        p.size = std::stoul(v);
      else if (k == "noise")
        p.noise = std::stod(v);
      else if (k == "seed") {
        p.seed = std::stoull(v);
        p.seed_given = true;
      } else
        throw std::invalid_argument("synthetic dataset spec: unknown key '" + k + "'");
    } catch (const std::logic_error& e) {
      if (std::string(e.what()).rfind("synthetic", 0) == 0) throw;
      throw std::invalid_argument("synthetic dataset spec: bad value for '" + k + "'");
    }
  }
  return p;
}

std::string synth_spec_string(const SynthParams& p) {
  std::ostringstream os;
  char noise[32];
  std::snprintf(noise, sizeof noise, "%.17g", p.noise);
  os << "synthetic:n=" << p.n << ",val=" << p.val << ",classes=" << p.classes
     << ",size=" << p.size << ",noise=" << noise << ",seed=" << p.seed;
  return os.str();
}

// splits "cifar10:/path[,limit=N]" into path and limit
std::pair<std::string, std::size_t> parse_path_args(const std::string& args,
                                                    const std::string& kind) {
  std::string path = args;
  std::size_t limit = SIZE_MAX;
  const auto comma = args.rfind(",limit=");
  if (comma != std::string::npos) {
    path = args.substr(0, comma);
    try {
      limit = std::stoul(args.substr(comma + 7));
    } catch (const std::logic_error&) {
      throw std::invalid_argument(kind + " dataset spec: bad limit value");
    }
  }
  if (path.empty()) throw std::invalid_argument(kind + " dataset spec needs a path");
  return {path, limit};
}

Dataset limit_dataset(Dataset d, std::size_t limit) {
  if (d.size() > limit) {
    d.images.resize(limit);
    d.labels.resize(limit);
  }
  return d;
}

}  // namespace

LoadedData load_train_data(const std::string& spec, std::uint64_t default_seed) {
  const auto colon = spec.find(':');
  const std::string kind = spec.substr(0, colon);
  const std::string args = colon == std::string::npos ? "" : spec.substr(colon + 1);

  LoadedData out;
  if (kind == "synthetic") {
    SynthParams p = parse_synth(args);
    if (!p.seed_given) p.seed = default_seed;
    out.train = synthetic_dataset(p.n, p.classes, p.size, p.seed, p.noise);
    SynthParams vp = p;
    vp.n = p.val;
    vp.val = 0;
    vp.seed = mix_seed(p.seed, 0x56A1);
    out.validation = synthetic_dataset(vp.n, vp.classes, vp.size, vp.seed, vp.noise);
    out.train_spec = synth_spec_string(p);
    out.val_spec = synth_spec_string(vp);
    return out;
  }
  if (kind == "cifar10" || kind == "cifar100") {
    auto [path, limit] = parse_path_args(args, kind);
    if (kind == "cifar10") {
      out.train = limit_dataset(load_cifar10(path), limit);
      out.validation = load_cifar10_test(path);
    } else {
      out.train = limit_dataset(load_cifar100(path), limit);
      out.validation = load_cifar100_test(path);
    }
    out.train_spec = spec;
    out.val_spec = kind + "-test:" + path;
    return out;
  }
  throw std::invalid_argument("unknown dataset kind in spec '" + spec +
                              "' (expected synthetic, cifar10 or cifar100)");
}

Dataset load_eval_dataset(const std::string& spec) {
  const auto colon = spec.find(':');
  const std::string kind = spec.substr(0, colon);
  const std::string args = colon == std::string::npos ? "" : spec.substr(colon + 1);
  if (kind == "synthetic") {
    SynthParams p = parse_synth(args);
    return synthetic_dataset(p.n, p.classes, p.size, p.seed, p.noise);
  }
  if (kind == "cifar10" || kind == "cifar100") {
    auto [path, limit] = parse_path_args(args, kind);
    return limit_dataset(kind == "cifar10" ? load_cifar10(path) : load_cifar100(path), limit);
  }
  if (kind == "cifar10-test" || kind == "cifar100-test") {
    auto [path, limit] = parse_path_args(args, kind);
    return limit_dataset(
        kind == "cifar10-test" ? load_cifar10_test(path) : load_cifar100_test(path), limit);
  }
  throw std::invalid_argument("unknown dataset kind in spec '" + spec + "'");
}

}  // namespace srnet
