#ifndef SRNET_DATA_HPP
#define SRNET_DATA_HPP

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "srnet/tensor.hpp"

namespace srnet {

struct Dataset {
  std::vector<Tensor> images;  // each (C,H,W), values in [0,1]
  std::vector<int> labels;
  int class_count = 0;

  std::size_t size() const { return images.size(); }
  std::size_t channels() const { return images.at(0).dim(0); }
  std::size_t height() const { return images.at(0).dim(1); }
  std::size_t width() const { return images.at(0).dim(2); }
};

// cifar-10 binary: 3073-byte records (1 label byte + 3072 pixel bytes,
// channel-planar R,G,B, row-major, 32x32). `path` may be a single .bin file
// or a directory containing data_batch_1..5.bin.
Dataset load_cifar10(const std::string& path);
Dataset load_cifar10_test(const std::string& dir);

// cifar-100 binary: 3074-byte records (coarse label, fine label, pixels);
// the fine label is used. `path` may be train.bin or its directory.
Dataset load_cifar100(const std::string& path);
Dataset load_cifar100_test(const std::string& dir);

// Class-conditional oriented bars with a per-class color bias plus additive
// uniform noise; the noiseless pattern depends only on (label, classes, size),
// so datasets drawn with different seeds share their class structure.
Dataset synthetic_dataset(std::size_t n, int classes, std::size_t image_size, std::uint64_t seed,
                          double noise_amplitude = 0.5);

// Disjoint deterministic split by seeded shuffle; the monitor set is used
// only for sparsity metrics.
std::pair<Dataset, Dataset> split_monitor(const Dataset& dataset, std::size_t n_monitor,
                                          std::uint64_t seed);

// Per-epoch batch index order, reshuffled by (seed, epoch); the last partial
// batch is kept.
std::vector<std::vector<std::size_t>> batch_indices(std::size_t n, std::size_t batch_size,
                                                    std::uint64_t seed, int epoch);

// Copies the selected samples into one (N,C,H,W) tensor + labels.
std::pair<Tensor, std::vector<int>> gather_batch(const Dataset& d,
                                                 const std::vector<std::size_t>& indices);

std::uint64_t dataset_checksum(const Dataset& d);

// Dataset spec strings:
//   synthetic:n=2000,val=500,classes=5,size=16,noise=0.5,seed=7
//   cifar10:<path>[,limit=N]        cifar10-test:<dir>[,limit=N]
//   cifar100:<path>[,limit=N]       cifar100-test:<dir>[,limit=N]
// Omitted synthetic keys take the defaults above (seed defaults to
// `default_seed`). Parsing is strict: unknown keys are errors.
struct LoadedData {
  Dataset train;       // training pool, before the monitor split
  Dataset validation;
  std::string train_spec;  // canonical echo with every key explicit
  std::string val_spec;    // spec that load_eval_dataset() reproduces
};
LoadedData load_train_data(const std::string& spec, std::uint64_t default_seed);
Dataset load_eval_dataset(const std::string& spec);

}  // namespace srnet

#endif
