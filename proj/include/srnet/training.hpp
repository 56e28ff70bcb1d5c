#ifndef SRNET_TRAINING_HPP
#define SRNET_TRAINING_HPP

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "srnet/data.hpp"
#include "srnet/network.hpp"
#include "srnet/tensor.hpp"

namespace srnet {

class Optimizer {
 public:
  virtual ~Optimizer() = default;
  // Applies one update from the accumulated gradients. Throws on non-finite
  // gradients, naming the parameter.
  virtual void step(const std::vector<Parameter*>& params) = 0;
};

// p <- p - lr * g
class SgdOptimizer : public Optimizer {
 public:
  explicit SgdOptimizer(double lr);
  void step(const std::vector<Parameter*>& params) override;

 private:
  double lr_;
};

// Standard bias-corrected Adam.
class AdamOptimizer : public Optimizer {
 public:
  explicit AdamOptimizer(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step(const std::vector<Parameter*>& params) override;

 private:
  struct State {
    std::vector<double> m, v;
  };
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::map<Parameter*, State> state_;
};

std::unique_ptr<Optimizer> make_optimizer(const std::string& name, double lr);

struct TrainConfig {
  std::string optimizer = "sgd";
  double learning_rate = 0.01;
  int batch_size = 64;
  int epochs = 100;
  std::uint64_t seed = 1;
  std::string arch = "vanillaNet";
  std::string size = "s";
  std::string profile = "none";
  bool decorr_abs = false;
  int monitor_count = 1000;
  std::string dataset = "synthetic";
  std::string export_dir = "run";
  bool export_heatmaps = true;
  bool progress = false;  // per-epoch tab-separated lines on stdout
};

constexpr std::size_t kCorrelationBins = 201;  // two-decimal bins over [-1, 1]

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;    // mean optimized loss (base + penalties) over the epoch
  double val_loss = 0.0;      // base cross-entropy only
  double val_accuracy = 0.0;
  std::vector<double> mean_entropy;                          // per monitored layer
  std::vector<double> mean_abs_corr;                         // per weight layer
  std::vector<std::array<long, kCorrelationBins>> corr_hist; // per weight layer
  std::vector<Tensor> heatmap_grids;                         // per monitored layer, sample 0
};

struct History {
  std::vector<std::string> monitored_layers;
  std::vector<std::size_t> monitored_channels;  // D per monitored layer
  std::vector<std::string> weight_layers;
  std::vector<std::size_t> weight_channels;     // D per weight layer
  std::vector<EpochRecord> epochs;

  double best_val_accuracy() const;
  double min_val_loss() const;
};

struct TrainResult {
  History history;
  Network network;
  std::string dataset_checksum;
  double duration_seconds = 0.0;
};

// Runs the full training protocol: per-epoch shuffled batches, combined loss
// (cross-entropy + sparsity + decorrelation penalties), optimizer step,
// epoch-end validation/monitor metrics and correlation snapshots, then writes
// every export (CSV time series, correlation histograms, heatmaps, weights,
// run manifest) under cfg.export_dir. The full epoch budget always runs.
TrainResult train(const TrainConfig& cfg);

struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
};

// Inference-mode base loss and top-1 accuracy.
EvalResult evaluate_network(Network& net, const Dataset& dataset);

// Round-trips the config echoed into a run manifest.
TrainConfig config_from_manifest(const std::string& manifest_path);

}  // namespace srnet

#endif
