#include "srnet/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <stdexcept>

#include "json.hpp"
#include "srnet/exporting.hpp"
#include "srnet/graph.hpp"
#include "srnet/layers.hpp"
#include "srnet/regularizers.hpp"
#include "srnet/sparsity.hpp"
#include "srnet/version.hpp"
#include "srnet/weights_io.hpp"

namespace srnet {

namespace {

constexpr std::size_t kEvalChunk = 256;

// rng/stream salts so the independent random streams never collide
constexpr std::uint64_t kSaltInit = 0x1217;
constexpr std::uint64_t kSaltMonitor = 0x5917;
constexpr std::uint64_t kSaltDropout = 0xD407;

void check_finite_grads(const Parameter& p) {
  for (double g : p.grad.values())
    if (!std::isfinite(g))
      throw std::runtime_error("non-finite gradient for parameter '" + p.name + "'");
}

}  // namespace

SgdOptimizer::SgdOptimizer(double lr) : lr_(lr) {
  if (!(lr >= 0.0)) throw std::invalid_argument("learning rate must be non-negative");
}

void SgdOptimizer::step(const std::vector<Parameter*>& params) {
  for (Parameter* p : params) {
    check_finite_grads(*p);
    double* v = p->value.data();
    const double* g = p->grad.data();
    for (std::size_t i = 0; i < p->value.size(); ++i) v[i] -= lr_ * g[i];
  }
}

AdamOptimizer::AdamOptimizer(double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  if (!(lr >= 0.0)) throw std::invalid_argument("learning rate must be non-negative");
}

void AdamOptimizer::step(const std::vector<Parameter*>& params) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (Parameter* p : params) {
    check_finite_grads(*p);
    State& s = state_[p];
    if (s.m.empty()) {
      s.m.assign(p->value.size(), 0.0);
      s.v.assign(p->value.size(), 0.0);
    }
    double* val = p->value.data();
    const double* g = p->grad.data();
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      s.m[i] = beta1_ * s.m[i] + (1.0 - beta1_) * g[i];
      s.v[i] = beta2_ * s.v[i] + (1.0 - beta2_) * g[i] * g[i];
      const double mhat = s.m[i] / bc1;
      const double vhat = s.v[i] / bc2;
      val[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

std::unique_ptr<Optimizer> make_optimizer(const std::string& name, double lr) {
  if (name == "sgd") return std::make_unique<SgdOptimizer>(lr);
  if (name == "adam") return std::make_unique<AdamOptimizer>(lr);
  throw std::invalid_argument("unknown optimizer '" + name + "' (expected sgd or adam)");
}

double History::best_val_accuracy() const {
  double best = 0.0;
  for (const EpochRecord& r : epochs) best = std::max(best, r.val_accuracy);
  return best;
}

double History::min_val_loss() const {
  double best = std::numeric_limits<double>::infinity();
  for (const EpochRecord& r : epochs) best = std::min(best, r.val_loss);
  return best;
}

EvalResult evaluate_network(Network& net, const Dataset& dataset) {
  if (dataset.size() == 0) throw std::invalid_argument("evaluate: empty dataset");
  double loss_sum = 0.0;
  std::size_t correct = 0;
  for (std::size_t at = 0; at < dataset.size(); at += kEvalChunk) {
    const std::size_t end = std::min(dataset.size(), at + kEvalChunk);
    std::vector<std::size_t> idx(end - at);
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = at + i;
    auto [batch, labels] = gather_batch(dataset, idx);
    Graph g;
    auto fwd = net.forward(g, batch, Network::Mode::Infer);
    Var loss = cross_entropy(fwd.logits, labels);
    loss_sum += loss.value().item() * static_cast<double>(idx.size());
    const Tensor& logits = fwd.logits.value();
    const std::size_t classes = logits.dim(1);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      const double* row = logits.data() + r * classes;
      std::size_t arg = 0;
      for (std::size_t c = 1; c < classes; ++c)
        if (row[c] > row[arg]) arg = c;
      if (static_cast<int>(arg) == labels[r]) ++correct;
    }
  }
  EvalResult res;
  res.loss = loss_sum / static_cast<double>(dataset.size());
  res.accuracy = static_cast<double>(correct) / static_cast<double>(dataset.size());
  return res;
}

namespace {

// Adds the entropies of every receptive field of every sample, sample order.
void accumulate_entropy(const Tensor& preact_batch, EntropyAccumulator& acc) {
  if (preact_batch.rank() == 2) {
    const std::size_t n = preact_batch.dim(0), d = preact_batch.dim(1);
    for (std::size_t i = 0; i < n; ++i)
      acc.add_channels_at(preact_batch.data() + i * d, d);
    return;
  }
  const std::size_t n = preact_batch.dim(0), d = preact_batch.dim(1);
  const std::size_t r = preact_batch.dim(2) * preact_batch.dim(3);
  std::vector<double> chan(d);
  for (std::size_t i = 0; i < n; ++i) {
    const double* x = preact_batch.data() + i * d * r;
    for (std::size_t k = 0; k < r; ++k) {
      for (std::size_t l = 0; l < d; ++l) chan[l] = x[l * r + k];
      acc.add_channels_at(chan.data(), d);
    }
  }
}

// First sample of the batched preactivations as a rank-3 field.
Tensor first_sample_field(const Tensor& preact_batch) {
  if (preact_batch.rank() == 2) {
    Tensor t({preact_batch.dim(1), 1, 1});
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = preact_batch[i];
    return t;
  }
  Tensor t({preact_batch.dim(1), preact_batch.dim(2), preact_batch.dim(3)});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = preact_batch[i];
  return t;
}

std::string checksum_hex(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

nlohmann::json config_to_json(const TrainConfig& cfg) {
  return nlohmann::json{{"optimizer", cfg.optimizer},
                        {"learning_rate", cfg.learning_rate},
                        {"batch_size", cfg.batch_size},
                        {"epochs", cfg.epochs},
                        {"seed", cfg.seed},
                        {"arch", cfg.arch},
                        {"size", cfg.size},
                        {"profile", cfg.profile},
                        {"decorr_abs", cfg.decorr_abs},
                        {"monitor_count", cfg.monitor_count},
                        {"dataset", cfg.dataset},
                        {"export_dir", cfg.export_dir},
                        {"export_heatmaps", cfg.export_heatmaps}};
}

void write_manifest(const TrainConfig& cfg, const TrainResult& result,
                    const std::string& val_spec, const std::string& path) {
  nlohmann::json j;
  j["engine_version"] = kEngineVersion;
  j["config"] = config_to_json(cfg);
  j["dataset_checksum"] = result.dataset_checksum;
  j["validation_dataset"] = val_spec;
  j["duration_seconds"] = result.duration_seconds;
  const EpochRecord& last = result.history.epochs.back();
  j["final"] = {{"train_loss", last.train_loss},
                {"val_loss", last.val_loss},
                {"val_accuracy", last.val_accuracy}};
  j["best_val_accuracy"] = result.history.best_val_accuracy();
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write manifest '" + path + "'");
  f << j.dump(2) << "\n";
}

}  // namespace

TrainResult train(const TrainConfig& cfg) {
  if (cfg.epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (cfg.batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  if (!(cfg.learning_rate >= 0.0))
    throw std::invalid_argument("learning rate must be non-negative");
  if (cfg.monitor_count < 0) throw std::invalid_argument("monitor count must be >= 0");

  const auto t0 = std::chrono::steady_clock::now();

  LoadedData data = load_train_data(cfg.dataset, cfg.seed);
  auto [train_set, monitor_set] =
      split_monitor(data.train, static_cast<std::size_t>(cfg.monitor_count),
                    mix_seed(cfg.seed, kSaltMonitor));

  NetworkSpec nspec;
  nspec.arch = cfg.arch;
  nspec.size = cfg.size;
  nspec.input_channels = data.train.channels();
  nspec.input_height = data.train.height();
  nspec.input_width = data.train.width();
  nspec.class_count = static_cast<std::size_t>(data.train.class_count);
  Network net = build_network(nspec, mix_seed(cfg.seed, kSaltInit));

  RegProfile profile = regularization_profile(cfg.profile);
  profile.absolute_correlation = cfg.decorr_abs;
  for (const auto& [layer, l] : profile.lambda)
    if (l > 0.0 && net.layer_channels(layer) < 2)
      throw std::invalid_argument("sparsity regularization on '" + layer +
                                  "' needs at least 2 channels");
#ifdef SRNET_DISABLE_REGULARIZERS
  if (!profile.is_noop())
    throw std::invalid_argument("this build has the regularizers disabled; profile must be none");
#endif

  auto optimizer = make_optimizer(cfg.optimizer, cfg.learning_rate);
  Rng dropout_rng(mix_seed(cfg.seed, kSaltDropout));

  TrainResult result{History{}, std::move(net), checksum_hex(dataset_checksum(data.train)), 0.0};
  Network& model = result.network;
  History& hist = result.history;
  hist.monitored_layers = model.monitored_layer_names();
  hist.weight_layers = model.weight_layer_names();
  for (const std::string& l : hist.monitored_layers)
    hist.monitored_channels.push_back(model.layer_channels(l));
  for (const std::string& l : hist.weight_layers)
    hist.weight_channels.push_back(model.layer_channels(l));

  const std::vector<Parameter*> params = model.parameters();

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto batches =
        batch_indices(train_set.size(), static_cast<std::size_t>(cfg.batch_size), cfg.seed, epoch);
    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      try {
        auto [batch, labels] = gather_batch(train_set, batches[bi]);
        Graph g;
        auto fwd = model.forward(g, batch, Network::Mode::Train, &dropout_rng);
        Var loss = cross_entropy(fwd.logits, labels);
#ifndef SRNET_DISABLE_REGULARIZERS
        auto ls = sparsity_penalty(fwd.preacts, profile);
        auto lc = decorrelation_penalty(fwd.weight_leaves, profile);
        loss = total_loss(loss, ls, lc);
#endif
        const double loss_value = loss.value().item();
        if (!std::isfinite(loss_value)) throw std::runtime_error("non-finite training loss");
        model.zero_grad();
        g.backward(loss);
        optimizer->step(params);
        loss_sum += loss_value * static_cast<double>(batches[bi].size());
        seen += batches[bi].size();
      } catch (const std::exception& e) {
        throw std::runtime_error("epoch " + std::to_string(epoch) + ", batch " +
                                 std::to_string(bi) + ": " + e.what());
      }
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(seen);

    const EvalResult val = evaluate_network(model, data.validation);
    rec.val_loss = val.loss;
    rec.val_accuracy = val.accuracy;

    if (monitor_set.size() > 0) {
      std::vector<EntropyAccumulator> accs(hist.monitored_layers.size());
      for (std::size_t at = 0; at < monitor_set.size(); at += kEvalChunk) {
        const std::size_t end = std::min(monitor_set.size(), at + kEvalChunk);
        std::vector<std::size_t> idx(end - at);
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = at + i;
        auto [batch, labels] = gather_batch(monitor_set, idx);
        (void)labels;
        Graph g;
        auto fwd = model.forward(g, batch, Network::Mode::Infer);
        std::size_t mi = 0;
        for (const auto& [name, preact] : fwd.preacts) {
          if (name == "fc2") continue;
          accumulate_entropy(preact.value(), accs[mi]);
          if (at == 0) rec.heatmap_grids.push_back(
              sparsity_heatmap({name, first_sample_field(preact.value())}, epoch).grid);
          ++mi;
        }
      }
      for (EntropyAccumulator& acc : accs) rec.mean_entropy.push_back(acc.mean());
    }

    for (const std::string& layer : hist.weight_layers) {
      const PearsonResult pr = pearson_filter_correlation(model.layer_weights(layer));
      rec.mean_abs_corr.push_back(mean_abs_correlation(pr.matrix));
      std::array<long, kCorrelationBins> bins{};
      const std::size_t d = pr.matrix.dim(0);
      for (std::size_t row = 1; row < d; ++row)
        for (std::size_t col = 0; col < row; ++col) ++bins[correlation_bin(pr.matrix(row, col))];
      rec.corr_hist.push_back(bins);
    }

    if (cfg.progress) {
      std::printf("%d\t%.9g\t%.9g\t%.9g", epoch, rec.train_loss, rec.val_loss, rec.val_accuracy);
      for (double h : rec.mean_entropy) std::printf("\t%.9g", h);
      std::printf("\n");
      std::fflush(stdout);
    }
    hist.epochs.push_back(std::move(rec));
  }

  result.duration_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  // exports
  namespace fs = std::filesystem;
  fs::create_directories(cfg.export_dir);
  export_timeseries(hist, cfg.export_dir);
  export_histograms(hist, cfg.export_dir);
  if (cfg.export_heatmaps) {
    for (const EpochRecord& r : hist.epochs)
      for (std::size_t i = 0; i < r.heatmap_grids.size(); ++i) {
        SparsityHeatmap h;
        h.layer_id = hist.monitored_layers[i];
        h.epoch = r.epoch;
        h.channels = hist.monitored_channels[i];
        h.grid = r.heatmap_grids[i];
        export_heatmap(h, cfg.export_dir);
      }
  }
  save_weights(model, (fs::path(cfg.export_dir) / "weights.srnw").string());
  write_manifest(cfg, result, data.val_spec, (fs::path(cfg.export_dir) / "manifest.json").string());
  return result;
}

TrainConfig config_from_manifest(const std::string& manifest_path) {
  std::ifstream f(manifest_path);
  if (!f) throw std::invalid_argument("cannot open manifest '" + manifest_path + "'");
  nlohmann::json j;
  f >> j;
  const nlohmann::json& c = j.at("config");
  TrainConfig cfg;
  cfg.optimizer = c.at("optimizer").get<std::string>();
  cfg.learning_rate = c.at("learning_rate").get<double>();
  cfg.batch_size = c.at("batch_size").get<int>();
  cfg.epochs = c.at("epochs").get<int>();
  cfg.seed = c.at("seed").get<std::uint64_t>();
  cfg.arch = c.at("arch").get<std::string>();
  cfg.size = c.at("size").get<std::string>();
  cfg.profile = c.at("profile").get<std::string>();
  cfg.decorr_abs = c.at("decorr_abs").get<bool>();
  cfg.monitor_count = c.at("monitor_count").get<int>();
  cfg.dataset = c.at("dataset").get<std::string>();
  cfg.export_dir = c.at("export_dir").get<std::string>();
  cfg.export_heatmaps = c.at("export_heatmaps").get<bool>();
  return cfg;
}

}  // namespace srnet
