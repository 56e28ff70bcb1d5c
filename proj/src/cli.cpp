#include "srnet/cli.hpp"

#include <cstdio>
#include <exception>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "srnet/data.hpp"
#include "srnet/exporting.hpp"
#include "srnet/regularizers.hpp"
#include "srnet/training.hpp"
#include "srnet/version.hpp"
#include "srnet/weights_io.hpp"

namespace srnet {

namespace {

int cmd_train(const TrainConfig& cfg) {
  TrainResult res = train(cfg);
  const EpochRecord& last = res.history.epochs.back();
  std::printf("done: epochs=%d val_loss=%s val_accuracy=%s best_val_accuracy=%s\n",
              cfg.epochs, format_double(last.val_loss).c_str(),
              format_double(last.val_accuracy).c_str(),
              format_double(res.history.best_val_accuracy()).c_str());
  std::printf("exports written to %s\n", cfg.export_dir.c_str());
  return 0;
}

int cmd_eval(const std::string& weights_path, const std::string& dataset_spec) {
  Network net = load_weights(weights_path);
  Dataset data = load_eval_dataset(dataset_spec);
  const EvalResult res = evaluate_network(net, data);
  std::printf("loss %s\n", format_double(res.loss).c_str());
  std::printf("accuracy %s\n", format_double(res.accuracy).c_str());
  return 0;
}

int cmd_inspect(const std::string& weights_path) {
  Network net = load_weights(weights_path);
  const NetworkSpec& s = net.spec();
  std::printf("network %s size %s input %zux%zux%zu classes %zu\n", s.arch.c_str(),
              s.size.c_str(), s.input_channels, s.input_height, s.input_width, s.class_count);
  std::printf("%-8s %6s %10s %14s\n", "layer", "D", "params", "mean_abs_corr");
  for (const std::string& layer : net.weight_layer_names()) {
    const PearsonResult pr = pearson_filter_correlation(net.layer_weights(layer));
    std::printf("%-8s %6zu %10zu %14.6f\n", layer.c_str(), net.layer_channels(layer),
                net.layer_parameter_count(layer), mean_abs_correlation(pr.matrix));
  }
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"srnet - CNN training with per-layer activation-entropy and "
               "filter-decorrelation regularization"};
  app.set_version_flag("--version", std::string(kEngineVersion));
  app.require_subcommand(1);

  TrainConfig cfg;
  cfg.progress = true;
  bool quiet = false;
  bool no_heatmaps = false;

  CLI::App* train_cmd = app.add_subcommand("train", "Train a network and export diagnostics");
  train_cmd->set_config("--config", "", "Config file (key=value); command-line flags win");
  train_cmd->allow_config_extras(CLI::config_extras_mode::error);
  train_cmd->add_option("--seed", cfg.seed, "Seed for init, shuffles, dropout and data");
  train_cmd->add_option("--epochs", cfg.epochs, "Training epochs")->check(CLI::PositiveNumber);
  train_cmd->add_option("--profile", cfg.profile, "Regularization profile")
      ->check(CLI::IsMember({"none", "sr1", "sr2", "sr3"}));
  train_cmd->add_option("--network", cfg.arch, "Architecture")
      ->check(CLI::IsMember({"vanillaNet", "dropNet", "normNet"}));
  train_cmd->add_option("--size", cfg.size, "Network size")
      ->check(CLI::IsMember({"tiny", "s", "m", "xxl"}));
  train_cmd->add_option("--dataset", cfg.dataset,
                        "Dataset spec, e.g. synthetic:n=2000,classes=5 or cifar10:<dir>");
  train_cmd->add_option("--export-dir", cfg.export_dir, "Directory for all run outputs");
  train_cmd->add_option("--optimizer", cfg.optimizer, "Optimizer")
      ->check(CLI::IsMember({"sgd", "adam"}));
  train_cmd->add_option("--lr", cfg.learning_rate, "Learning rate")->check(CLI::PositiveNumber);
  train_cmd->add_option("--batch-size", cfg.batch_size, "Batch size")
      ->check(CLI::PositiveNumber);
  train_cmd->add_option("--monitor", cfg.monitor_count,
                        "Held-out samples for sparsity metrics (0 disables)");
  train_cmd->add_flag("--decorr-abs", cfg.decorr_abs,
                      "Penalize |c| instead of signed correlations");
  train_cmd->add_flag("--no-heatmaps", no_heatmaps, "Skip per-epoch heatmap files");
  train_cmd->add_flag("--quiet", quiet, "Suppress per-epoch progress lines");

  std::string eval_weights, eval_dataset, inspect_weights;
  CLI::App* eval_cmd = app.add_subcommand("eval", "Evaluate saved weights on a dataset");
  eval_cmd->add_option("--weights", eval_weights, "Weights file from a train run")->required();
  eval_cmd->add_option("--dataset", eval_dataset, "Dataset spec")->required();

  CLI::App* inspect_cmd =
      app.add_subcommand("inspect", "Per-layer shape and filter-correlation summary");
  inspect_cmd->add_option("--weights", inspect_weights, "Weights file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (train_cmd->parsed()) {
      cfg.progress = !quiet;
      cfg.export_heatmaps = !no_heatmaps;
      return cmd_train(cfg);
    }
    if (eval_cmd->parsed()) return cmd_eval(eval_weights, eval_dataset);
    if (inspect_cmd->parsed()) return cmd_inspect(inspect_weights);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace srnet
