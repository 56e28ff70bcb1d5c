#include "srnet/exporting.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace srnet {

namespace fs = std::filesystem;

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::size_t correlation_bin(double c) {
  if (c < -1.0 - 1e-6 || c > 1.0 + 1e-6)
    throw std::invalid_argument("correlation coefficient " + format_double(c) +
                                " outside [-1, 1]");
  c = std::min(1.0, std::max(-1.0, c));
  // round half away from zero to two decimals
  const long b = std::lround(c * 100.0);
  return static_cast<std::size_t>(b + 100);
}

void histogram_update(CorrelationHistogram& hist, int epoch, const Tensor& corr) {
  if (corr.rank() != 2 || corr.dim(0) != corr.dim(1))
    throw std::invalid_argument("histogram_update: need a square correlation matrix");
  if (epoch < 0) throw std::invalid_argument("histogram_update: negative epoch");
  if (hist.counts.size() <= static_cast<std::size_t>(epoch))
    hist.counts.resize(static_cast<std::size_t>(epoch) + 1, std::array<long, kCorrelationBins>{});
  auto& bins = hist.counts[static_cast<std::size_t>(epoch)];
  const std::size_t d = corr.dim(0);
  for (std::size_t row = 1; row < d; ++row)
    for (std::size_t col = 0; col < row; ++col) ++bins[correlation_bin(corr(row, col))];
}

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write '" + path + "'");
  return f;
}

std::string bin_label(std::size_t bin) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%.2f", (static_cast<double>(bin) - 100.0) / 100.0);
  return buf;
}

}  // namespace

HeatmapFiles export_heatmap(const SparsityHeatmap& h, const std::string& dir) {
  if (h.grid.rank() != 2) throw std::invalid_argument("export_heatmap: grid must be rank-2");
  if (h.channels < 2) throw std::invalid_argument("export_heatmap: channel count must be >= 2");
  fs::create_directories(dir);
  const std::string stem = "layer_" + h.layer_id + "_epoch_" + std::to_string(h.epoch);
  HeatmapFiles files;
  files.text_path = (fs::path(dir) / (stem + ".txt")).string();
  files.pgm_path = (fs::path(dir) / (stem + ".pgm")).string();

  const std::size_t rows = h.grid.dim(0), cols = h.grid.dim(1);
  {
    std::ofstream f = open_out(files.text_path);
    for (std::size_t a = 0; a < rows; ++a) {
      for (std::size_t b = 0; b < cols; ++b)
        f << (b ? " " : "") << format_double(h.grid(a, b));
      f << "\n";
    }
  }
  {
    std::ofstream f = open_out(files.pgm_path);
    f << "P2\n" << cols << " " << rows << "\n255\n";
    const double scale = 255.0 / std::log(static_cast<double>(h.channels));
    for (std::size_t a = 0; a < rows; ++a) {
      for (std::size_t b = 0; b < cols; ++b) {
        long px = std::lround(h.grid(a, b) * scale);
        px = std::min(255L, std::max(0L, px));
        f << (b ? " " : "") << px;
      }
      f << "\n";
    }
  }
  return files;
}

Tensor parse_heatmap_text(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read '" + path + "'");
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::vector<double> row;
    double v;
    while (ss >> v) row.push_back(v);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::runtime_error("empty heatmap file '" + path + "'");
  Tensor t({rows.size(), rows[0].size()});
  for (std::size_t a = 0; a < rows.size(); ++a) {
    if (rows[a].size() != rows[0].size())
      throw std::runtime_error("ragged heatmap file '" + path + "'");
    for (std::size_t b = 0; b < rows[0].size(); ++b) t(a, b) = rows[a][b];
  }
  return t;
}

std::string export_timeseries(const History& h, const std::string& dir) {
  if (h.epochs.empty()) throw std::invalid_argument("export_timeseries: no epochs recorded");
  fs::create_directories(dir);
  const std::string path = (fs::path(dir) / "timeseries.csv").string();
  std::ofstream f = open_out(path);
  const bool with_entropy = !h.epochs.front().mean_entropy.empty();
  f << "epoch";
  if (with_entropy)
    for (const std::string& l : h.monitored_layers) f << ",mean_entropy_" << l;
  f << ",train_loss,val_loss,val_accuracy\n";
  for (const EpochRecord& r : h.epochs) {
    f << r.epoch;
    if (with_entropy)
      for (double e : r.mean_entropy) f << "," << format_double(e);
    f << "," << format_double(r.train_loss) << "," << format_double(r.val_loss) << ","
      << format_double(r.val_accuracy) << "\n";
  }
  return path;
}

std::vector<std::string> export_histograms(const History& h, const std::string& dir) {
  fs::create_directories(dir);
  std::vector<std::string> paths;
  for (std::size_t li = 0; li < h.weight_layers.size(); ++li) {
    const std::string path =
        (fs::path(dir) / ("correlation_hist_" + h.weight_layers[li] + ".csv")).string();
    std::ofstream f = open_out(path);
    f << "epoch";
    for (std::size_t b = 0; b < kCorrelationBins; ++b) f << ",c_" << bin_label(b);
    f << "\n";
    for (const EpochRecord& r : h.epochs) {
      f << r.epoch;
      for (long c : r.corr_hist.at(li)) f << "," << c;
      f << "\n";
    }
    paths.push_back(path);
  }
  return paths;
}

}  // namespace srnet
