#ifndef SRNET_EXPORTING_HPP
#define SRNET_EXPORTING_HPP

#include <array>
#include <string>
#include <vector>

#include "srnet/sparsity.hpp"
#include "srnet/training.hpp"

namespace srnet {

// Binned counts of the strict lower triangle of a layer's correlation
// matrix, one row per epoch; 201 bins for coefficients rounded to two
// decimals (half away from zero) over [-1.00, 1.00].
struct CorrelationHistogram {
  std::string layer_id;
  std::vector<std::array<long, kCorrelationBins>> counts;
};

// Bin index for one coefficient; values within 1e-6 outside [-1,1] are
// clamped, anything further out is an error.
std::size_t correlation_bin(double c);

void histogram_update(CorrelationHistogram& hist, int epoch, const Tensor& corr);

struct HeatmapFiles {
  std::string text_path;  // raw entropies, full precision
  std::string pgm_path;   // 8-bit graymap, [0, ln D] -> [0, 255]
};

// Writes layer_<id>_epoch_<e>.txt and .pgm under `dir`.
HeatmapFiles export_heatmap(const SparsityHeatmap& h, const std::string& dir);

// timeseries.csv: epoch, per-layer mean entropy, train loss, val loss,
// val accuracy; one row per epoch.
std::string export_timeseries(const History& h, const std::string& dir);

// correlation_hist_<layer>.csv per weight layer.
std::vector<std::string> export_histograms(const History& h, const std::string& dir);

// Reads back a heatmap text grid (round-trip checks, downstream tooling).
Tensor parse_heatmap_text(const std::string& path);

// Formats a double so that parsing recovers the exact value.
std::string format_double(double v);

}  // namespace srnet

#endif
