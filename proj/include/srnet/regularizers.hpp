#ifndef SRNET_REGULARIZERS_HPP
#define SRNET_REGULARIZERS_HPP

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "srnet/graph.hpp"
#include "srnet/tensor.hpp"

namespace srnet {

// Per-layer regularization strengths; layers absent from the maps default to 0.
struct RegProfile {
  std::map<std::string, double> lambda;  // sparsity weight, >= 0
  std::map<std::string, double> kappa;   // decorrelation weight, >= 0
  // Penalize |c| instead of the printed signed sum (off by default).
  bool absolute_correlation = false;

  double lambda_for(const std::string& layer) const;
  double kappa_for(const std::string& layer) const;
  bool is_noop() const;
};

// Named profiles: none, sr1 (sparsity on conv1..fc1), sr2 (sparsity on
// conv3, conv4, fc1), sr3 (sr2 plus decorrelation on conv1).
RegProfile regularization_profile(const std::string& name);

// Differentiable sum of RFAV entropies of a layer's linear activations,
// averaged over the batch: (1/N) sum_n sum_k H(softmax(a_k)). Accepts
// (N,D,A,B), (D,A,B), (N,D) or (D).
Var rfav_entropy_sum(Var preactivations);

// Differentiable sum over the strict lower triangle of the Pearson
// correlation matrix of the filters (rows of `weights` after flattening
// trailing dims); `absolute` sums |c| instead.
Var filter_correlation_sum(Var weights, bool absolute = false);

// L_s = -sum_i lambda_i * rfav_entropy_sum(layer i); empty when every lambda
// is zero so that an unregularized run builds the exact same graph as a build
// without these terms.
std::optional<Var> sparsity_penalty(const std::vector<std::pair<std::string, Var>>& layer_fields,
                                    const RegProfile& profile);

// L_c = sum_i kappa_i * filter_correlation_sum(layer i).
std::optional<Var> decorrelation_penalty(
    const std::vector<std::pair<std::string, Var>>& layer_weights, const RegProfile& profile);

// L = L* + L_s + L_c; absent terms leave the base node untouched.
Var total_loss(Var base, std::optional<Var> sparsity, std::optional<Var> decorrelation);

// Metric-side Pearson correlation matrix of filters, centered by the mean
// filter (the mean of all rows, componentwise). Degenerate pairs (zero-norm
// centered filter) are set to 0 and counted.
struct PearsonResult {
  Tensor matrix;  // (D, D), symmetric, unit diagonal for non-degenerate rows
  int degenerate_pairs = 0;
};
PearsonResult pearson_filter_correlation(const Tensor& weights);

// Mean |c_{d,e}| over the strict lower triangle.
double mean_abs_correlation(const Tensor& matrix);

}  // namespace srnet

#endif
