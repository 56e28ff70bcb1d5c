#ifndef SRNET_SPARSITY_HPP
#define SRNET_SPARSITY_HPP

#include <string>
#include <vector>

#include "srnet/tensor.hpp"

namespace srnet {

// A layer's pre-nonlinearity linear activations for one input sample, viewed
// as R = A*B receptive-field activation vectors of dimension D. Dense layers
// are the degenerate case A = B = 1.
struct RfavField {
  std::string layer_id;
  Tensor activations;  // (D, A, B)
};

// The D channel values at each spatial position, listed by k = a*B + b.
std::vector<std::vector<double>> rfav_extract(const Tensor& activations);

// Entropy (nats) of softmax over the vector's components; in [0, ln D].
double rfav_entropy(const double* a, std::size_t d);
double rfav_entropy(const std::vector<double>& a);

// e^H, the effective number of active channels.
double perplexity(double entropy);

struct SparsityHeatmap {
  std::string layer_id;
  int epoch = 0;
  std::size_t channels = 0;  // D; entropy range is [0, ln D]
  Tensor grid;               // (A, B) entropies in nats
};

SparsityHeatmap sparsity_heatmap(const RfavField& field, int epoch);

// Flat arithmetic mean of every receptive field's entropy across all samples.
double mean_entropy(const std::vector<RfavField>& fields);

// Streaming counterpart used by the training loop; accumulation order is the
// sample order, so results are bit-reproducible.
class EntropyAccumulator {
 public:
  // activations: (D, A, B) or (D) for one sample.
  void add(const Tensor& activations);
  void add_channels_at(const double* channel_values, std::size_t d);
  double mean() const;
  std::size_t count() const { return count_; }

 private:
  double sum_ = 0.0;
  std::size_t count_ = 0;
};

}  // namespace srnet

#endif
