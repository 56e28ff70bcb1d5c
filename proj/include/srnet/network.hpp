#ifndef SRNET_NETWORK_HPP
#define SRNET_NETWORK_HPP

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "srnet/graph.hpp"
#include "srnet/layers.hpp"
#include "srnet/rng.hpp"

namespace srnet {

// arch: vanillaNet | dropNet | normNet. size: tiny | s | m | xxl ("tiny" is a
// desk-scale addition for tests; the other rows follow the published table).
struct NetworkSpec {
  std::string arch = "vanillaNet";
  std::string size = "s";
  std::size_t input_channels = 3;
  std::size_t input_height = 32;
  std::size_t input_width = 32;
  std::size_t class_count = 10;
};

// Channel/neuron widths (conv1, conv2, conv3, conv4, fc1) for a named size.
std::array<std::size_t, 5> layer_widths(const std::string& size);

enum class LayerKind { Conv, Relu, Pool, Dropout, BatchNorm, Flatten, Dense };

struct LayerEntry {
  LayerKind kind;
  std::string name;
  std::unique_ptr<ConvLayer> conv;
  std::unique_ptr<DenseLayer> dense;
  std::unique_ptr<BatchNormLayer> bn;
  double dropout_p = 0.0;
};

// The fixed conv1-conv2-pool-conv3-conv4-pool-fc1-fc2 stack, with dropout or
// batch normalization after each pooling layer depending on the arch.
class Network {
 public:
  Network(NetworkSpec spec, std::uint64_t init_seed);
  Network(Network&&) = default;
  Network& operator=(Network&&) = default;

  const NetworkSpec& spec() const { return spec_; }

  enum class Mode { Train, Infer };

  struct Forward {
    Var logits;
    // pre-nonlinearity linear activations of every weighted layer, in order
    std::vector<std::pair<std::string, Var>> preacts;
    // the weighted layers' weight leaves (for weight-space penalties)
    std::vector<std::pair<std::string, Var>> weight_leaves;
  };

  Forward forward(Graph& g, Var input, Mode mode, Rng* dropout_rng = nullptr);
  Forward forward(Graph& g, const Tensor& batch, Mode mode, Rng* dropout_rng = nullptr);

  // conv1..conv4 and fc1; fc2 is excluded from the entropy diagnostics.
  std::vector<std::string> monitored_layer_names() const;
  // all weighted layers, conv1..fc2.
  std::vector<std::string> weight_layer_names() const;

  std::size_t layer_channels(const std::string& name) const;  // D of a weighted layer
  const Tensor& layer_weights(const std::string& name) const;
  std::size_t layer_parameter_count(const std::string& name) const;

  std::vector<Parameter*> parameters();
  std::size_t parameter_count() const;
  void zero_grad();

  // (kind, name) sequence, for structural comparisons.
  std::vector<std::pair<std::string, std::string>> layer_layout() const;

  // Every tensor that must persist to reproduce inference, in fixed order.
  struct NamedTensor {
    std::string name;
    Tensor* tensor;
  };
  std::vector<NamedTensor> persistent_tensors();

  const std::vector<LayerEntry>& entries() const { return entries_; }

 private:
  NetworkSpec spec_;
  std::vector<LayerEntry> entries_;
};

Network build_network(const NetworkSpec& spec, std::uint64_t init_seed);

}  // namespace srnet

#endif
