#ifndef SRNET_LAYERS_HPP
#define SRNET_LAYERS_HPP

#include <string>
#include <vector>

#include "srnet/graph.hpp"
#include "srnet/rng.hpp"
#include "srnet/tensor.hpp"

namespace srnet {

// 2D convolution parameters. weights shape: (out_channels, in_channels, kh, kw).
struct ConvLayer {
  Parameter weights;
  Parameter bias;
  int stride = 1;
  int padding = 0;

  std::size_t out_channels() const { return weights.value.dim(0); }
  std::size_t in_channels() const { return weights.value.dim(1); }
};

// weights shape: (out, in).
struct DenseLayer {
  Parameter weights;
  Parameter bias;

  std::size_t out_features() const { return weights.value.dim(0); }
  std::size_t in_features() const { return weights.value.dim(1); }
};

struct BatchNormLayer {
  Parameter gamma;
  Parameter beta;
  Tensor running_mean;
  Tensor running_var;
  double momentum = 0.9;
  double epsilon = 1e-5;
};

// Forward operations. Each takes graph handles, evaluates eagerly, and wires
// the backward pass; batched ranks carry a leading N dimension.

// input (N,C,H,W) or (C,H,W); output (N,D,A,B) or (D,A,B). The returned node
// is the pre-nonlinearity linear activation.
Var conv2d(Var input, Var weights, Var bias, int stride, int padding,
           const std::string& tag = "conv");

// input (N,in) or (in); output (N,out) or (out).
Var dense(Var input, Var weights, Var bias, const std::string& tag = "dense");

// 2x2 window, stride 2; H and W must be even. Gradient routes to the argmax
// cell, ties broken by first index in row-major order.
Var maxpool2x2(Var input);

Var relu(Var input);

// softmax over the last dimension (rows of a matrix, the whole of a vector).
Var softmax(Var input);

// Training-mode dropout: zero with probability p, scale survivors by 1/(1-p).
// The mask is drawn once when the node is built; inference-mode forwards
// simply omit the node.
Var dropout(Var input, double p, Rng& rng);

// Batch normalization over (N[,H,W]) per channel. In training mode the batch
// statistics are used and `layer`'s running stats are updated once, at build
// time; recompute() does not touch them. In inference mode the running stats
// captured at build time are used.
Var batchnorm(Var input, Var gamma, Var beta, BatchNormLayer& layer, bool training);

// Mean over the batch of -ln softmax(logits)[label].
Var cross_entropy(Var logits, const std::vector<int>& labels);

}  // namespace srnet

#endif
