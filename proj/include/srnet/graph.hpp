#ifndef SRNET_GRAPH_HPP
#define SRNET_GRAPH_HPP

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "srnet/tensor.hpp"

namespace srnet {

class Graph;

// One evaluated operation. Nodes live in graph creation order, which is by
// construction a topological order: an operation can only reference nodes
// that already exist.
struct Node {
  std::string name;
  Tensor value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<Node*> inputs;
  // Recomputes `value` from the inputs (null for bound leaves).
  std::function<void(Node&)> recompute;
  // Scatters `grad` into the inputs' grads, additively.
  std::function<void(Node&)> backprop;
  Parameter* param = nullptr;
  std::size_t index = 0;
};

// Handle to a node; cheap to copy, owned by the graph.
class Var {
 public:
  Var() = default;
  Var(Graph* g, Node* n) : graph_(g), node_(n) {}

  const Tensor& value() const { return node_->value; }
  const std::vector<double>& grad() const { return node_->grad; }
  Node* node() const { return node_; }
  Graph* graph() const { return graph_; }
  explicit operator bool() const { return node_ != nullptr; }

 private:
  Graph* graph_ = nullptr;
  Node* node_ = nullptr;
};

// Reverse-mode tape. Operations evaluate eagerly as the graph is built;
// recompute() re-runs every forward in order after inputs or parameters
// changed in place, and backward() sweeps the tape once in reverse.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // Named rebindable leaf (network inputs, test operands).
  Var input(const std::string& name, Tensor value);

  // Leaf backed by external parameter storage; backward accumulates into
  // p.grad so independent losses can be backpropagated separately and summed.
  Var parameter(Parameter& p);

  // Non-differentiable leaf.
  Var constant(Tensor value, const std::string& name = "const");

  void bind(const std::string& name, Tensor value);
  void mark_output(const std::string& name, Var v);
  Var output(const std::string& name) const;

  // Re-runs all forwards in topological order.
  void recompute();

  // bind() every entry, recompute, and return the marked outputs.
  std::map<std::string, Tensor> evaluate(const std::map<std::string, Tensor>& inputs);

  // Single reverse sweep; node grads are zeroed first, parameter grads are
  // accumulated (+=). Throws if loss is not scalar.
  void backward(Var loss);

  // Zeroes the registered parameters' grads, backpropagates from `loss`, and
  // returns dLoss/dParam per parameter name.
  std::map<std::string, Tensor> gradients(Var loss);

  const std::vector<Parameter*>& parameters() const { return params_; }
  std::size_t node_count() const { return nodes_.size(); }

  // Internal: used by every operation to append a node. `recompute` is run
  // once immediately, so building the graph is also evaluating it.
  Var make(std::string name, std::vector<std::size_t> out_shape, std::vector<Node*> inputs,
           std::function<void(Node&)> recompute, std::function<void(Node&)> backprop);

 private:
  void run_forward(Node& n);

  std::vector<std::unique_ptr<Node>> nodes_;
  std::map<std::string, Node*> named_inputs_;
  std::map<std::string, Node*> outputs_;
  std::vector<Parameter*> params_;
};

// --- generic differentiable operations -------------------------------------

Var add(Var a, Var b);              // elementwise, same shape
Var mul(Var a, Var b);              // elementwise (Hadamard)
Var scale(Var a, double c);
Var sum_all(Var a);                 // scalar
Var matmul(Var a, Var b);           // (m x k) * (k x n)
Var reshape(Var a, std::vector<std::size_t> shape);
Var log_safe(Var a);                // ln(max(x, 1e-12))

// Central-difference gradient oracle: (f(p+h) - f(p-h)) / (2h) per component.
// Independent of the backward pass; `f` must be deterministic.
std::map<std::string, Tensor> finite_diff_gradient(const std::function<double()>& f,
                                                   const std::vector<Parameter*>& params,
                                                   double h);

}  // namespace srnet

#endif
