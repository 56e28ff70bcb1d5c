#include "srnet/graph.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "srnet/mathutil.hpp"

namespace srnet {

std::string shape_str(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ")";
  return os.str();
}

namespace {

void check_finite_or_throw(const Node& n) {
  if (!n.value.all_finite())
    throw std::runtime_error("non-finite value produced by node '" + n.name + "'");
}

void require_same_graph(Var a, Var b) {
  if (a.graph() != b.graph()) throw std::logic_error("operands belong to different graphs");
}

}  // namespace

Var Graph::make(std::string name, std::vector<std::size_t> out_shape, std::vector<Node*> inputs,
                std::function<void(Node&)> recompute, std::function<void(Node&)> backprop) {
  auto node = std::make_unique<Node>();
  node->name = std::move(name);
  node->value = Tensor(std::move(out_shape));
  node->inputs = std::move(inputs);
  node->recompute = std::move(recompute);
  node->backprop = std::move(backprop);
  node->index = nodes_.size();
  for (Node* in : node->inputs) {
    if (in->index >= node->index && in != node.get())
      throw std::logic_error("graph cycle: node '" + node->name + "' references a later node");
    node->requires_grad = node->requires_grad || in->requires_grad;
  }
  Node* raw = node.get();
  nodes_.push_back(std::move(node));
  if (raw->recompute) run_forward(*raw);
  return Var(this, raw);
}

void Graph::run_forward(Node& n) {
  n.recompute(n);
  check_finite_or_throw(n);
}

Var Graph::input(const std::string& name, Tensor value) {
  if (named_inputs_.count(name)) throw std::logic_error("duplicate input name '" + name + "'");
  if (!value.all_finite()) throw std::runtime_error("non-finite input tensor '" + name + "'");
  auto node = std::make_unique<Node>();
  node->name = name;
  node->value = std::move(value);
  node->index = nodes_.size();
  Node* raw = node.get();
  nodes_.push_back(std::move(node));
  named_inputs_[name] = raw;
  return Var(this, raw);
}

Var Graph::parameter(Parameter& p) {
  auto node = std::make_unique<Node>();
  node->name = p.name;
  node->value = p.value;
  node->requires_grad = true;
  node->param = &p;
  node->recompute = [](Node& n) { n.value = n.param->value; };
  node->backprop = [](Node& n) {
    double* g = n.param->grad.data();
    for (std::size_t i = 0; i < n.grad.size(); ++i) g[i] += n.grad[i];
  };
  node->index = nodes_.size();
  Node* raw = node.get();
  nodes_.push_back(std::move(node));
  params_.push_back(&p);
  return Var(this, raw);
}

Var Graph::constant(Tensor value, const std::string& name) {
  auto node = std::make_unique<Node>();
  node->name = name;
  node->value = std::move(value);
  node->index = nodes_.size();
  Node* raw = node.get();
  nodes_.push_back(std::move(node));
  return Var(this, raw);
}

void Graph::bind(const std::string& name, Tensor value) {
  auto it = named_inputs_.find(name);
  if (it == named_inputs_.end()) throw std::invalid_argument("unknown input '" + name + "'");
  if (!value.same_shape(it->second->value))
    throw std::invalid_argument("input '" + name + "' expects shape " +
                                shape_str(it->second->value.shape()) + ", got " +
                                shape_str(value.shape()));
  if (!value.all_finite()) throw std::runtime_error("non-finite input tensor '" + name + "'");
  it->second->value = std::move(value);
}

void Graph::mark_output(const std::string& name, Var v) { outputs_[name] = v.node(); }

Var Graph::output(const std::string& name) const {
  auto it = outputs_.find(name);
  if (it == outputs_.end()) throw std::invalid_argument("unknown output '" + name + "'");
  return Var(const_cast<Graph*>(this), it->second);
}

void Graph::recompute() {
  for (auto& n : nodes_)
    if (n->recompute) run_forward(*n);
}

std::map<std::string, Tensor> Graph::evaluate(const std::map<std::string, Tensor>& inputs) {
  for (const auto& [name, value] : inputs) bind(name, value);
  recompute();
  std::map<std::string, Tensor> out;
  for (const auto& [name, node] : outputs_) out.emplace(name, node->value);
  return out;
}

void Graph::backward(Var loss) {
  if (loss.graph() != this) throw std::logic_error("loss belongs to a different graph");
  if (loss.node()->value.size() != 1)
    throw std::invalid_argument("backward requires a scalar loss, node '" + loss.node()->name +
                                "' has shape " + shape_str(loss.node()->value.shape()));
  for (auto& n : nodes_) n->grad.assign(n->value.size(), 0.0);
  loss.node()->grad[0] = 1.0;
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    Node& n = *nodes_[i];
    if (n.requires_grad && n.backprop) n.backprop(n);
  }
}

std::map<std::string, Tensor> Graph::gradients(Var loss) {
  for (Parameter* p : params_) p->zero_grad();
  backward(loss);
  std::map<std::string, Tensor> out;
  for (Parameter* p : params_) out.emplace(p->name, p->grad);
  return out;
}

// --- generic operations -----------------------------------------------------

Var add(Var a, Var b) {
  require_same_graph(a, b);
  if (!a.value().same_shape(b.value()))
    throw std::invalid_argument("add: shape mismatch " + shape_str(a.value().shape()) + " vs " +
                                shape_str(b.value().shape()));
  return a.graph()->make(
      "add", a.value().shape(), {a.node(), b.node()},
      [](Node& n) {
        const double* x = n.inputs[0]->value.data();
        const double* y = n.inputs[1]->value.data();
        double* out = n.value.data();
        for (std::size_t i = 0; i < n.value.size(); ++i) out[i] = x[i] + y[i];
      },
      [](Node& n) {
        for (Node* in : n.inputs) {
          if (!in->requires_grad) continue;
          for (std::size_t i = 0; i < n.grad.size(); ++i) in->grad[i] += n.grad[i];
        }
      });
}

Var mul(Var a, Var b) {
  require_same_graph(a, b);
  if (!a.value().same_shape(b.value()))
    throw std::invalid_argument("mul: shape mismatch " + shape_str(a.value().shape()) + " vs " +
                                shape_str(b.value().shape()));
  return a.graph()->make(
      "mul", a.value().shape(), {a.node(), b.node()},
      [](Node& n) {
        const double* x = n.inputs[0]->value.data();
        const double* y = n.inputs[1]->value.data();
        double* out = n.value.data();
        for (std::size_t i = 0; i < n.value.size(); ++i) out[i] = x[i] * y[i];
      },
      [](Node& n) {
        Node* a = n.inputs[0];
        Node* b = n.inputs[1];
        if (a->requires_grad)
          for (std::size_t i = 0; i < n.grad.size(); ++i) a->grad[i] += n.grad[i] * b->value[i];
        if (b->requires_grad)
          for (std::size_t i = 0; i < n.grad.size(); ++i) b->grad[i] += n.grad[i] * a->value[i];
      });
}

Var scale(Var a, double c) {
  return a.graph()->make(
      "scale", a.value().shape(), {a.node()},
      [c](Node& n) {
        const double* x = n.inputs[0]->value.data();
        double* out = n.value.data();
        for (std::size_t i = 0; i < n.value.size(); ++i) out[i] = c * x[i];
      },
      [c](Node& n) {
        Node* in = n.inputs[0];
        if (!in->requires_grad) return;
        for (std::size_t i = 0; i < n.grad.size(); ++i) in->grad[i] += c * n.grad[i];
      });
}

Var sum_all(Var a) {
  return a.graph()->make(
      "sum", {1}, {a.node()},
      [](Node& n) {
        const double* x = n.inputs[0]->value.data();
        double s = 0.0;
        for (std::size_t i = 0; i < n.inputs[0]->value.size(); ++i) s += x[i];
        n.value[0] = s;
      },
      [](Node& n) {
        Node* in = n.inputs[0];
        if (!in->requires_grad) return;
        const double g = n.grad[0];
        for (std::size_t i = 0; i < in->grad.size(); ++i) in->grad[i] += g;
      });
}

Var matmul(Var a, Var b) {
  require_same_graph(a, b);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.rank() != 2 || B.rank() != 2)
    throw std::invalid_argument("matmul expects rank-2 operands");
  if (A.dim(1) != B.dim(0))
    throw std::invalid_argument("matmul: inner dimensions disagree, " + shape_str(A.shape()) +
                                " vs " + shape_str(B.shape()));
  const std::size_t m = A.dim(0), k = A.dim(1), p = B.dim(1);
  return a.graph()->make(
      "matmul", {m, p}, {a.node(), b.node()},
      [m, k, p](Node& n) {
        const double* A = n.inputs[0]->value.data();
        const double* B = n.inputs[1]->value.data();
        double* C = n.value.data();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < p; ++j) {
            double s = 0.0;
            for (std::size_t l = 0; l < k; ++l) s += A[i * k + l] * B[l * p + j];
            C[i * p + j] = s;
          }
      },
      [m, k, p](Node& n) {
        Node* a = n.inputs[0];
        Node* b = n.inputs[1];
        const double* G = n.grad.data();
        if (a->requires_grad) {
          const double* B = b->value.data();
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t l = 0; l < k; ++l) {
              double s = 0.0;
              for (std::size_t j = 0; j < p; ++j) s += G[i * p + j] * B[l * p + j];
              a->grad[i * k + l] += s;
            }
        }
        if (b->requires_grad) {
          const double* A = a->value.data();
          for (std::size_t l = 0; l < k; ++l)
            for (std::size_t j = 0; j < p; ++j) {
              double s = 0.0;
              for (std::size_t i = 0; i < m; ++i) s += A[i * k + l] * G[i * p + j];
              b->grad[l * p + j] += s;
            }
        }
      });
}

Var reshape(Var a, std::vector<std::size_t> shape) {
  if (shape_product(shape) != a.value().size())
    throw std::invalid_argument("reshape to " + shape_str(shape) + " changes element count");
  return a.graph()->make(
      "reshape", std::move(shape), {a.node()},
      [](Node& n) {
        const double* x = n.inputs[0]->value.data();
        double* out = n.value.data();
        for (std::size_t i = 0; i < n.value.size(); ++i) out[i] = x[i];
      },
      [](Node& n) {
        Node* in = n.inputs[0];
        if (!in->requires_grad) return;
        for (std::size_t i = 0; i < n.grad.size(); ++i) in->grad[i] += n.grad[i];
      });
}

Var log_safe(Var a) {
  return a.graph()->make(
      "log", a.value().shape(), {a.node()},
      [](Node& n) {
        const double* x = n.inputs[0]->value.data();
        double* out = n.value.data();
        for (std::size_t i = 0; i < n.value.size(); ++i) out[i] = safe_log(x[i]);
      },
      [](Node& n) {
        Node* in = n.inputs[0];
        if (!in->requires_grad) return;
        for (std::size_t i = 0; i < n.grad.size(); ++i)
          if (in->value[i] > kLogFloor) in->grad[i] += n.grad[i] / in->value[i];
      });
}

std::map<std::string, Tensor> finite_diff_gradient(const std::function<double()>& f,
                                                   const std::vector<Parameter*>& params,
                                                   double h) {
  if (!(h > 0.0)) throw std::invalid_argument("finite_diff_gradient: step must be positive");
  std::map<std::string, Tensor> out;
  for (Parameter* p : params) {
    Tensor g(p->value.shape());
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double saved = p->value[i];
      p->value[i] = saved + h;
      const double fp = f();
      p->value[i] = saved - h;
      const double fm = f();
      p->value[i] = saved;
      if (!std::isfinite(fp) || !std::isfinite(fm))
        throw std::runtime_error("finite_diff_gradient: non-finite evaluation at parameter '" +
                                 p->name + "'");
      g[i] = (fp - fm) / (2.0 * h);
    }
    out.emplace(p->name, std::move(g));
  }
  // restore cached forward state
  if (!params.empty()) f();
  return out;
}

}  // namespace srnet
