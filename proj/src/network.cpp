#include "srnet/network.hpp"

#include <cmath>
#include <stdexcept>

namespace srnet {

std::array<std::size_t, 5> layer_widths(const std::string& size) {
  if (size == "tiny") return {8, 8, 16, 16, 32};
  if (size == "s") return {16, 16, 32, 32, 64};
  if (size == "m") return {64, 64, 128, 128, 256};
  if (size == "xxl") return {256, 256, 512, 512, 1024};
  throw std::invalid_argument("unknown network size '" + size +
                              "' (expected tiny, s, m or xxl)");
}

namespace {

constexpr int kKernel = 3;
constexpr int kPad = 1;  // same-padding for 3x3, stride 1
constexpr double kDropoutP = 0.25;

Parameter make_weight(const std::string& name, std::vector<std::size_t> shape,
                      std::size_t fan_in, Rng& rng) {
  Parameter p(name, Tensor(std::move(shape)));
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (std::size_t i = 0; i < p.value.size(); ++i) p.value[i] = rng.uniform(-bound, bound);
  return p;
}

LayerEntry conv_entry(const std::string& name, std::size_t in_ch, std::size_t out_ch, Rng& rng) {
  LayerEntry e;
  e.kind = LayerKind::Conv;
  e.name = name;
  e.conv = std::make_unique<ConvLayer>();
  e.conv->weights = make_weight(name + ".weights",
                                {out_ch, in_ch, kKernel, kKernel},
                                in_ch * kKernel * kKernel, rng);
  e.conv->bias = Parameter(name + ".bias", Tensor({out_ch}));
  e.conv->stride = 1;
  e.conv->padding = kPad;
  return e;
}

LayerEntry dense_entry(const std::string& name, std::size_t in, std::size_t out, Rng& rng) {
  LayerEntry e;
  e.kind = LayerKind::Dense;
  e.name = name;
  e.dense = std::make_unique<DenseLayer>();
  e.dense->weights = make_weight(name + ".weights", {out, in}, in, rng);
  e.dense->bias = Parameter(name + ".bias", Tensor({out}));
  return e;
}

LayerEntry plain_entry(LayerKind kind, const std::string& name) {
  LayerEntry e;
  e.kind = kind;
  e.name = name;
  return e;
}

LayerEntry bn_entry(const std::string& name, std::size_t channels) {
  LayerEntry e;
  e.kind = LayerKind::BatchNorm;
  e.name = name;
  e.bn = std::make_unique<BatchNormLayer>();
  e.bn->gamma = Parameter(name + ".gamma", Tensor({channels}));
  e.bn->gamma.value.fill(1.0);
  e.bn->beta = Parameter(name + ".beta", Tensor({channels}));
  e.bn->running_mean = Tensor({channels});
  e.bn->running_var = Tensor({channels});
  e.bn->running_var.fill(1.0);
  return e;
}

}  // namespace

Network::Network(NetworkSpec spec, std::uint64_t init_seed) : spec_(std::move(spec)) {
  if (spec_.arch != "vanillaNet" && spec_.arch != "dropNet" && spec_.arch != "normNet")
    throw std::invalid_argument("unknown architecture '" + spec_.arch +
                                "' (expected vanillaNet, dropNet or normNet)");
  const auto widths = layer_widths(spec_.size);
  if (spec_.input_height % 4 != 0 || spec_.input_width % 4 != 0)
    throw std::invalid_argument("input spatial dims must be divisible by 4 (two 2x2 pools), got " +
                                std::to_string(spec_.input_height) + "x" +
                                std::to_string(spec_.input_width));
  if (spec_.class_count < 2) throw std::invalid_argument("need at least 2 classes");

  Rng rng(init_seed);
  entries_.push_back(conv_entry("conv1", spec_.input_channels, widths[0], rng));
  entries_.push_back(plain_entry(LayerKind::Relu, "relu1"));
  entries_.push_back(conv_entry("conv2", widths[0], widths[1], rng));
  entries_.push_back(plain_entry(LayerKind::Relu, "relu2"));
  entries_.push_back(plain_entry(LayerKind::Pool, "pool1"));
  if (spec_.arch == "dropNet") {
    LayerEntry e = plain_entry(LayerKind::Dropout, "drop1");
    e.dropout_p = kDropoutP;
    entries_.push_back(std::move(e));
  } else if (spec_.arch == "normNet") {
    entries_.push_back(bn_entry("bn1", widths[1]));
  }
  entries_.push_back(conv_entry("conv3", widths[1], widths[2], rng));
  entries_.push_back(plain_entry(LayerKind::Relu, "relu3"));
  entries_.push_back(conv_entry("conv4", widths[2], widths[3], rng));
  entries_.push_back(plain_entry(LayerKind::Relu, "relu4"));
  entries_.push_back(plain_entry(LayerKind::Pool, "pool2"));
  if (spec_.arch == "dropNet") {
    LayerEntry e = plain_entry(LayerKind::Dropout, "drop2");
    e.dropout_p = kDropoutP;
    entries_.push_back(std::move(e));
  } else if (spec_.arch == "normNet") {
    entries_.push_back(bn_entry("bn2", widths[3]));
  }
  entries_.push_back(plain_entry(LayerKind::Flatten, "flatten"));
  const std::size_t flat = widths[3] * (spec_.input_height / 4) * (spec_.input_width / 4);
  entries_.push_back(dense_entry("fc1", flat, widths[4], rng));
  entries_.push_back(plain_entry(LayerKind::Relu, "relu5"));
  entries_.push_back(dense_entry("fc2", widths[4], spec_.class_count, rng));
}

Network build_network(const NetworkSpec& spec, std::uint64_t init_seed) {
  return Network(spec, init_seed);
}

Network::Forward Network::forward(Graph& g, Var input, Mode mode, Rng* dropout_rng) {
  Forward out;
  Var x = input;
  for (LayerEntry& e : entries_) {
    switch (e.kind) {
      case LayerKind::Conv: {
        Var w = g.parameter(e.conv->weights);
        Var b = g.parameter(e.conv->bias);
        x = conv2d(x, w, b, e.conv->stride, e.conv->padding, e.name);
        out.preacts.emplace_back(e.name, x);
        out.weight_leaves.emplace_back(e.name, w);
        break;
      }
      case LayerKind::Dense: {
        Var w = g.parameter(e.dense->weights);
        Var b = g.parameter(e.dense->bias);
        x = dense(x, w, b, e.name);
        out.preacts.emplace_back(e.name, x);
        out.weight_leaves.emplace_back(e.name, w);
        break;
      }
      case LayerKind::Relu:
        x = relu(x);
        break;
      case LayerKind::Pool:
        x = maxpool2x2(x);
        break;
      case LayerKind::Dropout:
        if (mode == Mode::Train) {
          if (!dropout_rng)
            throw std::logic_error("training-mode forward through '" + e.name + "' needs an rng");
          x = dropout(x, e.dropout_p, *dropout_rng);
        }
        break;
      case LayerKind::BatchNorm: {
        Var gm = g.parameter(e.bn->gamma);
        Var bt = g.parameter(e.bn->beta);
        x = batchnorm(x, gm, bt, *e.bn, mode == Mode::Train);
        break;
      }
      case LayerKind::Flatten: {
        const Tensor& v = x.value();
        if (v.rank() == 4)
          x = reshape(x, {v.dim(0), v.dim(1) * v.dim(2) * v.dim(3)});
        else
          x = reshape(x, {v.size()});
        break;
      }
    }
  }
  out.logits = x;
  return out;
}

Network::Forward Network::forward(Graph& g, const Tensor& batch, Mode mode, Rng* dropout_rng) {
  return forward(g, g.input("images", batch), mode, dropout_rng);
}

std::vector<std::string> Network::monitored_layer_names() const {
  std::vector<std::string> out;
  for (const LayerEntry& e : entries_)
    if ((e.kind == LayerKind::Conv || e.kind == LayerKind::Dense) && e.name != "fc2")
      out.push_back(e.name);
  return out;
}

std::vector<std::string> Network::weight_layer_names() const {
  std::vector<std::string> out;
  for (const LayerEntry& e : entries_)
    if (e.kind == LayerKind::Conv || e.kind == LayerKind::Dense) out.push_back(e.name);
  return out;
}

namespace {
const LayerEntry& find_weighted(const std::vector<LayerEntry>& entries, const std::string& name) {
  for (const LayerEntry& e : entries)
    if (e.name == name && (e.kind == LayerKind::Conv || e.kind == LayerKind::Dense)) return e;
  throw std::invalid_argument("no weighted layer named '" + name + "'");
}
}  // namespace

std::size_t Network::layer_channels(const std::string& name) const {
  const LayerEntry& e = find_weighted(entries_, name);
  return e.kind == LayerKind::Conv ? e.conv->out_channels() : e.dense->out_features();
}

const Tensor& Network::layer_weights(const std::string& name) const {
  const LayerEntry& e = find_weighted(entries_, name);
  return e.kind == LayerKind::Conv ? e.conv->weights.value : e.dense->weights.value;
}

std::size_t Network::layer_parameter_count(const std::string& name) const {
  const LayerEntry& e = find_weighted(entries_, name);
  if (e.kind == LayerKind::Conv) return e.conv->weights.value.size() + e.conv->bias.value.size();
  return e.dense->weights.value.size() + e.dense->bias.value.size();
}

std::vector<Parameter*> Network::parameters() {
  std::vector<Parameter*> out;
  for (LayerEntry& e : entries_) {
    if (e.kind == LayerKind::Conv) {
      out.push_back(&e.conv->weights);
      out.push_back(&e.conv->bias);
    } else if (e.kind == LayerKind::Dense) {
      out.push_back(&e.dense->weights);
      out.push_back(&e.dense->bias);
    } else if (e.kind == LayerKind::BatchNorm) {
      out.push_back(&e.bn->gamma);
      out.push_back(&e.bn->beta);
    }
  }
  return out;
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const LayerEntry& e : entries_) {
    if (e.kind == LayerKind::Conv) n += e.conv->weights.value.size() + e.conv->bias.value.size();
    if (e.kind == LayerKind::Dense) n += e.dense->weights.value.size() + e.dense->bias.value.size();
    if (e.kind == LayerKind::BatchNorm) n += e.bn->gamma.value.size() + e.bn->beta.value.size();
  }
  return n;
}

void Network::zero_grad() {
  for (Parameter* p : parameters()) p->zero_grad();
}

std::vector<std::pair<std::string, std::string>> Network::layer_layout() const {
  static const char* kind_names[] = {"conv", "relu", "pool", "dropout", "batchnorm", "flatten",
                                     "dense"};
  std::vector<std::pair<std::string, std::string>> out;
  for (const LayerEntry& e : entries_)
    out.emplace_back(kind_names[static_cast<int>(e.kind)], e.name);
  return out;
}

std::vector<Network::NamedTensor> Network::persistent_tensors() {
  std::vector<NamedTensor> out;
  for (LayerEntry& e : entries_) {
    if (e.kind == LayerKind::Conv) {
      out.push_back({e.conv->weights.name, &e.conv->weights.value});
      out.push_back({e.conv->bias.name, &e.conv->bias.value});
    } else if (e.kind == LayerKind::Dense) {
      out.push_back({e.dense->weights.name, &e.dense->weights.value});
      out.push_back({e.dense->bias.name, &e.dense->bias.value});
    } else if (e.kind == LayerKind::BatchNorm) {
      out.push_back({e.bn->gamma.name, &e.bn->gamma.value});
      out.push_back({e.bn->beta.name, &e.bn->beta.value});
      out.push_back({e.name + ".running_mean", &e.bn->running_mean});
      out.push_back({e.name + ".running_var", &e.bn->running_var});
    }
  }
  return out;
}

}  // namespace srnet
