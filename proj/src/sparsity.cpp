#include "srnet/sparsity.hpp"

#include <cmath>
#include <stdexcept>

#include "srnet/mathutil.hpp"

namespace srnet {

namespace {

void check_field_shape(const Tensor& t) {
  if (t.rank() != 3)
    throw std::invalid_argument("rfav: activations must be rank-3 (D,A,B), got " +
                                shape_str(t.shape()));
  if (t.dim(0) < 2)
    throw std::invalid_argument("rfav: entropy is degenerate for D < 2 channels");
}

}  // namespace

std::vector<std::vector<double>> rfav_extract(const Tensor& activations) {
  check_field_shape(activations);
  const std::size_t d = activations.dim(0);
  const std::size_t r = activations.dim(1) * activations.dim(2);
  std::vector<std::vector<double>> out(r, std::vector<double>(d));
  const double* x = activations.data();
  for (std::size_t k = 0; k < r; ++k)
    for (std::size_t l = 0; l < d; ++l) out[k][l] = x[l * r + k];
  return out;
}

double rfav_entropy(const double* a, std::size_t d) {
  for (std::size_t i = 0; i < d; ++i)
    if (!std::isfinite(a[i])) throw std::invalid_argument("rfav_entropy: non-finite component");
  std::vector<double> p(d);
  return entropy_of_logits(a, d, p.data());
}

double rfav_entropy(const std::vector<double>& a) { return rfav_entropy(a.data(), a.size()); }

double perplexity(double entropy) {
  if (entropy < 0.0) throw std::invalid_argument("perplexity: entropy must be non-negative");
  return std::exp(entropy);
}

SparsityHeatmap sparsity_heatmap(const RfavField& field, int epoch) {
  check_field_shape(field.activations);
  const std::size_t d = field.activations.dim(0);
  const std::size_t a = field.activations.dim(1);
  const std::size_t b = field.activations.dim(2);
  const std::size_t r = a * b;
  SparsityHeatmap h;
  h.layer_id = field.layer_id;
  h.epoch = epoch;
  h.channels = d;
  h.grid = Tensor({a, b});
  const double* x = field.activations.data();
  std::vector<double> chan(d), p(d);
  for (std::size_t k = 0; k < r; ++k) {
    for (std::size_t l = 0; l < d; ++l) chan[l] = x[l * r + k];
    h.grid[k] = entropy_of_logits(chan.data(), d, p.data());
  }
  return h;
}

double mean_entropy(const std::vector<RfavField>& fields) {
  if (fields.empty()) throw std::invalid_argument("mean_entropy: empty monitor set");
  EntropyAccumulator acc;
  for (const RfavField& f : fields) acc.add(f.activations);
  return acc.mean();
}

void EntropyAccumulator::add(const Tensor& activations) {
  if (activations.rank() == 1) {
    if (activations.dim(0) < 2)
      throw std::invalid_argument("rfav: entropy is degenerate for D < 2 channels");
    add_channels_at(activations.data(), activations.dim(0));
    return;
  }
  check_field_shape(activations);
  const std::size_t d = activations.dim(0);
  const std::size_t r = activations.dim(1) * activations.dim(2);
  const double* x = activations.data();
  std::vector<double> chan(d);
  for (std::size_t k = 0; k < r; ++k) {
    for (std::size_t l = 0; l < d; ++l) chan[l] = x[l * r + k];
    add_channels_at(chan.data(), d);
  }
}

void EntropyAccumulator::add_channels_at(const double* channel_values, std::size_t d) {
  std::vector<double> p(d);
  sum_ += entropy_of_logits(channel_values, d, p.data());
  ++count_;
}

double EntropyAccumulator::mean() const {
  if (count_ == 0) throw std::invalid_argument("mean_entropy: empty monitor set");
  return sum_ / static_cast<double>(count_);
}

}  // namespace srnet
