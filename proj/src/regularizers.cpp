#include "srnet/regularizers.hpp"

#include <cmath>
#include <iostream>
#include <memory>
#include <stdexcept>

#include "srnet/mathutil.hpp"

namespace srnet {

namespace {

constexpr double kZeroNorm = 1e-30;

struct FieldDims {
  std::size_t n, d, r;  // batch, channels, receptive fields per sample
};

FieldDims field_dims(const Tensor& t) {
  FieldDims f;
  switch (t.rank()) {
    case 4: f = {t.dim(0), t.dim(1), t.dim(2) * t.dim(3)}; break;
    case 3: f = {1, t.dim(0), t.dim(1) * t.dim(2)}; break;
    case 2: f = {t.dim(0), t.dim(1), 1}; break;
    case 1: f = {1, t.dim(0), 1}; break;
    default:
      throw std::invalid_argument("rfav_entropy_sum: unsupported rank " +
                                  std::to_string(t.rank()));
  }
  if (f.d < 2)
    throw std::invalid_argument("rfav_entropy_sum: entropy is degenerate for D < 2 channels");
  return f;
}

}  // namespace

double RegProfile::lambda_for(const std::string& layer) const {
  auto it = lambda.find(layer);
  return it == lambda.end() ? 0.0 : it->second;
}

double RegProfile::kappa_for(const std::string& layer) const {
  auto it = kappa.find(layer);
  return it == kappa.end() ? 0.0 : it->second;
}

bool RegProfile::is_noop() const {
  for (const auto& [_, v] : lambda)
    if (v != 0.0) return false;
  for (const auto& [_, v] : kappa)
    if (v != 0.0) return false;
  return true;
}

RegProfile regularization_profile(const std::string& name) {
  RegProfile p;
  if (name == "none") return p;
  if (name == "sr1") {
    for (const char* l : {"conv1", "conv2", "conv3", "conv4", "fc1"}) p.lambda[l] = 0.001;
    return p;
  }
  if (name == "sr2") {
    for (const char* l : {"conv3", "conv4", "fc1"}) p.lambda[l] = 0.001;
    return p;
  }
  if (name == "sr3") {
    for (const char* l : {"conv3", "conv4", "fc1"}) p.lambda[l] = 0.001;
    p.kappa["conv1"] = 1.0;
    return p;
  }
  throw std::invalid_argument("unknown regularization profile '" + name +
                              "' (expected none, sr1, sr2 or sr3)");
}

Var rfav_entropy_sum(Var preactivations) {
  const FieldDims f = field_dims(preactivations.value());
  // probs and entropies per (sample, field) are cached for the backward pass
  auto probs = std::make_shared<std::vector<double>>(f.n * f.r * f.d);
  auto ents = std::make_shared<std::vector<double>>(f.n * f.r);

  auto forward = [f, probs, ents](Node& nd) {
    const double* x = nd.inputs[0]->value.data();
    std::vector<double> chan(f.d);
    double total = 0.0;
    for (std::size_t nn = 0; nn < f.n; ++nn) {
      const double* xs = x + nn * f.d * f.r;
      for (std::size_t k = 0; k < f.r; ++k) {
        for (std::size_t l = 0; l < f.d; ++l) chan[l] = xs[l * f.r + k];
        double* p = probs->data() + (nn * f.r + k) * f.d;
        const double h = entropy_of_logits(chan.data(), f.d, p);
        (*ents)[nn * f.r + k] = h;
        total += h;
      }
    }
    nd.value[0] = total / static_cast<double>(f.n);
  };

  auto backward = [f, probs, ents](Node& nd) {
    Node* in = nd.inputs[0];
    if (!in->requires_grad) return;
    const double scale = nd.grad[0] / static_cast<double>(f.n);
    for (std::size_t nn = 0; nn < f.n; ++nn) {
      double* g = in->grad.data() + nn * f.d * f.r;
      for (std::size_t k = 0; k < f.r; ++k) {
        const double* p = probs->data() + (nn * f.r + k) * f.d;
        const double h = (*ents)[nn * f.r + k];
        // dH/da_l = -p_l (ln p_l + H)
        for (std::size_t l = 0; l < f.d; ++l)
          g[l * f.r + k] -= scale * p[l] * (safe_log(p[l]) + h);
      }
    }
  };

  return preactivations.graph()->make("rfav_entropy_sum", {1}, {preactivations.node()}, forward,
                                      backward);
}

Var filter_correlation_sum(Var weights, bool absolute) {
  const Tensor& w = weights.value();
  if (w.rank() < 2)
    throw std::invalid_argument("filter_correlation_sum: weights must have rank >= 2");
  const std::size_t d = w.dim(0);
  const std::size_t m = w.size() / d;
  if (d < 2) throw std::invalid_argument("filter_correlation_sum: need at least 2 filters");

  struct Cache {
    std::vector<double> centered;  // (d, m)
    std::vector<double> norm;      // (d)
    std::vector<double> corr;      // (d, d), 0 on degenerate pairs
    bool warned = false;
  };
  auto cache = std::make_shared<Cache>();
  cache->centered.resize(d * m);
  cache->norm.resize(d);
  cache->corr.resize(d * d);

  auto forward = [d, m, absolute, cache](Node& nd) {
    const double* w = nd.inputs[0]->value.data();
    double* x = cache->centered.data();
    for (std::size_t col = 0; col < m; ++col) {
      double mean = 0.0;
      for (std::size_t row = 0; row < d; ++row) mean += w[row * m + col];
      mean /= static_cast<double>(d);
      for (std::size_t row = 0; row < d; ++row) x[row * m + col] = w[row * m + col] - mean;
    }
    for (std::size_t row = 0; row < d; ++row) {
      double s = 0.0;
      for (std::size_t col = 0; col < m; ++col) s += x[row * m + col] * x[row * m + col];
      cache->norm[row] = std::sqrt(s);
    }
    double total = 0.0;
    int degenerate = 0;
    for (std::size_t e = 0; e < d; ++e) {
      for (std::size_t dd = e + 1; dd < d; ++dd) {
        const bool zd = cache->norm[dd] <= kZeroNorm;
        const bool ze = cache->norm[e] <= kZeroNorm;
        double c;
        if (!zd && !ze) {
          double dot = 0.0;
          for (std::size_t col = 0; col < m; ++col) dot += x[dd * m + col] * x[e * m + col];
          c = dot / (cache->norm[dd] * cache->norm[e]);
        } else if (zd && ze) {
          // both filters equal the mean filter, i.e. they are identical
          c = 1.0;
        } else {
          c = 0.0;
          ++degenerate;
        }
        cache->corr[dd * d + e] = c;
        cache->corr[e * d + dd] = c;
        total += absolute ? std::fabs(c) : c;
      }
    }
    if (degenerate > 0 && !cache->warned) {
      std::cerr << "warning: " << degenerate
                << " filter pair(s) with zero-norm centered weights treated as uncorrelated\n";
      cache->warned = true;
    }
    nd.value[0] = total;
  };

  auto backward = [d, m, absolute, cache](Node& nd) {
    Node* in = nd.inputs[0];
    if (!in->requires_grad) return;
    const double upstream = nd.grad[0];
    const double* x = cache->centered.data();
    // dS/dX, rows indexed like the filters
    std::vector<double> gx(d * m, 0.0);
    for (std::size_t e = 0; e < d; ++e) {
      for (std::size_t dd = e + 1; dd < d; ++dd) {
        if (cache->norm[dd] <= kZeroNorm || cache->norm[e] <= kZeroNorm) continue;
        const double c = cache->corr[dd * d + e];
        double sgn = 1.0;
        if (absolute) sgn = c > 0.0 ? 1.0 : (c < 0.0 ? -1.0 : 0.0);
        const double inv_d = 1.0 / cache->norm[dd];
        const double inv_e = 1.0 / cache->norm[e];
        for (std::size_t col = 0; col < m; ++col) {
          const double ud = x[dd * m + col] * inv_d;
          const double ue = x[e * m + col] * inv_e;
          gx[dd * m + col] += sgn * (ue - c * ud) * inv_d;
          gx[e * m + col] += sgn * (ud - c * ue) * inv_e;
        }
      }
    }
    // chain through the centering: dS/dW = (I - 11^T/D) dS/dX per column
    for (std::size_t col = 0; col < m; ++col) {
      double mean = 0.0;
      for (std::size_t row = 0; row < d; ++row) mean += gx[row * m + col];
      mean /= static_cast<double>(d);
      for (std::size_t row = 0; row < d; ++row)
        in->grad[row * m + col] += upstream * (gx[row * m + col] - mean);
    }
  };

  return weights.graph()->make("filter_correlation_sum", {1}, {weights.node()}, forward, backward);
}

std::optional<Var> sparsity_penalty(const std::vector<std::pair<std::string, Var>>& layer_fields,
                                    const RegProfile& profile) {
  std::optional<Var> acc;
  for (const auto& [layer, preact] : layer_fields) {
    const double l = profile.lambda_for(layer);
    if (l < 0.0) throw std::invalid_argument("sparsity weight for '" + layer + "' must be >= 0");
    if (l == 0.0) continue;
    const FieldDims f = field_dims(preact.value());
    (void)f;  // throws for D < 2
    Var term = scale(rfav_entropy_sum(preact), -l);
    acc = acc ? add(*acc, term) : term;
  }
  return acc;
}

std::optional<Var> decorrelation_penalty(
    const std::vector<std::pair<std::string, Var>>& layer_weights, const RegProfile& profile) {
  std::optional<Var> acc;
  for (const auto& [layer, weights] : layer_weights) {
    const double k = profile.kappa_for(layer);
    if (k < 0.0)
      throw std::invalid_argument("decorrelation weight for '" + layer + "' must be >= 0");
    if (k == 0.0) continue;
    Var term = scale(filter_correlation_sum(weights, profile.absolute_correlation), k);
    acc = acc ? add(*acc, term) : term;
  }
  return acc;
}

Var total_loss(Var base, std::optional<Var> sparsity, std::optional<Var> decorrelation) {
  Var loss = base;
  if (sparsity) loss = add(loss, *sparsity);
  if (decorrelation) loss = add(loss, *decorrelation);
  return loss;
}

PearsonResult pearson_filter_correlation(const Tensor& weights) {
  if (weights.rank() < 2)
    throw std::invalid_argument("pearson_filter_correlation: weights must have rank >= 2");
  const std::size_t d = weights.dim(0);
  const std::size_t m = weights.size() / d;
  if (d < 2) throw std::invalid_argument("pearson_filter_correlation: need at least 2 filters");

  std::vector<double> x(d * m);
  const double* w = weights.data();
  for (std::size_t col = 0; col < m; ++col) {
    double mean = 0.0;
    for (std::size_t row = 0; row < d; ++row) mean += w[row * m + col];
    mean /= static_cast<double>(d);
    for (std::size_t row = 0; row < d; ++row) x[row * m + col] = w[row * m + col] - mean;
  }
  std::vector<double> norm(d);
  for (std::size_t row = 0; row < d; ++row) {
    double s = 0.0;
    for (std::size_t col = 0; col < m; ++col) s += x[row * m + col] * x[row * m + col];
    norm[row] = std::sqrt(s);
  }

  PearsonResult res;
  res.matrix = Tensor({d, d});
  for (std::size_t row = 0; row < d; ++row) res.matrix(row, row) = 1.0;
  for (std::size_t e = 0; e < d; ++e)
    for (std::size_t dd = e + 1; dd < d; ++dd) {
      const bool zd = norm[dd] <= kZeroNorm;
      const bool ze = norm[e] <= kZeroNorm;
      double c;
      if (!zd && !ze) {
        double dot = 0.0;
        for (std::size_t col = 0; col < m; ++col) dot += x[dd * m + col] * x[e * m + col];
        c = dot / (norm[dd] * norm[e]);
      } else if (zd && ze) {
        c = 1.0;  // identical filters
      } else {
        c = 0.0;
        ++res.degenerate_pairs;
      }
      res.matrix(dd, e) = c;
      res.matrix(e, dd) = c;
    }
  if (res.degenerate_pairs > 0)
    std::cerr << "warning: " << res.degenerate_pairs
              << " filter pair(s) with zero-norm centered weights treated as uncorrelated\n";
  return res;
}

double mean_abs_correlation(const Tensor& matrix) {
  const std::size_t d = matrix.dim(0);
  if (matrix.rank() != 2 || matrix.dim(1) != d || d < 2)
    throw std::invalid_argument("mean_abs_correlation: need a square matrix with D >= 2");
  double s = 0.0;
  std::size_t pairs = 0;
  for (std::size_t row = 1; row < d; ++row)
    for (std::size_t col = 0; col < row; ++col) {
      s += std::fabs(matrix(row, col));
      ++pairs;
    }
  return s / static_cast<double>(pairs);
}

}  // namespace srnet
