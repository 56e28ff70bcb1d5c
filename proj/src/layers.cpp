#include "srnet/layers.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>

#include "srnet/mathutil.hpp"

namespace srnet {

namespace {

int conv_extent(int in, int k, int stride, int pad) {
  return (in + 2 * pad - k) / stride + 1;
}

struct ConvDims {
  std::size_t n, cin, h, w, cout, kh, kw, a, b;
  bool batched;
};

ConvDims conv_dims(const Tensor& x, const Tensor& w, const std::string& tag, int stride, int pad) {
  if (x.rank() != 3 && x.rank() != 4)
    throw std::invalid_argument(tag + ": input must be (C,H,W) or (N,C,H,W), got " +
                                shape_str(x.shape()));
  if (w.rank() != 4) throw std::invalid_argument(tag + ": weights must be (D,D',kh,kw)");
  ConvDims d;
  d.batched = x.rank() == 4;
  d.n = d.batched ? x.dim(0) : 1;
  d.cin = x.dim(d.batched ? 1 : 0);
  d.h = x.dim(d.batched ? 2 : 1);
  d.w = x.dim(d.batched ? 3 : 2);
  d.cout = w.dim(0);
  d.kh = w.dim(2);
  d.kw = w.dim(3);
  if (w.dim(1) != d.cin)
    throw std::invalid_argument(tag + ": input has " + std::to_string(d.cin) +
                                " channels but weights expect " + std::to_string(w.dim(1)));
  const int a = conv_extent(static_cast<int>(d.h), static_cast<int>(d.kh), stride, pad);
  const int b = conv_extent(static_cast<int>(d.w), static_cast<int>(d.kw), stride, pad);
  if (a < 1 || b < 1)
    throw std::invalid_argument(tag + ": output spatial size would be " + std::to_string(a) + "x" +
                                std::to_string(b));
  d.a = static_cast<std::size_t>(a);
  d.b = static_cast<std::size_t>(b);
  return d;
}

// Valid output range [lo, hi] for one kernel offset: in = out*stride + k - pad
// must fall inside [0, extent).
void valid_range(int k, int pad, int stride, int out_extent, int in_extent, int& lo, int& hi) {
  lo = 0;
  if (pad - k > 0) lo = (pad - k + stride - 1) / stride;
  const int num = in_extent - 1 + pad - k;
  hi = num < 0 ? -1 : std::min(out_extent - 1, num / stride);
}

}  // namespace

Var conv2d(Var input, Var weights, Var bias, int stride, int padding, const std::string& tag) {
  if (stride < 1) throw std::invalid_argument(tag + ": stride must be positive");
  if (padding < 0) throw std::invalid_argument(tag + ": padding must be non-negative");
  const ConvDims d = conv_dims(input.value(), weights.value(), tag, stride, padding);
  if (bias.value().rank() != 1 || bias.value().dim(0) != d.cout)
    throw std::invalid_argument(tag + ": bias must have one entry per output channel");

  std::vector<std::size_t> out_shape =
      d.batched ? std::vector<std::size_t>{d.n, d.cout, d.a, d.b}
                : std::vector<std::size_t>{d.cout, d.a, d.b};

  auto forward = [d, stride, padding](Node& n) {
    const double* x = n.inputs[0]->value.data();
    const double* w = n.inputs[1]->value.data();
    const double* bs = n.inputs[2]->value.data();
    double* out = n.value.data();
    const std::size_t in_plane = d.h * d.w;
    const std::size_t out_plane = d.a * d.b;
    for (std::size_t nn = 0; nn < d.n; ++nn) {
      for (std::size_t co = 0; co < d.cout; ++co) {
        double* o = out + (nn * d.cout + co) * out_plane;
        const double bias_v = bs[co];
        for (std::size_t i = 0; i < out_plane; ++i) o[i] = bias_v;
        for (std::size_t ci = 0; ci < d.cin; ++ci) {
          const double* xc = x + (nn * d.cin + ci) * in_plane;
          for (std::size_t i = 0; i < d.kh; ++i) {
            int a_lo, a_hi;
            valid_range(static_cast<int>(i), padding, stride, static_cast<int>(d.a),
                        static_cast<int>(d.h), a_lo, a_hi);
            for (std::size_t j = 0; j < d.kw; ++j) {
              int b_lo, b_hi;
              valid_range(static_cast<int>(j), padding, stride, static_cast<int>(d.b),
                          static_cast<int>(d.w), b_lo, b_hi);
              const double wv = w[((co * d.cin + ci) * d.kh + i) * d.kw + j];
              for (int a = a_lo; a <= a_hi; ++a) {
                const int ih = a * stride + static_cast<int>(i) - padding;
                const double* xrow = xc + static_cast<std::size_t>(ih) * d.w;
                double* orow = o + static_cast<std::size_t>(a) * d.b;
                for (int b = b_lo; b <= b_hi; ++b)
                  orow[b] += wv * xrow[b * stride + static_cast<int>(j) - padding];
              }
            }
          }
        }
      }
    }
  };

  auto backward = [d, stride, padding](Node& n) {
    Node* xin = n.inputs[0];
    Node* win = n.inputs[1];
    Node* bin = n.inputs[2];
    const double* g = n.grad.data();
    const std::size_t in_plane = d.h * d.w;
    const std::size_t out_plane = d.a * d.b;

    if (bin->requires_grad) {
      for (std::size_t nn = 0; nn < d.n; ++nn)
        for (std::size_t co = 0; co < d.cout; ++co) {
          const double* go = g + (nn * d.cout + co) * out_plane;
          double s = 0.0;
          for (std::size_t i = 0; i < out_plane; ++i) s += go[i];
          bin->grad[co] += s;
        }
    }
    for (std::size_t nn = 0; nn < d.n; ++nn) {
      for (std::size_t co = 0; co < d.cout; ++co) {
        const double* go = g + (nn * d.cout + co) * out_plane;
        for (std::size_t ci = 0; ci < d.cin; ++ci) {
          const double* xc = xin->value.data() + (nn * d.cin + ci) * in_plane;
          double* dxc = xin->requires_grad ? xin->grad.data() + (nn * d.cin + ci) * in_plane
                                           : nullptr;
          for (std::size_t i = 0; i < d.kh; ++i) {
            int a_lo, a_hi;
            valid_range(static_cast<int>(i), padding, stride, static_cast<int>(d.a),
                        static_cast<int>(d.h), a_lo, a_hi);
            for (std::size_t j = 0; j < d.kw; ++j) {
              int b_lo, b_hi;
              valid_range(static_cast<int>(j), padding, stride, static_cast<int>(d.b),
                          static_cast<int>(d.w), b_lo, b_hi);
              const std::size_t widx = ((co * d.cin + ci) * d.kh + i) * d.kw + j;
              const double wv = win->value[widx];
              double wacc = 0.0;
              for (int a = a_lo; a <= a_hi; ++a) {
                const int ih = a * stride + static_cast<int>(i) - padding;
                const std::size_t row = static_cast<std::size_t>(ih) * d.w;
                const double* grow = go + static_cast<std::size_t>(a) * d.b;
                const int off = static_cast<int>(j) - padding;
                if (win->requires_grad) {
                  const double* xrow = xc + row;
                  for (int b = b_lo; b <= b_hi; ++b) wacc += grow[b] * xrow[b * stride + off];
                }
                if (dxc) {
                  double* dxrow = dxc + row;
                  for (int b = b_lo; b <= b_hi; ++b) dxrow[b * stride + off] += wv * grow[b];
                }
              }
              if (win->requires_grad) win->grad[widx] += wacc;
            }
          }
        }
      }
    }
  };

  return input.graph()->make(tag, std::move(out_shape),
                             {input.node(), weights.node(), bias.node()}, forward, backward);
}

Var dense(Var input, Var weights, Var bias, const std::string& tag) {
  const Tensor& x = input.value();
  const Tensor& w = weights.value();
  if (x.rank() != 1 && x.rank() != 2)
    throw std::invalid_argument(tag + ": input must be (in) or (N,in)");
  if (w.rank() != 2) throw std::invalid_argument(tag + ": weights must be (out,in)");
  const bool batched = x.rank() == 2;
  const std::size_t n = batched ? x.dim(0) : 1;
  const std::size_t in = x.dim(batched ? 1 : 0);
  const std::size_t out = w.dim(0);
  if (w.dim(1) != in)
    throw std::invalid_argument(tag + ": input length " + std::to_string(in) +
                                " does not match weight columns " + std::to_string(w.dim(1)));
  if (bias.value().size() != out)
    throw std::invalid_argument(tag + ": bias must have one entry per output");

  std::vector<std::size_t> out_shape =
      batched ? std::vector<std::size_t>{n, out} : std::vector<std::size_t>{out};

  auto forward = [n, in, out](Node& nd) {
    const double* x = nd.inputs[0]->value.data();
    const double* w = nd.inputs[1]->value.data();
    const double* b = nd.inputs[2]->value.data();
    double* y = nd.value.data();
    for (std::size_t r = 0; r < n; ++r) {
      const double* xr = x + r * in;
      double* yr = y + r * out;
      for (std::size_t o = 0; o < out; ++o) {
        double s = b[o];
        const double* wr = w + o * in;
        for (std::size_t i = 0; i < in; ++i) s += wr[i] * xr[i];
        yr[o] = s;
      }
    }
  };

  auto backward = [n, in, out](Node& nd) {
    Node* xin = nd.inputs[0];
    Node* win = nd.inputs[1];
    Node* bin = nd.inputs[2];
    const double* g = nd.grad.data();
    for (std::size_t r = 0; r < n; ++r) {
      const double* gr = g + r * out;
      const double* xr = xin->value.data() + r * in;
      for (std::size_t o = 0; o < out; ++o) {
        const double go = gr[o];
        if (go == 0.0) continue;
        if (bin->requires_grad) bin->grad[o] += go;
        if (win->requires_grad) {
          double* wg = win->grad.data() + o * in;
          for (std::size_t i = 0; i < in; ++i) wg[i] += go * xr[i];
        }
        if (xin->requires_grad) {
          const double* wr = win->value.data() + o * in;
          double* xg = xin->grad.data() + r * in;
          for (std::size_t i = 0; i < in; ++i) xg[i] += go * wr[i];
        }
      }
    }
  };

  return input.graph()->make(tag, std::move(out_shape),
                             {input.node(), weights.node(), bias.node()}, forward, backward);
}

Var maxpool2x2(Var input) {
  const Tensor& x = input.value();
  if (x.rank() != 3 && x.rank() != 4)
    throw std::invalid_argument("maxpool2x2: input must be (C,H,W) or (N,C,H,W)");
  const bool batched = x.rank() == 4;
  const std::size_t n = batched ? x.dim(0) : 1;
  const std::size_t c = x.dim(batched ? 1 : 0);
  const std::size_t h = x.dim(batched ? 2 : 1);
  const std::size_t w = x.dim(batched ? 3 : 2);
  if (h % 2 != 0 || w % 2 != 0)
    throw std::invalid_argument("maxpool2x2: spatial dims must be even, got " +
                                std::to_string(h) + "x" + std::to_string(w));
  const std::size_t oh = h / 2, ow = w / 2;
  std::vector<std::size_t> out_shape = batched ? std::vector<std::size_t>{n, c, oh, ow}
                                               : std::vector<std::size_t>{c, oh, ow};
  auto argmax = std::make_shared<std::vector<std::size_t>>(n * c * oh * ow);

  auto forward = [n, c, h, w, oh, ow, argmax](Node& nd) {
    const double* x = nd.inputs[0]->value.data();
    double* y = nd.value.data();
    std::size_t* am = argmax->data();
    for (std::size_t plane = 0; plane < n * c; ++plane) {
      const double* xp = x + plane * h * w;
      double* yp = y + plane * oh * ow;
      std::size_t* ap = am + plane * oh * ow;
      for (std::size_t a = 0; a < oh; ++a)
        for (std::size_t b = 0; b < ow; ++b) {
          const std::size_t base = (2 * a) * w + 2 * b;
          std::size_t best = base;
          double bv = xp[base];
          const std::size_t cand[3] = {base + 1, base + w, base + w + 1};
          for (std::size_t k = 0; k < 3; ++k)
            if (xp[cand[k]] > bv) {
              bv = xp[cand[k]];
              best = cand[k];
            }
          yp[a * ow + b] = bv;
          ap[a * ow + b] = plane * h * w + best;
        }
    }
  };

  auto backward = [argmax](Node& nd) {
    Node* in = nd.inputs[0];
    if (!in->requires_grad) return;
    const std::size_t* am = argmax->data();
    for (std::size_t i = 0; i < nd.grad.size(); ++i) in->grad[am[i]] += nd.grad[i];
  };

  return input.graph()->make("maxpool", std::move(out_shape), {input.node()}, forward, backward);
}

Var relu(Var input) {
  return input.graph()->make(
      "relu", input.value().shape(), {input.node()},
      [](Node& n) {
        const double* x = n.inputs[0]->value.data();
        double* y = n.value.data();
        for (std::size_t i = 0; i < n.value.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
      },
      [](Node& n) {
        Node* in = n.inputs[0];
        if (!in->requires_grad) return;
        for (std::size_t i = 0; i < n.grad.size(); ++i)
          if (in->value[i] > 0.0) in->grad[i] += n.grad[i];
      });
}

Var softmax(Var input) {
  const Tensor& x = input.value();
  if (x.rank() < 1) throw std::invalid_argument("softmax: input must have rank >= 1");
  const std::size_t cols = x.dim(x.rank() - 1);
  const std::size_t rows = x.size() / cols;
  return input.graph()->make(
      "softmax", x.shape(), {input.node()},
      [rows, cols](Node& n) {
        const double* x = n.inputs[0]->value.data();
        double* p = n.value.data();
        for (std::size_t r = 0; r < rows; ++r) softmax_stable(x + r * cols, cols, p + r * cols);
      },
      [rows, cols](Node& n) {
        Node* in = n.inputs[0];
        if (!in->requires_grad) return;
        const double* p = n.value.data();
        const double* g = n.grad.data();
        for (std::size_t r = 0; r < rows; ++r) {
          const double* pr = p + r * cols;
          const double* gr = g + r * cols;
          double dot = 0.0;
          for (std::size_t i = 0; i < cols; ++i) dot += gr[i] * pr[i];
          double* ig = in->grad.data() + r * cols;
          for (std::size_t i = 0; i < cols; ++i) ig[i] += pr[i] * (gr[i] - dot);
        }
      });
}

Var dropout(Var input, double p, Rng& rng) {
  if (!(p >= 0.0 && p < 1.0))
    throw std::invalid_argument("dropout: probability must lie in [0,1), got " + std::to_string(p));
  auto mask = std::make_shared<std::vector<double>>(input.value().size());
  const double keep_scale = 1.0 / (1.0 - p);
  for (double& m : *mask) m = rng.uniform() < p ? 0.0 : keep_scale;
  return input.graph()->make(
      "dropout", input.value().shape(), {input.node()},
      [mask](Node& n) {
        const double* x = n.inputs[0]->value.data();
        const double* m = mask->data();
        double* y = n.value.data();
        for (std::size_t i = 0; i < n.value.size(); ++i) y[i] = x[i] * m[i];
      },
      [mask](Node& n) {
        Node* in = n.inputs[0];
        if (!in->requires_grad) return;
        const double* m = mask->data();
        for (std::size_t i = 0; i < n.grad.size(); ++i) in->grad[i] += n.grad[i] * m[i];
      });
}

namespace {

struct BnDims {
  std::size_t n, c, spatial;
};

BnDims bn_dims(const Tensor& x) {
  if (x.rank() == 2) return {x.dim(0), x.dim(1), 1};
  if (x.rank() == 4) return {x.dim(0), x.dim(1), x.dim(2) * x.dim(3)};
  throw std::invalid_argument("batchnorm: input must be (N,C) or (N,C,H,W)");
}

struct BnCache {
  std::vector<double> mean, inv_std, xhat;
};

}  // namespace

Var batchnorm(Var input, Var gamma, Var beta, BatchNormLayer& layer, bool training) {
  const BnDims d = bn_dims(input.value());
  if (gamma.value().size() != d.c || beta.value().size() != d.c)
    throw std::invalid_argument("batchnorm: gamma/beta must have one entry per channel");
  if (training && d.n < 2)
    throw std::invalid_argument("batchnorm: training mode needs a batch of at least 2");

  Var out;
  if (training) {
    auto cache = std::make_shared<BnCache>();
    cache->mean.resize(d.c);
    cache->inv_std.resize(d.c);
    cache->xhat.resize(input.value().size());
    const double eps = layer.epsilon;

    auto forward = [d, eps, cache](Node& nd) {
      const double* x = nd.inputs[0]->value.data();
      const double* gm = nd.inputs[1]->value.data();
      const double* bt = nd.inputs[2]->value.data();
      double* y = nd.value.data();
      const double inv_m = 1.0 / static_cast<double>(d.n * d.spatial);
      for (std::size_t c = 0; c < d.c; ++c) {
        double sum = 0.0;
        for (std::size_t nn = 0; nn < d.n; ++nn) {
          const double* xs = x + (nn * d.c + c) * d.spatial;
          for (std::size_t s = 0; s < d.spatial; ++s) sum += xs[s];
        }
        const double mean = sum * inv_m;
        double var = 0.0;
        for (std::size_t nn = 0; nn < d.n; ++nn) {
          const double* xs = x + (nn * d.c + c) * d.spatial;
          for (std::size_t s = 0; s < d.spatial; ++s) {
            const double dv = xs[s] - mean;
            var += dv * dv;
          }
        }
        var *= inv_m;
        const double inv_std = 1.0 / std::sqrt(var + eps);
        cache->mean[c] = mean;
        cache->inv_std[c] = inv_std;
        for (std::size_t nn = 0; nn < d.n; ++nn) {
          const double* xs = x + (nn * d.c + c) * d.spatial;
          double* ys = y + (nn * d.c + c) * d.spatial;
          double* xh = cache->xhat.data() + (nn * d.c + c) * d.spatial;
          for (std::size_t s = 0; s < d.spatial; ++s) {
            xh[s] = (xs[s] - mean) * inv_std;
            ys[s] = gm[c] * xh[s] + bt[c];
          }
        }
      }
    };

    auto backward = [d, cache](Node& nd) {
      Node* xin = nd.inputs[0];
      Node* gmin = nd.inputs[1];
      Node* btin = nd.inputs[2];
      const double* g = nd.grad.data();
      const double m = static_cast<double>(d.n * d.spatial);
      for (std::size_t c = 0; c < d.c; ++c) {
        double sum_g = 0.0, sum_gx = 0.0;
        for (std::size_t nn = 0; nn < d.n; ++nn) {
          const std::size_t off = (nn * d.c + c) * d.spatial;
          for (std::size_t s = 0; s < d.spatial; ++s) {
            sum_g += g[off + s];
            sum_gx += g[off + s] * cache->xhat[off + s];
          }
        }
        if (gmin->requires_grad) gmin->grad[c] += sum_gx;
        if (btin->requires_grad) btin->grad[c] += sum_g;
        if (xin->requires_grad) {
          const double gm = gmin->value[c];
          const double k = gm * cache->inv_std[c];
          const double mg = sum_g / m;
          const double mgx = sum_gx / m;
          for (std::size_t nn = 0; nn < d.n; ++nn) {
            const std::size_t off = (nn * d.c + c) * d.spatial;
            for (std::size_t s = 0; s < d.spatial; ++s)
              xin->grad[off + s] += k * (g[off + s] - mg - cache->xhat[off + s] * mgx);
          }
        }
      }
    };

    out = input.graph()->make("batchnorm", input.value().shape(),
                              {input.node(), gamma.node(), beta.node()}, forward, backward);

    // One running-stats update per training step, at graph-build time.
    const double mom = layer.momentum;
    const double inv_m = 1.0 / static_cast<double>(d.n * d.spatial);
    (void)inv_m;
    for (std::size_t c = 0; c < d.c; ++c) {
      const double var = 1.0 / (cache->inv_std[c] * cache->inv_std[c]) - layer.epsilon;
      layer.running_mean[c] = mom * layer.running_mean[c] + (1.0 - mom) * cache->mean[c];
      layer.running_var[c] = mom * layer.running_var[c] + (1.0 - mom) * std::max(var, 0.0);
    }
    return out;
  }

  // Inference: normalize by the running statistics captured now.
  auto rm = std::make_shared<std::vector<double>>(layer.running_mean.values());
  auto rv = std::make_shared<std::vector<double>>(layer.running_var.values());
  const double eps = layer.epsilon;
  auto forward = [d, eps, rm, rv](Node& nd) {
    const double* x = nd.inputs[0]->value.data();
    const double* gm = nd.inputs[1]->value.data();
    const double* bt = nd.inputs[2]->value.data();
    double* y = nd.value.data();
    for (std::size_t c = 0; c < d.c; ++c) {
      const double inv_std = 1.0 / std::sqrt((*rv)[c] + eps);
      const double mean = (*rm)[c];
      for (std::size_t nn = 0; nn < d.n; ++nn) {
        const double* xs = x + (nn * d.c + c) * d.spatial;
        double* ys = y + (nn * d.c + c) * d.spatial;
        for (std::size_t s = 0; s < d.spatial; ++s) ys[s] = gm[c] * (xs[s] - mean) * inv_std + bt[c];
      }
    }
  };
  auto backward = [d, eps, rm, rv](Node& nd) {
    Node* xin = nd.inputs[0];
    Node* gmin = nd.inputs[1];
    Node* btin = nd.inputs[2];
    const double* g = nd.grad.data();
    for (std::size_t c = 0; c < d.c; ++c) {
      const double inv_std = 1.0 / std::sqrt((*rv)[c] + eps);
      const double mean = (*rm)[c];
      for (std::size_t nn = 0; nn < d.n; ++nn) {
        const std::size_t off = (nn * d.c + c) * d.spatial;
        for (std::size_t s = 0; s < d.spatial; ++s) {
          const double xh = (xin->value[off + s] - mean) * inv_std;
          if (gmin->requires_grad) gmin->grad[c] += g[off + s] * xh;
          if (btin->requires_grad) btin->grad[c] += g[off + s];
          if (xin->requires_grad) xin->grad[off + s] += g[off + s] * gmin->value[c] * inv_std;
        }
      }
    }
  };
  return input.graph()->make("batchnorm", input.value().shape(),
                             {input.node(), gamma.node(), beta.node()}, forward, backward);
}

Var cross_entropy(Var logits, const std::vector<int>& labels) {
  const Tensor& z = logits.value();
  if (z.rank() != 2) throw std::invalid_argument("cross_entropy: logits must be (N,classes)");
  const std::size_t n = z.dim(0), c = z.dim(1);
  if (labels.size() != n)
    throw std::invalid_argument("cross_entropy: got " + std::to_string(labels.size()) +
                                " labels for a batch of " + std::to_string(n));
  for (int l : labels)
    if (l < 0 || static_cast<std::size_t>(l) >= c)
      throw std::invalid_argument("cross_entropy: label " + std::to_string(l) +
                                  " outside [0," + std::to_string(c) + ")");
  auto probs = std::make_shared<std::vector<double>>(n * c);
  auto lab = std::make_shared<std::vector<int>>(labels);

  auto forward = [n, c, probs, lab](Node& nd) {
    const double* z = nd.inputs[0]->value.data();
    double loss = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      double* p = probs->data() + r * c;
      softmax_stable(z + r * c, c, p);
      loss -= safe_log(p[(*lab)[r]]);
    }
    nd.value[0] = loss / static_cast<double>(n);
  };

  auto backward = [n, c, probs, lab](Node& nd) {
    Node* in = nd.inputs[0];
    if (!in->requires_grad) return;
    const double scale = nd.grad[0] / static_cast<double>(n);
    for (std::size_t r = 0; r < n; ++r) {
      const double* p = probs->data() + r * c;
      if (p[(*lab)[r]] <= kLogFloor) continue;  // clamped log has zero slope
      double* g = in->grad.data() + r * c;
      for (std::size_t i = 0; i < c; ++i)
        g[i] += scale * (p[i] - (static_cast<std::size_t>((*lab)[r]) == i ? 1.0 : 0.0));
    }
  };

  return logits.graph()->make("cross_entropy", {1}, {logits.node()}, forward, backward);
}

}  // namespace srnet
