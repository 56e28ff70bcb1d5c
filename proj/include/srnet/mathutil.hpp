#ifndef SRNET_MATHUTIL_HPP
#define SRNET_MATHUTIL_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>

namespace srnet {

// Softmax probabilities can underflow; logs are clamped so entropy stays finite.
inline constexpr double kLogFloor = 1e-12;

inline double safe_log(double p) { return std::log(std::max(p, kLogFloor)); }

// Numerically stable softmax: p[l] = exp(x[l] - max) / sum.
inline void softmax_stable(const double* x, std::size_t n, double* p) {
  double m = x[0];
  for (std::size_t i = 1; i < n; ++i) m = std::max(m, x[i]);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    p[i] = std::exp(x[i] - m);
    sum += p[i];
  }
  const double inv = 1.0 / sum;
  for (std::size_t i = 0; i < n; ++i) p[i] *= inv;
}

inline double entropy_from_probs(const double* p, std::size_t n) {
  double h = 0.0;
  for (std::size_t i = 0; i < n; ++i) h -= p[i] * safe_log(p[i]);
  return h;
}

// Entropy of softmax(x); fills `p` with the probabilities as a side product.
inline double entropy_of_logits(const double* x, std::size_t n, double* p) {
  softmax_stable(x, n, p);
  return entropy_from_probs(p, n);
}

}  // namespace srnet

#endif
