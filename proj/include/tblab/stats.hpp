#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

namespace tblab {

// KL(p || q) by the definitional sum. Zero-mass p entries contribute nothing;
// q is clamped at 1e-12 inside the log so finite precision never yields inf.
inline double kl_divergence(const std::vector<double>& p, const std::vector<double>& q) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.size() && i < q.size(); ++i) {
    if (p[i] <= 0.0) continue;
    double qi = q[i] > 1e-12 ? q[i] : 1e-12;
    s += p[i] * (std::log(p[i]) - std::log(qi));
  }
  return s < 0.0 ? 0.0 : s;
}

// P(X >= k) for X ~ Binomial(n, 0.5). Exact summation, fine for n <= a few hundred.
inline double binomial_tail_half(std::size_t n, std::size_t k) {
  if (k == 0) return 1.0;
  if (k > n) return 0.0;
  // walk C(n, i) incrementally in log-free double space scaled by 2^-n
  double coeff = 1.0;  // C(n, 0)
  double scale = 1.0;
  for (std::size_t i = 0; i < n; ++i) scale *= 0.5;
  double below = 0.0;  // sum over i < k
  for (std::size_t i = 0; i < k; ++i) {
    below += coeff * scale;
    coeff = coeff * static_cast<double>(n - i) / static_cast<double>(i + 1);
  }
  double tail = 1.0 - below;
  return tail < 0.0 ? 0.0 : tail;
}

// One-sided sign test: p-value for seeing at least `positives` out of `n`
// informative (non-tied) pairs under the null of no direction.
inline double sign_test_p(std::size_t positives, std::size_t n) {
  return binomial_tail_half(n, positives);
}

inline double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace tblab
