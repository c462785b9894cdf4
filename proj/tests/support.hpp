#pragma once

// Shared helpers for the test binaries.

#include <cmath>
#include <functional>
#include <vector>

#include "tblab/parameters.hpp"
#include "tblab/rng.hpp"

namespace tblab::test {

// Tiny config for gradient-oracle work: every parameter entry gets probed.
inline ModelConfig tiny_config(std::uint64_t seed = 11) {
  ModelConfig c;
  c.n_layers = 2;
  c.d_model = 8;
  c.n_heads = 2;
  c.d_ff = 16;
  c.vocab_size = 20;
  c.n_image_tokens = 4;
  c.max_text_tokens = 4;
  c.d_image = 12;
  c.seed = seed;
  return c;
}

// Central finite differences over every parameter entry against an analytic
// gradient. Returns the max relative error with a floor on the denominator so
// entries that are zero on both sides do not divide by zero.
inline double fd_max_rel_error(Parameters& params,
                               const std::function<double(const Parameters&)>& loss,
                               const Gradients& analytic, double step = 1e-4,
                               double floor = 1e-6) {
  double worst = 0.0;
  std::vector<Tensor*> tensors;
  std::vector<const Tensor*> grads;
  params.for_each([&](const std::string&, Tensor& t) { tensors.push_back(&t); });
  analytic.for_each([&](const std::string&, const Tensor& t) { grads.push_back(&t); });
  for (std::size_t ti = 0; ti < tensors.size(); ++ti) {
    Tensor& t = *tensors[ti];
    const Tensor& g = *grads[ti];
    for (std::size_t i = 0; i < t.data.size(); ++i) {
      double saved = t.data[i];
      t.data[i] = saved + step;
      double up = loss(params);
      t.data[i] = saved - step;
      double down = loss(params);
      t.data[i] = saved;
      double fd = (up - down) / (2.0 * step);
      double denom = std::max({std::abs(fd), std::abs(g.data[i]), floor});
      double rel = std::abs(fd - g.data[i]) / denom;
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

}  // namespace tblab::test
