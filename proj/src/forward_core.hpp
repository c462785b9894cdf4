#pragma once

// Shared forward workspace. Forward fills it; backward replays it in reverse.
// Internal to src/, not part of the public headers.

#include <cmath>
#include <vector>

#include "tblab/errors.hpp"
#include "tblab/forward.hpp"

namespace tblab::detail {

constexpr double kRmsEps = 1e-6;

inline double gelu(double u) {
  return 0.5 * u * (1.0 + std::erf(u * 0.7071067811865476));
}

inline double gelu_grad(double u) {
  double cdf = 0.5 * (1.0 + std::erf(u * 0.7071067811865476));
  double pdf = std::exp(-0.5 * u * u) * 0.3989422804014327;
  return cdf + u * pdf;
}

// image positions attend among themselves; text positions see every image
// position plus the causal text prefix
inline bool attn_allowed(int i, int j, int m) {
  if (i < m) return j < m;
  return j < m || j <= i;
}

struct LayerWs {
  Tensor x;         // [N, d] layer input (after any masking)
  std::vector<double> rms_scale;  // [N]
  Tensor xn;        // [N, d]
  Tensor q, k, v;   // [N, d]
  std::vector<Tensor> att;  // per head [N, N]
  Tensor mix;       // [N, d]
  Tensor attn_out;  // [N, d]
  Tensor mlp_pre;   // [N, d_ff]
  Tensor mlp_act;   // [N, d_ff]
  Tensor mlp_out;   // [N, d]
  Tensor h_new;     // [N, d]
};

struct Workspace {
  ModelConfig cfg;
  bool ready = false;
  Tensor x0;  // [N, d] embeddings
  std::vector<LayerWs> layers;
  Tensor logits;  // [N, vocab] (rows only filled when requested)
  Tensor probs;   // [N, vocab]

  void ensure(const ModelConfig& c) {
    if (ready && cfg == c) return;
    cfg = c;
    std::size_t n = static_cast<std::size_t>(c.seq_len());
    std::size_t d = static_cast<std::size_t>(c.d_model);
    std::size_t ff = static_cast<std::size_t>(c.d_ff);
    std::size_t v = static_cast<std::size_t>(c.vocab_size);
    x0 = Tensor::zeros({n, d});
    layers.assign(static_cast<std::size_t>(c.n_layers), {});
    for (auto& l : layers) {
      l.x = Tensor::zeros({n, d});
      l.rms_scale.assign(n, 0.0);
      l.xn = Tensor::zeros({n, d});
      l.q = Tensor::zeros({n, d});
      l.k = Tensor::zeros({n, d});
      l.v = Tensor::zeros({n, d});
      l.att.assign(static_cast<std::size_t>(c.n_heads), Tensor::zeros({n, n}));
      l.mix = Tensor::zeros({n, d});
      l.attn_out = Tensor::zeros({n, d});
      l.mlp_pre = Tensor::zeros({n, ff});
      l.mlp_act = Tensor::zeros({n, ff});
      l.mlp_out = Tensor::zeros({n, d});
      l.h_new = Tensor::zeros({n, d});
    }
    logits = Tensor::zeros({n, v});
    probs = Tensor::zeros({n, v});
    ready = true;
  }
};

void embed_input(const Parameters& params, const ModelInput& input, Tensor& x0);

// Runs the full stack. plan may be null. When all_logits is false only the
// final position's logits/probs row is computed.
void forward_core(const Parameters& params, const ModelInput& input,
                  const MaskPlan* plan, bool all_logits, Workspace& ws);

Workspace& tls_workspace();

}  // namespace tblab::detail
