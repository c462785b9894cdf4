#include "tblab/forward.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "forward_core.hpp"

namespace tblab {
namespace detail {

Workspace& tls_workspace() {
  thread_local Workspace ws;
  return ws;
}

void embed_input(const Parameters& params, const ModelInput& input, Tensor& x0) {
  const ModelConfig& cfg = params.config;
  int m = cfg.n_image_tokens;
  int d = cfg.d_model;

  if (static_cast<int>(input.text.size()) != cfg.max_text_tokens)
    throw InvalidToken("text length " + std::to_string(input.text.size()) +
                       " != max_text_tokens " + std::to_string(cfg.max_text_tokens));
  for (int t : input.text)
    if (t < 0 || t >= cfg.vocab_size)
      throw InvalidToken("token id " + std::to_string(t) + " outside vocab of " +
                         std::to_string(cfg.vocab_size));

  switch (input.image.kind) {
    case ImageInput::Kind::Features: {
      if (static_cast<int>(input.image.features.size()) != cfg.d_image)
        throw DataError("image feature size " +
                        std::to_string(input.image.features.size()) + " != d_image " +
                        std::to_string(cfg.d_image));
      // one feature vector expands to m token embeddings
      matvec(params.image_proj, input.image.features.data(), x0.ptr());
      break;
    }
    case ImageInput::Kind::Absent: {
      for (int p = 0; p < m; ++p)
        std::memcpy(x0.row(p), params.null_image.ptr(), sizeof(double) * d);
      break;
    }
    case ImageInput::Kind::Embeddings: {
      if (input.image.embeddings.rows() != static_cast<std::size_t>(m) ||
          input.image.embeddings.cols() != static_cast<std::size_t>(d))
        throw DataError("explicit image embeddings have wrong shape");
      std::memcpy(x0.ptr(), input.image.embeddings.ptr(),
                  sizeof(double) * static_cast<std::size_t>(m * d));
      break;
    }
  }
  for (int p = 0; p < m; ++p) {
    double* row = x0.row(p);
    const double* pe = params.pos_embed.row(p);
    for (int c = 0; c < d; ++c) row[c] += pe[c];
  }
  for (int t = 0; t < cfg.max_text_tokens; ++t) {
    int pos = m + t;
    double* row = x0.row(pos);
    const double* te = params.text_embed.row(static_cast<std::size_t>(input.text[t]));
    const double* pe = params.pos_embed.row(pos);
    for (int c = 0; c < d; ++c) row[c] = te[c] + pe[c];
  }
}

static void rmsnorm_rows(const Tensor& x, Tensor& xn, std::vector<double>& scale, int n,
                         int d) {
  for (int i = 0; i < n; ++i) {
    const double* xi = x.row(i);
    double ms = 0.0;
    for (int c = 0; c < d; ++c) ms += xi[c] * xi[c];
    ms = ms / d + kRmsEps;
    double s = 1.0 / std::sqrt(ms);
    scale[static_cast<std::size_t>(i)] = s;
    double* out = xn.row(i);
    for (int c = 0; c < d; ++c) out[c] = xi[c] * s;
  }
}

static void check_finite(const Tensor& h, int layer, int n, int d) {
  for (int i = 0; i < n; ++i) {
    const double* row = h.row(i);
    for (int c = 0; c < d; ++c)
      if (!std::isfinite(row[c]))
        throw NumericalOverflow("non-finite hidden state", layer, i);
  }
}

static void softmax_row(double* p, int n) {
  double mx = p[0];
  for (int j = 1; j < n; ++j) mx = std::max(mx, p[j]);
  double sum = 0.0;
  for (int j = 0; j < n; ++j) {
    p[j] = std::exp(p[j] - mx);
    sum += p[j];
  }
  double inv = 1.0 / sum;
  for (int j = 0; j < n; ++j) p[j] *= inv;
}

void forward_core(const Parameters& params, const ModelInput& input,
                  const MaskPlan* plan, bool all_logits, Workspace& ws) {
  const ModelConfig& cfg = params.config;
  cfg.validate();
  ws.ensure(cfg);
  int n = cfg.seq_len();
  int d = cfg.d_model;
  int m = cfg.n_image_tokens;
  int heads = cfg.n_heads;
  int dh = cfg.head_dim();
  int ff = cfg.d_ff;
  double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

  if (plan && static_cast<int>(plan->suppress.size()) != cfg.n_layers)
    throw InvalidMask("mask plan must list every layer");
  if (plan) {
    for (const auto& layer_set : plan->suppress)
      for (int pos : layer_set) {
        if (pos < 0 || pos >= n) throw InvalidMask("masked position out of range");
        if (pos == n - 1) throw InvalidMask("the output position cannot be masked");
      }
  }

  embed_input(params, input, ws.x0);

  const Tensor* h_in = &ws.x0;
  for (int l = 0; l < cfg.n_layers; ++l) {
    LayerWs& L = ws.layers[static_cast<std::size_t>(l)];
    const LayerWeights& W = params.layers[static_cast<std::size_t>(l)];

    std::memcpy(L.x.ptr(), h_in->ptr(), sizeof(double) * static_cast<std::size_t>(n * d));
    if (plan)
      for (int pos : plan->suppress[static_cast<std::size_t>(l)])
        std::memset(L.x.row(pos), 0, sizeof(double) * static_cast<std::size_t>(d));

    rmsnorm_rows(L.x, L.xn, L.rms_scale, n, d);

    for (int i = 0; i < n; ++i) {
      matvec(W.attn.wq, L.xn.row(i), L.q.row(i));
      matvec(W.attn.wk, L.xn.row(i), L.k.row(i));
      matvec(W.attn.wv, L.xn.row(i), L.v.row(i));
    }

    // per-head attention, causal over text, block-bidirectional over image
    for (int h = 0; h < heads; ++h) {
      int off = h * dh;
      Tensor& A = L.att[static_cast<std::size_t>(h)];
      for (int i = 0; i < n; ++i) {
        double* arow = A.row(i);
        double mx = -1e300;
        for (int j = 0; j < n; ++j) {
          if (attn_allowed(i, j, m)) {
            double s = dot(L.q.row(i) + off, L.k.row(j) + off, static_cast<std::size_t>(dh)) *
                       inv_sqrt_dh;
            arow[j] = s;
            mx = std::max(mx, s);
          } else {
            arow[j] = 0.0;
          }
        }
        double sum = 0.0;
        for (int j = 0; j < n; ++j) {
          if (attn_allowed(i, j, m)) {
            arow[j] = std::exp(arow[j] - mx);
            sum += arow[j];
          }
        }
        double inv = 1.0 / sum;
        for (int j = 0; j < n; ++j)
          if (attn_allowed(i, j, m)) arow[j] *= inv;
      }
    }

    for (int i = 0; i < n; ++i) {
      double* mixrow = L.mix.row(i);
      for (int h = 0; h < heads; ++h) {
        int off = h * dh;
        const Tensor& A = L.att[static_cast<std::size_t>(h)];
        const double* arow = A.row(i);
        for (int c = 0; c < dh; ++c) mixrow[off + c] = 0.0;
        for (int j = 0; j < n; ++j) {
          double w = arow[j];
          if (w == 0.0) continue;
          const double* vrow = L.v.row(j) + off;
          for (int c = 0; c < dh; ++c) mixrow[off + c] += w * vrow[c];
        }
      }
      matvec(W.attn.wo, mixrow, L.attn_out.row(i));
    }

    for (int i = 0; i < n; ++i) {
      matvec(W.mlp.w1, L.xn.row(i), L.mlp_pre.row(i));
      double* act = L.mlp_act.row(i);
      const double* pre = L.mlp_pre.row(i);
      for (int c = 0; c < ff; ++c) act[c] = gelu(pre[c]);
      matvec(W.mlp.w2, act, L.mlp_out.row(i));
    }

    for (int i = 0; i < n; ++i) {
      const double* xr = L.x.row(i);
      const double* ar = L.attn_out.row(i);
      const double* mr = L.mlp_out.row(i);
      double* hr = L.h_new.row(i);
      for (int c = 0; c < d; ++c) hr[c] = xr[c] + ar[c] + mr[c];
    }
    check_finite(L.h_new, l, n, d);
    h_in = &L.h_new;
  }

  int v = cfg.vocab_size;
  int first = all_logits ? 0 : n - 1;
  for (int i = first; i < n; ++i) {
    matvec(params.out_proj, h_in->row(i), ws.logits.row(i));
    std::memcpy(ws.probs.row(i), ws.logits.row(i), sizeof(double) * static_cast<std::size_t>(v));
    softmax_row(ws.probs.row(i), v);
    for (int c = 0; c < v; ++c)
      if (!std::isfinite(ws.logits.at(static_cast<std::size_t>(i), static_cast<std::size_t>(c))))
        throw NumericalOverflow("non-finite logits", cfg.n_layers, i);
  }
}

}  // namespace detail

using detail::forward_core;
using detail::tls_workspace;

ForwardTrace forward_with_trace(const Parameters& params, const ModelInput& input) {
  detail::Workspace& ws = tls_workspace();
  forward_core(params, input, nullptr, true, ws);

  ForwardTrace tr;
  tr.config = params.config;
  tr.input = input;
  int n = params.config.seq_len();
  int heads = params.config.n_heads;
  tr.layers.resize(ws.layers.size());
  for (std::size_t l = 0; l < ws.layers.size(); ++l) {
    const detail::LayerWs& L = ws.layers[l];
    LayerTrace& out = tr.layers[l];
    out.h_prev = L.x;
    out.attn_out = L.attn_out;
    out.mlp_out = L.mlp_out;
    out.h_new = L.h_new;
    out.attn = Tensor::zeros({static_cast<std::size_t>(n), static_cast<std::size_t>(n)});
    double inv_h = 1.0 / heads;
    for (int h = 0; h < heads; ++h)
      axpy(inv_h, L.att[static_cast<std::size_t>(h)], out.attn);
  }
  tr.logits = ws.logits;
  tr.probs = ws.probs;
  return tr;
}

std::vector<double> forward_probs(const Parameters& params, const ModelInput& input) {
  detail::Workspace& ws = tls_workspace();
  forward_core(params, input, nullptr, false, ws);
  int n = params.config.seq_len();
  const double* row = ws.probs.row(static_cast<std::size_t>(n - 1));
  return std::vector<double>(row, row + params.config.vocab_size);
}

std::vector<double> forward_masked(const Parameters& params, const ModelInput& input,
                                   const MaskPlan& plan) {
  detail::Workspace& ws = tls_workspace();
  forward_core(params, input, &plan, false, ws);
  int n = params.config.seq_len();
  const double* row = ws.probs.row(static_cast<std::size_t>(n - 1));
  return std::vector<double>(row, row + params.config.vocab_size);
}

int argmax_token(const double* dist, int n) {
  int best = 0;
  for (int i = 1; i < n; ++i)
    if (dist[i] > dist[best]) best = i;
  return best;
}

int argmax_token(const std::vector<double>& dist) {
  return argmax_token(dist.data(), static_cast<int>(dist.size()));
}

}  // namespace tblab
