#include "tblab/backward.hpp"

#include <cmath>
#include <cstring>

#include "forward_core.hpp"

namespace tblab {

namespace {

using detail::LayerWs;
using detail::Workspace;

struct BwWs {
  ModelConfig cfg;
  bool ready = false;
  Tensor d_h, d_xn, d_q, d_k, d_v, d_mix;
  std::vector<double> d_att, d_scores, d_pre, d_act;

  void ensure(const ModelConfig& c) {
    if (ready && cfg == c) return;
    cfg = c;
    std::size_t n = static_cast<std::size_t>(c.seq_len());
    std::size_t d = static_cast<std::size_t>(c.d_model);
    d_h = Tensor::zeros({n, d});
    d_xn = Tensor::zeros({n, d});
    d_q = Tensor::zeros({n, d});
    d_k = Tensor::zeros({n, d});
    d_v = Tensor::zeros({n, d});
    d_mix = Tensor::zeros({n, d});
    d_att.assign(n, 0.0);
    d_scores.assign(n, 0.0);
    d_pre.assign(static_cast<std::size_t>(c.d_ff), 0.0);
    d_act.assign(static_cast<std::size_t>(c.d_ff), 0.0);
    ready = true;
  }
};

BwWs& tls_bw() {
  thread_local BwWs b;
  return b;
}

void reverse_pass(const Parameters& params, const Workspace& ws, const ModelInput& input,
                  const std::vector<double>& d_logits, Gradients& g) {
  const ModelConfig& cfg = params.config;
  int n = cfg.seq_len();
  int d = cfg.d_model;
  int m = cfg.n_image_tokens;
  int heads = cfg.n_heads;
  int dh = cfg.head_dim();
  int ff = cfg.d_ff;
  double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

  BwWs& bw = tls_bw();
  bw.ensure(cfg);
  bw.d_h.fill(0.0);

  // output head: only the final position carries loss
  const Tensor& h_final = ws.layers.back().h_new;
  int last = n - 1;
  outer_acc(d_logits.data(), h_final.row(last), g.out_proj);
  matvec_t_acc(params.out_proj, d_logits.data(), bw.d_h.row(last));

  for (int l = cfg.n_layers - 1; l >= 0; --l) {
    const LayerWs& L = ws.layers[static_cast<std::size_t>(l)];
    const LayerWeights& W = params.layers[static_cast<std::size_t>(l)];
    LayerWeights& GW = g.layers[static_cast<std::size_t>(l)];

    // d_h currently holds dL/d h_new. Branch gradients share it; the residual
    // path keeps d_h alive as dL/dx.
    bw.d_xn.fill(0.0);

    // MLP branch
    for (int i = 0; i < n; ++i) {
      const double* go = bw.d_h.row(i);
      bool all_zero = true;
      for (int c = 0; c < d; ++c)
        if (go[c] != 0.0) {
          all_zero = false;
          break;
        }
      if (all_zero) continue;
      std::fill(bw.d_act.begin(), bw.d_act.end(), 0.0);
      matvec_t_acc(W.mlp.w2, go, bw.d_act.data());
      outer_acc(go, L.mlp_act.row(i), GW.mlp.w2);
      const double* pre = L.mlp_pre.row(i);
      for (int c = 0; c < ff; ++c)
        bw.d_pre[static_cast<std::size_t>(c)] =
            bw.d_act[static_cast<std::size_t>(c)] * detail::gelu_grad(pre[c]);
      outer_acc(bw.d_pre.data(), L.xn.row(i), GW.mlp.w1);
      matvec_t_acc(W.mlp.w1, bw.d_pre.data(), bw.d_xn.row(i));
    }

    // attention branch
    bw.d_mix.fill(0.0);
    bw.d_q.fill(0.0);
    bw.d_k.fill(0.0);
    bw.d_v.fill(0.0);
    for (int i = 0; i < n; ++i) {
      const double* go = bw.d_h.row(i);
      outer_acc(go, L.mix.row(i), GW.attn.wo);
      matvec_t_acc(W.attn.wo, go, bw.d_mix.row(i));
    }
    for (int h = 0; h < heads; ++h) {
      int off = h * dh;
      const Tensor& A = L.att[static_cast<std::size_t>(h)];
      for (int i = 0; i < n; ++i) {
        const double* arow = A.row(i);
        const double* dmix = bw.d_mix.row(i) + off;
        double dotsum = 0.0;
        for (int j = 0; j < n; ++j) {
          if (!detail::attn_allowed(i, j, m)) continue;
          double da = dot(dmix, L.v.row(j) + off, static_cast<std::size_t>(dh));
          bw.d_att[static_cast<std::size_t>(j)] = da;
          dotsum += da * arow[j];
          double w = arow[j];
          if (w != 0.0) {
            double* dv = bw.d_v.row(j) + off;
            for (int c = 0; c < dh; ++c) dv[c] += w * dmix[c];
          }
        }
        double* dq = bw.d_q.row(i) + off;
        for (int j = 0; j < n; ++j) {
          if (!detail::attn_allowed(i, j, m)) continue;
          double ds = arow[j] * (bw.d_att[static_cast<std::size_t>(j)] - dotsum);
          if (ds == 0.0) continue;
          const double* krow = L.k.row(j) + off;
          double* dk = bw.d_k.row(j) + off;
          const double* qrow = L.q.row(i) + off;
          double s = ds * inv_sqrt_dh;
          for (int c = 0; c < dh; ++c) {
            dq[c] += s * krow[c];
            dk[c] += s * qrow[c];
          }
        }
      }
    }
    for (int i = 0; i < n; ++i) {
      outer_acc(bw.d_q.row(i), L.xn.row(i), GW.attn.wq);
      matvec_t_acc(W.attn.wq, bw.d_q.row(i), bw.d_xn.row(i));
      outer_acc(bw.d_k.row(i), L.xn.row(i), GW.attn.wk);
      matvec_t_acc(W.attn.wk, bw.d_k.row(i), bw.d_xn.row(i));
      outer_acc(bw.d_v.row(i), L.xn.row(i), GW.attn.wv);
      matvec_t_acc(W.attn.wv, bw.d_v.row(i), bw.d_xn.row(i));
    }

    // rmsnorm: xn = x * s with s = (mean(x^2)+eps)^-1/2
    for (int i = 0; i < n; ++i) {
      const double* xi = L.x.row(i);
      const double* dxn = bw.d_xn.row(i);
      double* dx = bw.d_h.row(i);  // residual gradient already lives here
      double s = L.rms_scale[static_cast<std::size_t>(i)];
      double dotv = dot(xi, dxn, static_cast<std::size_t>(d));
      double coef = s * s * s * dotv / d;
      for (int c = 0; c < d; ++c) dx[c] += s * dxn[c] - coef * xi[c];
    }
  }

  // embeddings
  for (int t = 0; t < cfg.max_text_tokens; ++t) {
    int pos = m + t;
    const double* dx = bw.d_h.row(pos);
    double* te = g.text_embed.row(static_cast<std::size_t>(input.text[t]));
    double* pe = g.pos_embed.row(pos);
    for (int c = 0; c < d; ++c) {
      te[c] += dx[c];
      pe[c] += dx[c];
    }
  }
  for (int p = 0; p < m; ++p) {
    const double* dx = bw.d_h.row(p);
    double* pe = g.pos_embed.row(p);
    for (int c = 0; c < d; ++c) pe[c] += dx[c];
  }
  switch (input.image.kind) {
    case ImageInput::Kind::Features: {
      // x0 rows 0..m-1 came from one matvec over the flattened projection
      outer_acc(bw.d_h.ptr(), input.image.features.data(), g.image_proj);
      break;
    }
    case ImageInput::Kind::Absent: {
      double* gn = g.null_image.ptr();
      for (int p = 0; p < m; ++p) {
        const double* dx = bw.d_h.row(p);
        for (int c = 0; c < d; ++c) gn[c] += dx[c];
      }
      break;
    }
    case ImageInput::Kind::Embeddings:
      break;  // external embeddings carry no parameters
  }
}

}  // namespace

void accumulate_logit_gradient(const Parameters& params, const ModelInput& input,
                               const std::vector<double>& d_logits, Gradients& acc) {
  if (static_cast<int>(d_logits.size()) != params.config.vocab_size)
    throw TraceMismatch("logit gradient width != vocab_size");
  Workspace& ws = detail::tls_workspace();
  detail::forward_core(params, input, nullptr, false, ws);
  reverse_pass(params, ws, input, d_logits, acc);
}

double nll_gradient(const Parameters& params, const ModelInput& input, int target_token,
                    double scale, Gradients& acc) {
  if (target_token < 0 || target_token >= params.config.vocab_size)
    throw InvalidToken("loss target outside vocab");
  Workspace& ws = detail::tls_workspace();
  detail::forward_core(params, input, nullptr, false, ws);
  int n = params.config.seq_len();
  const double* p = ws.probs.row(static_cast<std::size_t>(n - 1));
  std::vector<double> d_logits(static_cast<std::size_t>(params.config.vocab_size));
  for (int c = 0; c < params.config.vocab_size; ++c)
    d_logits[static_cast<std::size_t>(c)] = scale * p[c];
  d_logits[static_cast<std::size_t>(target_token)] -= scale;
  reverse_pass(params, ws, input, d_logits, acc);
  double pt = p[target_token];
  return -std::log(pt > 1e-12 ? pt : 1e-12);
}

double kl_gradient(const Parameters& params, const ModelInput& input,
                   const std::vector<double>& p_ref, double scale, Gradients& acc) {
  if (static_cast<int>(p_ref.size()) != params.config.vocab_size)
    throw TraceMismatch("reference distribution width != vocab_size");
  Workspace& ws = detail::tls_workspace();
  detail::forward_core(params, input, nullptr, false, ws);
  int n = params.config.seq_len();
  const double* q = ws.probs.row(static_cast<std::size_t>(n - 1));
  std::vector<double> d_logits(static_cast<std::size_t>(params.config.vocab_size));
  double kl = 0.0;
  for (int c = 0; c < params.config.vocab_size; ++c) {
    double pc = p_ref[static_cast<std::size_t>(c)];
    d_logits[static_cast<std::size_t>(c)] = scale * (q[c] - pc);
    if (pc > 0.0) kl += pc * (std::log(pc) - std::log(q[c] > 1e-12 ? q[c] : 1e-12));
  }
  reverse_pass(params, ws, input, d_logits, acc);
  return kl;
}

Gradients backward(const Parameters& params, const ForwardTrace& trace, int target_token) {
  if (!(trace.config == params.config))
    throw TraceMismatch("trace was captured under a different model config");
  if (static_cast<int>(trace.layers.size()) != params.config.n_layers)
    throw TraceMismatch("trace layer count mismatch");
  if (target_token < 0 || target_token >= params.config.vocab_size)
    throw InvalidToken("backward target outside vocab");

  Workspace& ws = detail::tls_workspace();
  detail::forward_core(params, trace.input, nullptr, true, ws);

  // the trace must describe this exact parameter snapshot
  int n = params.config.seq_len();
  const double* mine = ws.probs.row(static_cast<std::size_t>(n - 1));
  const double* theirs = trace.probs.row(static_cast<std::size_t>(n - 1));
  for (int c = 0; c < params.config.vocab_size; ++c)
    if (mine[c] != theirs[c])
      throw TraceMismatch("trace does not replay under these parameters");

  std::vector<double> d_logits(static_cast<std::size_t>(params.config.vocab_size));
  for (int c = 0; c < params.config.vocab_size; ++c) d_logits[static_cast<std::size_t>(c)] = mine[c];
  d_logits[static_cast<std::size_t>(target_token)] -= 1.0;

  Gradients g = Parameters::zeros_like(params);
  reverse_pass(params, ws, trace.input, d_logits, g);
  return g;
}

}  // namespace tblab
