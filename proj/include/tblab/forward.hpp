#pragma once

#include <optional>
#include <vector>

#include "tblab/parameters.hpp"

namespace tblab {

// Image input comes in three flavors: a feature vector (projected into
// n_image_tokens embeddings), Absent (the learned null-image embedding fills
// every image position), or explicit pre-computed position embeddings.
struct ImageInput {
  enum class Kind { Features, Absent, Embeddings };
  Kind kind = Kind::Absent;
  std::vector<double> features;  // [d_image] when kind == Features
  Tensor embeddings;             // [n_image_tokens, d_model] when kind == Embeddings

  static ImageInput absent() { return ImageInput{}; }
  static ImageInput of_features(std::vector<double> f) {
    ImageInput im;
    im.kind = Kind::Features;
    im.features = std::move(f);
    return im;
  }
  static ImageInput of_embeddings(Tensor e) {
    ImageInput im;
    im.kind = Kind::Embeddings;
    im.embeddings = std::move(e);
    return im;
  }
};

struct ModelInput {
  ImageInput image;
  std::vector<int> text;  // token ids, exactly max_text_tokens of them
};

inline bool is_image_position(int pos, const ModelConfig& cfg) {
  return pos < cfg.n_image_tokens;
}

// Residual-stream record for one layer. Every position satisfies
// h_new = h_prev + attn_out + mlp_out by construction; attn is the
// head-averaged row-stochastic attention matrix.
struct LayerTrace {
  Tensor h_prev;    // [N, d]
  Tensor attn_out;  // [N, d]
  Tensor mlp_out;   // [N, d]
  Tensor h_new;     // [N, d]
  Tensor attn;      // [N, N]
};

struct ForwardTrace {
  ModelConfig config;
  ModelInput input;
  std::vector<LayerTrace> layers;  // [n_layers]
  Tensor logits;  // [N, vocab]
  Tensor probs;   // [N, vocab]

  const double* final_probs() const { return probs.row(probs.rows() - 1); }
};

// Layer-indexed mask plan. suppress[l] lists positions whose incoming hidden
// state is zeroed before layer l computes (l in [0, n_layers)). The final
// position may never be suppressed.
struct MaskPlan {
  std::vector<std::vector<int>> suppress;

  static MaskPlan none(int n_layers) {
    MaskPlan p;
    p.suppress.assign(static_cast<std::size_t>(n_layers), {});
    return p;
  }
  bool empty() const {
    for (const auto& s : suppress)
      if (!s.empty()) return false;
    return true;
  }
};

ForwardTrace forward_with_trace(const Parameters& params, const ModelInput& input);

// Fast path: final-position answer distribution only, no trace allocation.
std::vector<double> forward_probs(const Parameters& params, const ModelInput& input);

// Forward with per-layer zeroing of suppressed positions. Returns the
// final-position answer distribution. An all-empty plan matches
// forward_probs bit for bit.
std::vector<double> forward_masked(const Parameters& params, const ModelInput& input,
                                   const MaskPlan& plan);

int argmax_token(const std::vector<double>& dist);
int argmax_token(const double* dist, int n);

}  // namespace tblab
