#pragma once

#include <functional>
#include <string>
#include <vector>

#include "tblab/model_config.hpp"
#include "tblab/tensor.hpp"

namespace tblab {

struct AttnWeights {
  Tensor wq, wk, wv, wo;  // each [d_model, d_model]
};

struct MlpWeights {
  Tensor w1;  // [d_ff, d_model]
  Tensor w2;  // [d_model, d_ff]
};

struct LayerWeights {
  AttnWeights attn;
  MlpWeights mlp;
};

// Full weight set. Treated as an immutable snapshot by forward/backward;
// editing and training clone first, then step the clone.
struct Parameters {
  ModelConfig config;
  Tensor text_embed;  // [vocab_size, d_model]
  Tensor pos_embed;   // [seq_len, d_model]
  Tensor null_image;  // [d_model], fills the image positions when no image is given
  Tensor image_proj;  // [n_image_tokens * d_model, d_image]
  std::vector<LayerWeights> layers;
  Tensor out_proj;    // [vocab_size, d_model]

  static Parameters allocate(const ModelConfig& cfg);    // zero tensors, right shapes
  static Parameters init(const ModelConfig& cfg);        // seeded from cfg.seed
  static Parameters zeros_like(const Parameters& other); // same shapes, all zero

  Parameters clone() const { return *this; }

  // Canonical tensor walk; supplies stable names for checkpoints, gradients
  // and target selection ("embed.text", "layers.2.mlp.w1", ...).
  void for_each(const std::function<void(const std::string&, Tensor&)>& fn);
  void for_each(const std::function<void(const std::string&, const Tensor&)>& fn) const;

  Tensor* find(const std::string& name);

  bool finite() const;
  bool same_shapes(const Parameters& o) const;
  bool bit_equal(const Parameters& o) const;
};

// Gradients carry one tensor per parameter tensor, same shapes, same names.
using Gradients = Parameters;

// Resolve a target-parameter selector to tensor names.
//   "D"  -> MLP weights of the top min(3, n_layers) layers
//   "V"  -> the image projection
//   "DV" -> union of both
// anything else is a comma-separated explicit name list.
std::vector<std::string> resolve_target_params(const std::string& selector,
                                               const ModelConfig& cfg);

}  // namespace tblab
