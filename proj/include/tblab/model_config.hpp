#pragma once

#include <cstdint>

#include "tblab/errors.hpp"

namespace tblab {

struct ModelConfig {
  int n_layers = 4;
  int d_model = 64;
  int n_heads = 4;
  int d_ff = 256;
  int vocab_size = 64;
  int n_image_tokens = 8;    // m image positions ahead of the text
  int max_text_tokens = 6;   // questions are padded-free, always exactly this long
  int d_image = 288;         // image feature vector width
  std::uint64_t seed = 1;

  int seq_len() const { return n_image_tokens + max_text_tokens; }
  int head_dim() const { return d_model / n_heads; }

  void validate() const {
    if (n_layers < 1) throw ConfigError("model: n_layers must be >= 1");
    if (d_model < 1) throw ConfigError("model: d_model must be >= 1");
    if (n_heads < 1 || d_model % n_heads != 0)
      throw ConfigError("model: n_heads must divide d_model");
    if (d_ff < 1) throw ConfigError("model: d_ff must be >= 1");
    if (vocab_size < 2) throw ConfigError("model: vocab_size must be >= 2");
    if (n_image_tokens < 1) throw ConfigError("model: n_image_tokens must be >= 1");
    if (max_text_tokens < 1) throw ConfigError("model: max_text_tokens must be >= 1");
    if (d_image < 1) throw ConfigError("model: d_image must be >= 1");
  }

  bool operator==(const ModelConfig&) const = default;
};

}  // namespace tblab
