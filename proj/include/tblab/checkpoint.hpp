#pragma once

#include <string>

#include "tblab/parameters.hpp"

namespace tblab {

// Single-file checkpoint: one line of JSON (config, tensor manifest, seed,
// config hash, format tag) followed by the raw little-endian f32 payload in
// manifest order.
void save_checkpoint(const Parameters& params, const std::string& path);
Parameters load_checkpoint(const std::string& path);

std::string model_config_hash(const ModelConfig& cfg);

}  // namespace tblab
