#pragma once

#include <cstdint>
#include <vector>

#include "tblab/forward.hpp"
#include "tblab/parameters.hpp"

namespace tblab {

enum class ScoreAggregation { Sum, Mean };
const char* score_aggregation_name(ScoreAggregation a);

struct AttributionConfig {
  // acceptance threshold on the contribution score; the score lives in [-1, 2]
  // (distance ratio in [0,1] plus a cosine), so 2.01 excludes everything and
  // -1 accepts everything
  double gamma = 0.8;
  int top_k = 5;  // attention sources enqueued per accepted token
  ScoreAggregation aggregation = ScoreAggregation::Sum;

  void validate() const;
};

// One processed queue entry. Seeds carry expanded_from = -1 (the top layer is
// seeded with the output position, lower layers with the tokens the layer
// above accepted); everything else records which same-layer token pulled it in.
struct KeyTokenEntry {
  int position = -1;
  double score = 0.0;
  bool accepted = false;
  int expanded_from = -1;
};

struct LayerKeyTokens {
  std::vector<KeyTokenEntry> examined;  // processing order
  std::vector<double> accepted_scores;  // scores that met the threshold, in order

  std::vector<int> accepted_positions() const;
};

struct KeyTokenPath {
  AttributionConfig config;
  int n_positions = 0;
  std::vector<LayerKeyTokens> layers;  // indexed like the model's layers

  // union of accepted positions over layers [start_layer, L)
  std::vector<int> union_accepted(int start_layer) const;
};

// Contribution score of a residual state h given its attention component a,
// mlp component m, and the incoming state h_prev:
//   L2(h-a) / (L2(h-h_prev) + L2(h-m) + L2(h-a))  +  cos(h, a)
// Degenerate geometry (zero denominator, or a zero vector inside the cosine)
// raises DegenerateState rather than guessing.
double distance_score(const std::vector<double>& h, const std::vector<double>& a,
                      const std::vector<double>& m, const std::vector<double>& h_prev);

// Walk the trace top-down. Per layer, a FIFO queue starts from the layer
// above's accepted tokens (the top layer from the output position); each
// queued token is scored, and on acceptance its top-k attention sources join
// the same layer's queue. A visited set caps the queue at one entry per
// position per layer.
KeyTokenPath extract_key_tokens(const ForwardTrace& trace, const AttributionConfig& cfg);

// Per-layer image/text contribution ratio over the accepted key tokens.
struct ModalityRatioSeries {
  std::vector<double> score;
  std::vector<bool> infinite;  // text denominator was zero while image mass remained

  std::size_t size() const { return score.size(); }
};

ModalityRatioSeries modality_ratio(const KeyTokenPath& path, const ModelConfig& cfg);

// Retained-performance table for masking non-key tokens at layer suffixes.
struct MaskSweepRow {
  int start_layer = 0;  // masks layers [start_layer, L); start_layer == L is a no-op
  double masked_accuracy = 0.0;
  double retained = 0.0;  // masked accuracy / unmasked accuracy
};

struct MaskSweepTable {
  double base_accuracy = 0.0;
  std::vector<MaskSweepRow> rows;
};

// For each start layer, suppresses every position outside the path's accepted
// union (the final position always survives) at the suffix layers and measures
// exact-match accuracy against the unmasked run.
MaskSweepTable mask_sweep(const Parameters& params, const std::vector<ModelInput>& inputs,
                          const std::vector<int>& answers,
                          const std::vector<KeyTokenPath>& paths,
                          const std::vector<int>& start_layers);

// How much the final-layer image-token story moved versus the text-token story
// between two snapshots: KL(image before || after) / KL(text before || after),
// with per-position vocabulary projections averaged within each modality,
// then averaged over the inputs. A no-op edit reports 1.0 by convention.
double kl_modality_ratio(const Parameters& before, const Parameters& after,
                         const std::vector<ModelInput>& inputs);

}  // namespace tblab
