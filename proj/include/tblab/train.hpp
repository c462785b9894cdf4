#pragma once

#include <cstdint>
#include <vector>

#include "tblab/corpus.hpp"
#include "tblab/parameters.hpp"

namespace tblab {

struct TrainConfig {
  int epochs = 80;
  int batch_size = 16;
  double lr = 2e-3;       // Adam
  double lr_decay = 0.93; // multiplicative, per epoch
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  // fraction of samples presented with the image withheld but the answer kept,
  // so the model builds a text-prior pathway for image-free questions (the
  // editable circuit real assistants have)
  double no_image_fraction = 0.10;
  double target_accuracy = 0.95;
  int eval_every = 5;  // epochs between accuracy checks (and early stop)
  std::uint64_t seed = 1;

  void validate() const;
};

struct TrainReport {
  bool converged = false;
  double accuracy = 0.0;          // exact match over the corpus pairs
  double no_image_follow = 0.0;  // fraction matching the stored answer without an image
  int epochs_run = 0;
  std::vector<double> loss_curve;  // mean loss per epoch
};

struct TrainResult {
  Parameters params;
  TrainReport report;
};

// Greedy exact-match accuracy of the model on every (image, question) pair.
double corpus_accuracy(const Parameters& params, const Corpus& corpus);

// Fraction of questions still answered with the record's stored answer when the
// image is withheld: strength of the learned text prior.
double no_image_follow(const Parameters& params, const Corpus& corpus, int sample_n,
                       std::uint64_t seed);

// Adam on the token cross-entropy, deterministic given the seeds. Stops early
// once the accuracy target is met; otherwise runs the full epoch budget and
// reports converged = false.
TrainResult train_base(const Corpus& corpus, const ModelConfig& model_cfg,
                       const TrainConfig& cfg);

}  // namespace tblab
