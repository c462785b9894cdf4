#include "tblab/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tblab/backward.hpp"
#include "tblab/errors.hpp"
#include "tblab/forward.hpp"
#include "tblab/rng.hpp"

namespace tblab {

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("train: epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (lr <= 0.0) throw ConfigError("train: lr must be > 0");
  if (lr_decay <= 0.0 || lr_decay > 1.0)
    throw ConfigError("train: lr_decay must lie in (0, 1]");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
    throw ConfigError("train: betas must lie in [0, 1)");
  if (no_image_fraction < 0.0 || no_image_fraction > 1.0)
    throw ConfigError("train: no_image_fraction must lie in [0, 1]");
  if (target_accuracy < 0.0 || target_accuracy > 1.0)
    throw ConfigError("train: target_accuracy must lie in [0, 1]");
  if (eval_every < 1) throw ConfigError("train: eval_every must be >= 1");
}

double corpus_accuracy(const Parameters& params, const Corpus& corpus) {
  if (corpus.records.empty()) return 0.0;
  int hits = 0;
  for (const auto& r : corpus.records) {
    ModelInput in = input_for(corpus.vocab, r.question, &r.image);
    if (argmax_token(forward_probs(params, in)) == corpus.vocab.id_of(r.answer)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(corpus.records.size());
}

double no_image_follow(const Parameters& params, const Corpus& corpus, int sample_n,
                       std::uint64_t seed) {
  if (corpus.records.empty() || sample_n < 1) return 0.0;
  Rng rng = Rng(seed).child("noimg");
  int hits = 0;
  for (int i = 0; i < sample_n; ++i) {
    const auto& r = corpus.records[rng.uniform_index(corpus.records.size())];
    ModelInput in = input_for(corpus.vocab, r.question, nullptr);
    if (argmax_token(forward_probs(params, in)) == corpus.vocab.id_of(r.answer)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(sample_n);
}

TrainResult train_base(const Corpus& corpus, const ModelConfig& model_cfg,
                       const TrainConfig& cfg) {
  cfg.validate();
  model_cfg.validate();
  if (corpus.records.empty()) throw DataError("cannot train on an empty corpus");
  if (corpus.vocab.size() > model_cfg.vocab_size)
    throw ConfigError("corpus vocabulary (" + std::to_string(corpus.vocab.size()) +
                      " tokens) exceeds the model's vocab_size");
  if (static_cast<int>(corpus.records[0].image.features.size()) != model_cfg.d_image)
    throw ConfigError("corpus feature width != model d_image");

  TrainResult out{Parameters::init(model_cfg), {}};
  Parameters& params = out.params;
  TrainReport& report = out.report;

  Gradients grad = Parameters::zeros_like(params);
  Gradients moment1 = Parameters::zeros_like(params);
  Gradients moment2 = Parameters::zeros_like(params);
  std::vector<Tensor*> pt, gt, m1, m2;
  params.for_each([&](const std::string&, Tensor& t) { pt.push_back(&t); });
  grad.for_each([&](const std::string&, Tensor& t) { gt.push_back(&t); });
  moment1.for_each([&](const std::string&, Tensor& t) { m1.push_back(&t); });
  moment2.for_each([&](const std::string&, Tensor& t) { m2.push_back(&t); });

  const std::size_t n = corpus.records.size();
  std::vector<int> answer_id(n);
  for (std::size_t i = 0; i < n; ++i)
    answer_id[i] = corpus.vocab.id_of(corpus.records[i].answer);
  Rng root(cfg.seed);
  std::vector<std::size_t> order(n);
  long step = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double lr_now = cfg.lr * std::pow(cfg.lr_decay, static_cast<double>(epoch));
    Rng er = root.child("epoch", static_cast<std::uint64_t>(epoch));
    std::iota(order.begin(), order.end(), std::size_t{0});
    er.shuffle(order);

    double loss_sum = 0.0;
    long loss_n = 0;
    for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(cfg.batch_size)) {
      std::size_t bn = std::min(static_cast<std::size_t>(cfg.batch_size), n - start);
      for (Tensor* t : gt) t->fill(0.0);
      for (std::size_t k = start; k < start + bn; ++k) {
        const EditRecord& r = corpus.records[order[k]];
        bool absent = er.uniform() < cfg.no_image_fraction;
        ModelInput in = input_for(corpus.vocab, r.question, absent ? nullptr : &r.image);
        loss_sum += nll_gradient(params, in, answer_id[order[k]],
                                 1.0 / static_cast<double>(bn), grad);
        ++loss_n;
      }

      ++step;
      double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
      double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
      for (std::size_t ti = 0; ti < pt.size(); ++ti) {
        double* p = pt[ti]->ptr();
        double* g = gt[ti]->ptr();
        double* ma = m1[ti]->ptr();
        double* vb = m2[ti]->ptr();
        std::size_t count = pt[ti]->data.size();
        for (std::size_t i = 0; i < count; ++i) {
          ma[i] = cfg.beta1 * ma[i] + (1.0 - cfg.beta1) * g[i];
          vb[i] = cfg.beta2 * vb[i] + (1.0 - cfg.beta2) * g[i] * g[i];
          p[i] -= lr_now * (ma[i] / bc1) / (std::sqrt(vb[i] / bc2) + cfg.adam_eps);
        }
      }
    }
    report.loss_curve.push_back(loss_n > 0 ? loss_sum / static_cast<double>(loss_n) : 0.0);
    report.epochs_run = epoch + 1;

    if ((epoch + 1) % cfg.eval_every == 0) {
      report.accuracy = corpus_accuracy(params, corpus);
      if (report.accuracy >= cfg.target_accuracy) {
        report.converged = true;
        break;
      }
    }
  }

  if (!report.converged) {
    report.accuracy = corpus_accuracy(params, corpus);
    report.converged = report.accuracy >= cfg.target_accuracy;
  }
  report.no_image_follow = tblab::no_image_follow(params, corpus, 200, cfg.seed);
  return out;
}

}  // namespace tblab
