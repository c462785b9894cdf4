#include "tblab/editor.hpp"

#include <cmath>

#include "tblab/backward.hpp"
#include "tblab/errors.hpp"
#include "tblab/forward.hpp"
#include "tblab/stats.hpp"

namespace tblab {

const char* locality_term_name(LocalityTerm t) {
  switch (t) {
    case LocalityTerm::RI: return "RI";
    case LocalityTerm::NI: return "NI";
    case LocalityTerm::CI: return "CI";
  }
  return "?";
}

void EditorConfig::validate() const {
  if (lambda1 < 0.0 || lambda2 < 0.0 || lambda3 < 0.0)
    throw ConfigError("editor: lambdas must be nonnegative");
  if (!(std::isfinite(lambda1) && std::isfinite(lambda2) && std::isfinite(lambda3)))
    throw ConfigError("editor: lambdas must be finite");
  if (lr <= 0.0) throw ConfigError("editor: lr must be > 0");
  if (max_steps < 0) throw ConfigError("editor: max_steps must be >= 0");
  if (convergence <= 0.0) throw ConfigError("editor: convergence threshold must be > 0");
  if (target_params.empty()) throw ConfigError("editor: target_params must name tensors");
}

EditorConfig EditorConfig::edit_only() {
  EditorConfig c;
  c.lambda1 = 1.0;
  c.lambda2 = 0.0;
  c.lambda3 = 0.0;
  return c;
}

EditorConfig EditorConfig::composite() { return EditorConfig{}; }

EditTask make_edit_task(const Corpus& corpus, const EditRecord& edit) {
  if (edit.target.empty())
    throw DataError("record " + std::to_string(edit.id) + " has no edit target");
  EditTask t;
  t.input = input_for(corpus.vocab, edit.question, &edit.image);
  t.target_token = corpus.vocab.id_of(edit.target);
  t.pre_answer_token = corpus.vocab.id_of(edit.answer);
  return t;
}

const std::optional<ModelInput>& AdversarialBatch::term_input(LocalityTerm t) const {
  switch (t) {
    case LocalityTerm::RI: return ri;
    case LocalityTerm::NI: return ni;
    case LocalityTerm::CI: return ci;
  }
  return ri;
}

AdversarialBatch build_adversarial_batch(const EditRecord& edit, const Corpus& corpus,
                                         std::uint64_t seed) {
  SampledSets s = sample_sets_train(edit, corpus, seed);
  AdversarialBatch b;
  b.ri = input_for(corpus.vocab, s.text[0], &*s.image[2]);   // T1 x mismatched image
  b.ni = input_for(corpus.vocab, s.text[0], nullptr);        // T1 x no image
  b.ci = input_for(corpus.vocab, s.text[1], &*s.image[1]);   // similar pair
  b.unrelated_mm = input_for(corpus.vocab, s.text[2], &*s.image[2]);
  b.unrelated_text = input_for(corpus.vocab, s.text[3], nullptr);
  return b;
}

double edit_loss(const Parameters& params, const EditTask& task) {
  std::vector<double> p = forward_probs(params, task.input);
  double pt = p[static_cast<std::size_t>(task.target_token)];
  return -std::log(pt > 1e-12 ? pt : 1e-12);
}

double base_locality_loss(const Parameters& pre, const Parameters& post,
                          const AdversarialBatch& batch) {
  if (!batch.unrelated_mm || !batch.unrelated_text)
    throw IncompleteBatch("language-preserving term needs both unrelated samples");
  double s = kl_divergence(forward_probs(pre, *batch.unrelated_mm),
                           forward_probs(post, *batch.unrelated_mm));
  s += kl_divergence(forward_probs(pre, *batch.unrelated_text),
                     forward_probs(post, *batch.unrelated_text));
  return s;
}

double multimodal_locality_loss(const Parameters& pre, const Parameters& post,
                                const AdversarialBatch& batch,
                                const std::set<LocalityTerm>& terms) {
  double s = 0.0;
  for (LocalityTerm t : terms) {
    const auto& in = batch.term_input(t);
    if (!in)
      throw IncompleteBatch(std::string("batch lacks its ") + locality_term_name(t) +
                            " sample");
    s += kl_divergence(forward_probs(pre, *in), forward_probs(post, *in));
  }
  return s;
}

double combine_losses(double edit, double base_loc, double mm_loc, double lambda1,
                      double lambda2, double lambda3) {
  return lambda1 * edit + lambda2 * base_loc + lambda3 * mm_loc;
}

double composite_loss(const Parameters& pre, const Parameters& post, const EditTask& task,
                      const AdversarialBatch& batch, const EditorConfig& cfg) {
  cfg.validate();
  double le = edit_loss(post, task);
  double lb = cfg.lambda2 > 0.0 ? base_locality_loss(pre, post, batch) : 0.0;
  double lm = cfg.lambda3 > 0.0
                  ? multimodal_locality_loss(pre, post, batch, cfg.loss_combination)
                  : 0.0;
  return combine_losses(le, lb, lm, cfg.lambda1, cfg.lambda2, cfg.lambda3);
}

std::pair<Parameters, EditReport> apply_edit(const Parameters& base, const EditTask& task,
                                             const AdversarialBatch& batch,
                                             const EditorConfig& cfg) {
  cfg.validate();
  std::vector<std::string> names = resolve_target_params(cfg.target_params, base.config);
  Parameters post = base.clone();
  std::vector<Tensor*> targets;
  for (const auto& name : names) {
    Tensor* t = post.find(name);
    if (!t) throw ConfigError("unknown target tensor: " + name);
    targets.push_back(t);
  }

  // reference distributions for the KL terms: fixed at the pre-edit model
  struct Ref {
    const ModelInput* input;
    std::vector<double> probs;
    double lambda;
    bool mm_term;  // belongs to the adversarial sum (vs the language term)
  };
  std::vector<Ref> refs;
  if (cfg.lambda2 > 0.0) {
    if (!batch.unrelated_mm || !batch.unrelated_text)
      throw IncompleteBatch("language-preserving term needs both unrelated samples");
    refs.push_back({&*batch.unrelated_mm, forward_probs(base, *batch.unrelated_mm),
                    cfg.lambda2, false});
    refs.push_back({&*batch.unrelated_text, forward_probs(base, *batch.unrelated_text),
                    cfg.lambda2, false});
  }
  if (cfg.lambda3 > 0.0) {
    for (LocalityTerm t : cfg.loss_combination) {
      const auto& in = batch.term_input(t);
      if (!in)
        throw IncompleteBatch(std::string("batch lacks its ") + locality_term_name(t) +
                              " sample");
      refs.push_back({&*in, forward_probs(base, *in), cfg.lambda3, true});
    }
  }

  EditReport report;
  Gradients grad = Parameters::zeros_like(base);
  std::vector<Tensor*> grad_targets;
  for (const auto& name : names) grad_targets.push_back(grad.find(name));

  double le = edit_loss(post, task);
  for (int step = 0; step < cfg.max_steps && le >= cfg.convergence; ++step) {
    grad.for_each([](const std::string&, Tensor& t) { t.fill(0.0); });
    nll_gradient(post, task.input, task.target_token, cfg.lambda1, grad);
    for (const Ref& r : refs) kl_gradient(post, *r.input, r.probs, r.lambda, grad);
    for (std::size_t i = 0; i < targets.size(); ++i) {
      double* p = targets[i]->ptr();
      const double* g = grad_targets[i]->ptr();
      std::size_t n = targets[i]->data.size();
      for (std::size_t k = 0; k < n; ++k) p[k] -= cfg.lr * g[k];
    }
    report.steps = step + 1;
    le = edit_loss(post, task);
  }

  report.converged = le < cfg.convergence;
  report.edit_loss = le;
  if (batch.unrelated_mm && batch.unrelated_text)
    report.base_locality = base_locality_loss(base, post, batch);
  std::set<LocalityTerm> present;  // report over what the batch actually holds
  for (LocalityTerm t : {LocalityTerm::RI, LocalityTerm::NI, LocalityTerm::CI})
    if (batch.term_input(t)) present.insert(t);
  report.mm_locality = multimodal_locality_loss(base, post, batch, present);
  base.for_each([&](const std::string& name, const Tensor& t) {
    const Tensor* after = post.find(name);
    double s = 0.0;
    for (std::size_t i = 0; i < t.data.size(); ++i) {
      double d = after->data[i] - t.data[i];
      s += d * d;
    }
    report.delta_norms[name] = std::sqrt(s);
  });
  if (!post.finite()) throw NumericError("edited parameters are not finite");
  return {std::move(post), std::move(report)};
}

}  // namespace tblab
