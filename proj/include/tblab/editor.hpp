#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "tblab/corpus.hpp"
#include "tblab/parameters.hpp"
#include "tblab/sampling.hpp"

namespace tblab {

// The three adversarial sample types of the locality-aware loss.
enum class LocalityTerm { RI, NI, CI };
const char* locality_term_name(LocalityTerm t);

struct EditorConfig {
  double lambda1 = 0.1;  // edit loss weight
  double lambda2 = 1.0;  // language-preserving KL weight
  double lambda3 = 1.0;  // adversarial-sample KL weight
  double lr = 1e-2;      // plain gradient descent, fixed rate
  int max_steps = 4000;  // the composite loss needs roughly 1700 steps
  double convergence = 0.05;  // stop once the edit loss drops below this
  std::string target_params = "D";
  std::set<LocalityTerm> loss_combination = {LocalityTerm::RI, LocalityTerm::NI,
                                             LocalityTerm::CI};

  void validate() const;

  // weights (1, 0, 0): optimize the edit loss alone
  static EditorConfig edit_only();
  // default weights (0.1, 1, 1) with all three adversarial terms
  static EditorConfig composite();
};

// The edited fact, pre-encoded for the model.
struct EditTask {
  ModelInput input;         // question T1 with image I1
  int target_token = -1;    // the new answer the edit installs
  int pre_answer_token = -1;
};

EditTask make_edit_task(const Corpus& corpus, const EditRecord& edit);

// Training-side samples the locality terms are computed on. Drawn from an
// independent seeded split so the editor never optimizes the exact inputs the
// evaluation grid will score.
struct AdversarialBatch {
  std::optional<ModelInput> ri;              // T1 question, mismatched image
  std::optional<ModelInput> ni;              // T1 question, no image
  std::optional<ModelInput> ci;              // similar question, its own image
  std::optional<ModelInput> unrelated_mm;    // unrelated question with its image
  std::optional<ModelInput> unrelated_text;  // unrelated question, no image

  const std::optional<ModelInput>& term_input(LocalityTerm t) const;
};

AdversarialBatch build_adversarial_batch(const EditRecord& edit, const Corpus& corpus,
                                         std::uint64_t seed);

// -log p(target | edit input), probability clamped at 1e-12.
double edit_loss(const Parameters& params, const EditTask& task);

// KL(pre || post) on the unrelated multimodal pair plus the unrelated
// text-only question: the language-preserving constraint.
double base_locality_loss(const Parameters& pre, const Parameters& post,
                          const AdversarialBatch& batch);

// Sum of KL(pre || post) over the selected adversarial sample types.
double multimodal_locality_loss(const Parameters& pre, const Parameters& post,
                                const AdversarialBatch& batch,
                                const std::set<LocalityTerm>& terms);

double combine_losses(double edit, double base_loc, double mm_loc, double lambda1,
                      double lambda2, double lambda3);

double composite_loss(const Parameters& pre, const Parameters& post, const EditTask& task,
                      const AdversarialBatch& batch, const EditorConfig& cfg);

struct EditReport {
  int steps = 0;
  bool converged = false;
  double edit_loss = 0.0;
  double base_locality = 0.0;
  double mm_locality = 0.0;
  std::map<std::string, double> delta_norms;  // per tensor, zero off-target
};

// Gradient descent on the composite loss, restricted to the configured target
// tensors. Returns a fresh snapshot; the input parameters are never touched.
std::pair<Parameters, EditReport> apply_edit(const Parameters& base, const EditTask& task,
                                             const AdversarialBatch& batch,
                                             const EditorConfig& cfg);

}  // namespace tblab
