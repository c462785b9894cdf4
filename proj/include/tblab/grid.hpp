#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tblab/sampling.hpp"

namespace tblab {

// What a cell measures. RILoc/NILoc/CILoc carry a canonical flag: only the
// canonical members enter the headline metric averages, the rest are reported
// under the supplementary section.
enum class MetricClass {
  Rel,            // the edited pair itself
  TGen,           // rephrased question, original image
  IGen,           // original question, re-noised image
  TLoc,           // unrelated text, no image
  ILoc,           // unrelated text with its own image
  RILoc,          // question with a mismatched image
  NILoc,          // edit-adjacent text with no image
  CILoc,          // similar text and/or similar image
  Supplementary,  // remaining grid cells, no headline metric
};

enum class Expectation {
  EqualsTarget,   // post-edit answer should be the edit target
  NotTarget,      // post-edit answer should NOT be the edit target
  EqualsPreEdit,  // post-edit answer should match the pre-edit answer
};

const char* metric_class_name(MetricClass c);
Expectation expectation_of(MetricClass c);

struct EvalCell {
  int ti = 0;  // 1-based text index, 0 for the generalization cells
  int ij = 0;  // 1-based image index, 0 for the generalization cells
  MetricClass metric_class = MetricClass::Supplementary;
  bool canonical = false;  // member of the nine headline cells
  Expectation expectation = Expectation::EqualsPreEdit;
  std::vector<std::string> question;
  std::optional<ImageSpec> image;  // empty = absent image

  std::string id() const;  // "T1I1", "TGen", "IGen"
};

struct EvalSuite {
  EditRecord edit;
  int k = 4;                    // grid side length
  std::vector<EvalCell> cells;  // k*k grid cells row-major, then TGen, IGen

  std::vector<const EvalCell*> locality_cells() const;  // grid minus (1,1)
  std::vector<const EvalCell*> canonical_nine() const;
};

// Class of the (ti, ij) grid cell, 1-based indices.
MetricClass classify_cell(int ti, int ij);
bool is_canonical_cell(int ti, int ij);

// Assemble the evaluation suite from the sampled sets. k < 4 keeps only the
// first k texts and images (the generalization cells are appended regardless).
EvalSuite build_grid(const EditRecord& edit, const SampledSets& sets, int k = 4);

}  // namespace tblab
