#include "tblab/grid.hpp"

#include "tblab/errors.hpp"

namespace tblab {

const char* metric_class_name(MetricClass c) {
  switch (c) {
    case MetricClass::Rel: return "Rel";
    case MetricClass::TGen: return "T-Gen";
    case MetricClass::IGen: return "I-Gen";
    case MetricClass::TLoc: return "T-Loc";
    case MetricClass::ILoc: return "I-Loc";
    case MetricClass::RILoc: return "RI-Loc";
    case MetricClass::NILoc: return "NI-Loc";
    case MetricClass::CILoc: return "CI-Loc";
    case MetricClass::Supplementary: return "Supplementary";
  }
  return "?";
}

Expectation expectation_of(MetricClass c) {
  switch (c) {
    case MetricClass::Rel:
    case MetricClass::TGen:
    case MetricClass::IGen:
      return Expectation::EqualsTarget;
    case MetricClass::RILoc:
    case MetricClass::NILoc:
    case MetricClass::CILoc:
      return Expectation::NotTarget;
    case MetricClass::TLoc:
    case MetricClass::ILoc:
    case MetricClass::Supplementary:
      return Expectation::EqualsPreEdit;
  }
  return Expectation::EqualsPreEdit;
}

MetricClass classify_cell(int ti, int ij) {
  if (ti < 1 || ti > 4 || ij < 1 || ij > 4)
    throw ConfigError("grid cell index out of range: T" + std::to_string(ti) + "I" +
                      std::to_string(ij));
  if (ti == 1 && ij == 1) return MetricClass::Rel;
  // similar text and/or similar image
  if ((ti == 1 && ij == 2) || (ti == 2 && ij == 1) || (ti == 2 && ij == 2))
    return MetricClass::CILoc;
  // edit-adjacent text with the image withheld
  if (ij == 4 && (ti == 1 || ti == 2)) return MetricClass::NILoc;
  // mismatched image under a meaningful question: canonical T1I3/T3I1 plus the
  // same shape built from the similar or unrelated question
  if ((ti == 1 && ij == 3) || (ti == 3 && ij == 1)) return MetricClass::RILoc;
  if ((ti == 2 && ij == 3) || (ti == 4 && ij <= 3)) return MetricClass::RILoc;
  if (ti == 4 && ij == 4) return MetricClass::TLoc;
  if (ti == 3 && ij == 3) return MetricClass::ILoc;
  return MetricClass::Supplementary;  // T3I2, T3I4
}

bool is_canonical_cell(int ti, int ij) {
  MetricClass c = classify_cell(ti, ij);
  switch (c) {
    case MetricClass::Rel:
    case MetricClass::TLoc:
    case MetricClass::ILoc:
    case MetricClass::NILoc:
    case MetricClass::CILoc:
      return true;
    case MetricClass::RILoc:
      return (ti == 1 && ij == 3) || (ti == 3 && ij == 1);
    default:
      return false;
  }
}

std::string EvalCell::id() const {
  if (ti == 0) return metric_class == MetricClass::TGen ? "TGen" : "IGen";
  return "T" + std::to_string(ti) + "I" + std::to_string(ij);
}

std::vector<const EvalCell*> EvalSuite::locality_cells() const {
  std::vector<const EvalCell*> out;
  for (const auto& c : cells)
    if (c.ti >= 1 && !(c.ti == 1 && c.ij == 1)) out.push_back(&c);
  return out;
}

std::vector<const EvalCell*> EvalSuite::canonical_nine() const {
  std::vector<const EvalCell*> out;
  for (const auto& c : cells)
    if (c.ti >= 1 && c.canonical && c.metric_class != MetricClass::Rel)
      out.push_back(&c);
  return out;
}

EvalSuite build_grid(const EditRecord& edit, const SampledSets& sets, int k) {
  if (k < 2 || k > 4) throw ConfigError("grid side length must be 2..4");
  EvalSuite suite;
  suite.edit = edit;
  suite.k = k;
  for (int i = 1; i <= k; ++i) {
    for (int j = 1; j <= k; ++j) {
      EvalCell cell;
      cell.ti = i;
      cell.ij = j;
      cell.metric_class = classify_cell(i, j);
      cell.canonical = is_canonical_cell(i, j);
      cell.expectation = expectation_of(cell.metric_class);
      cell.question = sets.text[i - 1];
      cell.image = sets.image[j - 1];
      suite.cells.push_back(std::move(cell));
    }
  }
  EvalCell tgen;
  tgen.metric_class = MetricClass::TGen;
  tgen.expectation = Expectation::EqualsTarget;
  tgen.question = edit.rephrase_q;
  tgen.image = edit.image;
  suite.cells.push_back(std::move(tgen));

  EvalCell igen;
  igen.metric_class = MetricClass::IGen;
  igen.expectation = Expectation::EqualsTarget;
  igen.question = edit.question;
  igen.image = edit.rephrase_img;
  suite.cells.push_back(std::move(igen));
  return suite;
}

}  // namespace tblab
