#pragma once

#include <array>
#include <cstdint>
#include <optional>

#include "tblab/corpus.hpp"

namespace tblab {

// The four texts and four images behind the evaluation grid.
//   T1/I1: the edit pair itself
//   T2/I2: retrieved similar record (answer differs from the target)
//   T3/I3: seeded draw among records with attributes fully disjoint from the edit
//   T4:    seeded draw of a question from a record distinct from the first three
//   I4:    the absent image
struct SampledSets {
  std::array<std::vector<std::string>, 4> text;   // T1..T4
  std::array<std::optional<ImageSpec>, 4> image;  // I1..I3 set, I4 empty
  std::array<std::string, 4> text_answer;         // ground truth of each source record
  int t2_record = -1;
  int t3_record = -1;
  int t4_record = -1;
  double t2_similarity = 0.0;
};

SampledSets sample_sets(const EditRecord& edit, const Corpus& corpus, std::uint64_t seed);

// Training-side counterpart: an independent seeded draw (and the next-ranked
// retrieval neighbor) so the editor never trains on the evaluation grid's
// exact samples.
SampledSets sample_sets_train(const EditRecord& edit, const Corpus& corpus,
                              std::uint64_t seed);

}  // namespace tblab
