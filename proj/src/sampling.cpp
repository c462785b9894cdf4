#include "tblab/sampling.hpp"

#include "tblab/errors.hpp"
#include "tblab/retrieval.hpp"
#include "tblab/rng.hpp"

namespace tblab {

static SampledSets sample_impl(const EditRecord& edit, const Corpus& corpus,
                               std::uint64_t seed, const char* label, int skip_ranks) {
  if (corpus.records.size() < 4)
    throw CorpusTooSmall("need at least 4 records to build the grid");

  SampledSets s;
  s.text[0] = edit.question;
  s.image[0] = edit.image;
  s.text_answer[0] = edit.answer;

  RetrievalResult t2 = retrieve_similar(edit, corpus, skip_ranks);
  const EditRecord& r2 = corpus.by_id(t2.record_id);
  s.text[1] = r2.question;
  s.image[1] = r2.image;
  s.text_answer[1] = r2.answer;
  s.t2_record = r2.id;
  s.t2_similarity = t2.similarity;

  Rng rng = Rng(seed).child(label).child("edit", static_cast<std::uint64_t>(edit.id));

  std::vector<int> disjoint;
  for (const auto& r : corpus.records) {
    if (r.id == edit.id || r.id == r2.id) continue;
    if (r.image.attrs_disjoint(edit.image)) disjoint.push_back(r.id);
  }
  if (disjoint.empty())
    throw CorpusTooSmall("no record with attributes disjoint from edit " +
                         std::to_string(edit.id));
  int t3_id = disjoint[rng.child("t3").uniform_index(disjoint.size())];
  const EditRecord& r3 = corpus.by_id(t3_id);
  s.text[2] = r3.question;
  s.image[2] = r3.image;
  s.text_answer[2] = r3.answer;
  s.t3_record = r3.id;

  std::vector<int> others;
  for (const auto& r : corpus.records) {
    if (r.id == edit.id || r.id == r2.id || r.id == r3.id) continue;
    others.push_back(r.id);
  }
  if (others.empty()) throw CorpusTooSmall("no record left for the unrelated text");
  int t4_id = others[rng.child("t4").uniform_index(others.size())];
  const EditRecord& r4 = corpus.by_id(t4_id);
  s.text[3] = r4.question;
  s.text_answer[3] = r4.answer;
  s.t4_record = r4.id;

  // image slot 4 stays empty: the absent image
  return s;
}

SampledSets sample_sets(const EditRecord& edit, const Corpus& corpus, std::uint64_t seed) {
  return sample_impl(edit, corpus, seed, "eval", 0);
}

SampledSets sample_sets_train(const EditRecord& edit, const Corpus& corpus,
                              std::uint64_t seed) {
  return sample_impl(edit, corpus, seed, "train", 1);
}

}  // namespace tblab
