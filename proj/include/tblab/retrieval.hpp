#pragma once

#include "tblab/corpus.hpp"

namespace tblab {

struct RetrievalResult {
  int record_id = -1;
  double similarity = 0.0;
};

// Most similar other record whose answer differs from the edit's target.
// Cosine over stored unit embeddings, descending; ties broken by ascending id.
// skip_ranks > 0 returns the (skip_ranks+1)-th valid hit, which gives the
// editors a training-side neighbor distinct from the evaluation one.
RetrievalResult retrieve_similar(const EditRecord& edit, const Corpus& corpus,
                                 int skip_ranks = 0);

double cosine(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace tblab
