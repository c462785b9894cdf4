#include "tblab/retrieval.hpp"

#include <algorithm>

#include "tblab/errors.hpp"

namespace tblab {

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw DataError("embedding width mismatch");
  double num = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return num / std::sqrt(na * nb);
}

RetrievalResult retrieve_similar(const EditRecord& edit, const Corpus& corpus,
                                 int skip_ranks) {
  struct Scored {
    double sim;
    int id;
  };
  std::vector<Scored> order;
  order.reserve(corpus.records.size());
  for (const auto& r : corpus.records) {
    if (r.id == edit.id) continue;
    order.push_back({cosine(edit.embedding, r.embedding), r.id});
  }
  std::sort(order.begin(), order.end(), [](const Scored& a, const Scored& b) {
    if (a.sim != b.sim) return a.sim > b.sim;
    return a.id < b.id;
  });

  int remaining = skip_ranks;
  for (const auto& s : order) {
    if (corpus.by_id(s.id).answer == edit.target) continue;  // must not equal the target
    if (remaining-- > 0) continue;
    return {s.id, s.sim};
  }
  throw NoCandidate("no retrievable record with answer != target for edit " +
                    std::to_string(edit.id));
}

}  // namespace tblab
