#include "tblab/metrics.hpp"

#include <stdexcept>

#include "tblab/errors.hpp"
#include "tblab/forward.hpp"

namespace tblab {

bool exact_match(int predicted, int reference) { return predicted == reference; }

std::vector<CellResult> evaluate_suite(const Parameters& pre, const Parameters& post,
                                       const EvalSuite& suite, const Vocabulary& vocab) {
  if (!(pre.config == post.config))
    throw ConfigError("pre and post snapshots use different model configs");
  if (suite.edit.target.empty())
    throw DataError("suite's edit record has no target");
  int target = vocab.id_of(suite.edit.target);

  std::vector<CellResult> out;
  out.reserve(suite.cells.size());
  for (const EvalCell& cell : suite.cells) {
    CellResult r;
    r.cell_id = cell.id();
    r.metric_class = cell.metric_class;
    r.canonical = cell.canonical;
    r.expectation = cell.expectation;
    r.target_token = target;
    try {
      ModelInput in = input_for(vocab, cell.question, cell.image ? &*cell.image : nullptr);
      r.pre_token = argmax_token(forward_probs(pre, in));
      r.post_token = argmax_token(forward_probs(post, in));
    } catch (const std::runtime_error& e) {
      throw DataError("cell " + r.cell_id + ": " + e.what());
    }
    switch (r.expectation) {
      case Expectation::EqualsTarget:
        r.satisfied = exact_match(r.post_token, target);
        break;
      case Expectation::NotTarget:
        r.satisfied = !exact_match(r.post_token, target);
        break;
      case Expectation::EqualsPreEdit:
        r.satisfied = exact_match(r.post_token, r.pre_token);
        break;
    }
    r.consistent = exact_match(r.post_token, r.pre_token);
    out.push_back(std::move(r));
  }
  return out;
}

MetricReport aggregate(const std::vector<std::vector<CellResult>>& per_edit) {
  MetricReport rep;
  rep.n_edits = static_cast<int>(per_edit.size());
  if (per_edit.empty()) return rep;

  std::map<std::string, std::pair<double, int>> sat;  // cell id -> (sum, count)
  std::map<std::string, std::pair<double, int>> cons;
  struct ClassAcc {
    double sum = 0.0;
    int n = 0;
    void add(bool b) {
      sum += b ? 1.0 : 0.0;
      ++n;
    }
    double mean() const { return n > 0 ? sum / n : 0.0; }
  };
  std::map<MetricClass, ClassAcc> by_class;  // canonical members only

  for (const auto& cells : per_edit)
    for (const CellResult& c : cells) {
      auto& s = sat[c.cell_id];
      s.first += c.satisfied ? 1.0 : 0.0;
      s.second += 1;
      auto& k = cons[c.cell_id];
      k.first += c.consistent ? 1.0 : 0.0;
      k.second += 1;
      bool headline = c.canonical || c.metric_class == MetricClass::TGen ||
                      c.metric_class == MetricClass::IGen;
      if (headline) by_class[c.metric_class].add(c.satisfied);
    }

  for (const auto& [id, sc] : sat) rep.per_pair[id] = sc.first / sc.second;
  for (const auto& [id, sc] : cons) rep.consistency[id] = sc.first / sc.second;

  rep.rel = by_class[MetricClass::Rel].mean();
  rep.t_gen = by_class[MetricClass::TGen].mean();
  rep.i_gen = by_class[MetricClass::IGen].mean();
  rep.t_loc = by_class[MetricClass::TLoc].mean();
  rep.i_loc = by_class[MetricClass::ILoc].mean();
  rep.ri_loc = by_class[MetricClass::RILoc].mean();
  rep.ni_loc = by_class[MetricClass::NILoc].mean();
  rep.ci_loc = by_class[MetricClass::CILoc].mean();

  static const char* kNine[] = {"T4I4", "T3I3", "T3I1", "T1I2", "T1I3",
                                "T1I4", "T2I1", "T2I2", "T2I4"};
  double s = 0.0;
  int n = 0;
  for (const char* id : kNine) {
    auto it = rep.per_pair.find(id);
    if (it != rep.per_pair.end()) {
      s += it->second;
      ++n;
    }
  }
  rep.mean_nine = n > 0 ? s / n : 0.0;
  return rep;
}

}  // namespace tblab
