#pragma once

#include <map>
#include <string>
#include <vector>

#include "tblab/corpus.hpp"
#include "tblab/grid.hpp"
#include "tblab/parameters.hpp"

namespace tblab {

bool exact_match(int predicted, int reference);

// One evaluated grid cell: what both models said and whether the cell's
// expectation held.
struct CellResult {
  std::string cell_id;
  MetricClass metric_class = MetricClass::Supplementary;
  bool canonical = false;
  Expectation expectation = Expectation::EqualsPreEdit;
  int pre_token = -1;      // pre-edit model's greedy answer
  int post_token = -1;     // post-edit model's greedy answer
  int target_token = -1;   // the edit target a
  bool satisfied = false;
  bool consistent = false;  // post == pre, reported alongside every cell
};

// Greedy-decode every suite cell under both snapshots and judge expectations.
std::vector<CellResult> evaluate_suite(const Parameters& pre, const Parameters& post,
                                       const EvalSuite& suite, const Vocabulary& vocab);

struct MetricReport {
  int n_edits = 0;
  double rel = 0.0;
  double t_gen = 0.0;
  double i_gen = 0.0;
  double t_loc = 0.0;
  double i_loc = 0.0;
  double ri_loc = 0.0;  // canonical cells only
  double ni_loc = 0.0;
  double ci_loc = 0.0;
  double mean_nine = 0.0;                    // mean of the nine headline per-pair scores
  std::map<std::string, double> per_pair;    // cell id -> mean satisfied
  std::map<std::string, double> consistency; // cell id -> mean (post == pre)

  double mm_locality_mean() const { return (ri_loc + ni_loc + ci_loc) / 3.0; }
};

// Mean the per-cell indicators over all evaluated edits.
MetricReport aggregate(const std::vector<std::vector<CellResult>>& per_edit);

}  // namespace tblab
