#pragma once

#include <string>
#include <vector>

#include "tblab/attribution.hpp"
#include "tblab/editor.hpp"
#include "tblab/metrics.hpp"

namespace tblab {

// One edit-and-evaluate campaign: load corpus + base checkpoint, apply the
// configured editor to each selected record on a fresh clone of the base,
// score the full grid, aggregate, and write everything under a fresh run
// directory. The base checkpoint file is never written to.
struct PipelineConfig {
  std::string corpus_path;
  std::string checkpoint_path;
  std::string out_dir;        // run directory is created inside this
  std::string editor = "edit-only";  // "edit-only" or "composite"
  EditorConfig editor_cfg = EditorConfig::edit_only();
  AttributionConfig attribution;
  int n_edits = 10;
  std::uint64_t seed = 0;
  int jobs = 1;
  bool with_attribution = false;  // per-edit trace + modality diagnostics

  void validate() const;
  // resolves editor_cfg from the editor name, keeping explicit overrides
  void resolve_editor();
  std::string config_hash() const;
};

// Why an edit failed, bucketed by exit-code family.
enum class FailureKind { None, Config, Data, Numeric };

struct EditOutcome {
  int record_index = -1;
  FailureKind failure = FailureKind::None;
  std::string error;
  EditReport report;
  std::vector<CellResult> cells;
};

struct PipelineResult {
  std::string run_dir;
  MetricReport metrics;
  std::vector<EditOutcome> edits;
  int n_failed = 0;
  FailureKind worst_failure = FailureKind::None;
};

// Deterministic choice of which corpus records get edited.
std::vector<int> select_edit_records(int n_records, int n_edits, std::uint64_t seed);

PipelineResult run_pipeline(const PipelineConfig& cfg);

}  // namespace tblab
