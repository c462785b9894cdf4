#pragma once

#include <string>
#include <vector>

#include "tblab/attribution.hpp"
#include "tblab/editor.hpp"
#include "tblab/metrics.hpp"

namespace tblab {

// Stamped into every emitted file so any output can be traced back to the
// run that produced it. Deliberately no timestamps: identical configs must
// produce byte-identical payloads.
struct ReportMeta {
  std::string format;       // e.g. "tb-report-1"
  std::string config_hash;  // hash of the run configuration
  std::uint64_t seed = 0;
  std::string editor;       // "edit-only", "composite", "" when not edit-bound
};

// The nine headline cells in table column order, then the Mean column.
extern const char* const kNineColumns[9];

std::string metric_report_to_json(const MetricReport& report, const ReportMeta& meta);
MetricReport metric_report_from_json(const std::string& text, ReportMeta* meta_out);

// One table row per labeled report: label, nine cell columns, Mean.
std::string metric_reports_csv(const std::vector<std::pair<std::string, MetricReport>>& rows);

std::string edit_report_to_json(const EditReport& report, const ReportMeta& meta);

// Provenance DAG rooted at the output position: every examined entry with its
// score, accepted flag, and the accepted same-layer token that enqueued it.
std::string key_token_path_to_json(const KeyTokenPath& path, const ReportMeta& meta);

// One row per layer: layer index, ratio, infinite flag. Plot-ready long form.
std::string modality_series_csv(const ModalityRatioSeries& series);

// One row per suffix range start.
std::string mask_sweep_csv(const MaskSweepTable& table);

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

}  // namespace tblab
