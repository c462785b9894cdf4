#include "tblab/report_io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "tblab/errors.hpp"

namespace tblab {

using nlohmann::json;

const char* const kNineColumns[9] = {"T4I4", "T3I3", "T3I1", "T1I2", "T1I3",
                                     "T1I4", "T2I1", "T2I2", "T2I4"};

namespace {

json meta_to_json(const ReportMeta& meta) {
  json j{{"format", meta.format}, {"config_hash", meta.config_hash}, {"seed", meta.seed}};
  if (!meta.editor.empty()) j["editor"] = meta.editor;
  return j;
}

ReportMeta meta_from_json(const json& j) {
  ReportMeta meta;
  meta.format = j.value("format", "");
  meta.config_hash = j.value("config_hash", "");
  meta.seed = j.value("seed", std::uint64_t{0});
  meta.editor = j.value("editor", "");
  return meta;
}

// fixed cell format so equal numbers always print identically; 12 decimals
// keeps a mean recomputed from the printed cells within 1e-9 of the printed
// mean
std::string cell(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12f", v);
  return buf;
}

}  // namespace

std::string metric_report_to_json(const MetricReport& report, const ReportMeta& meta) {
  json j;
  j["meta"] = meta_to_json(meta);
  j["n_edits"] = report.n_edits;
  j["metrics"] = json{{"rel", report.rel},       {"t_gen", report.t_gen},
                      {"i_gen", report.i_gen},   {"t_loc", report.t_loc},
                      {"i_loc", report.i_loc},   {"ri_loc", report.ri_loc},
                      {"ni_loc", report.ni_loc}, {"ci_loc", report.ci_loc},
                      {"mean_nine", report.mean_nine}};
  j["per_pair"] = report.per_pair;
  j["consistency"] = report.consistency;
  return j.dump(2) + "\n";
}

MetricReport metric_report_from_json(const std::string& text, ReportMeta* meta_out) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw DataError(std::string("bad report JSON: ") + e.what());
  }
  if (!j.contains("metrics") || !j.contains("per_pair"))
    throw DataError("report JSON lacks metrics/per_pair");
  MetricReport r;
  r.n_edits = j.value("n_edits", 0);
  const json& m = j["metrics"];
  r.rel = m.value("rel", 0.0);
  r.t_gen = m.value("t_gen", 0.0);
  r.i_gen = m.value("i_gen", 0.0);
  r.t_loc = m.value("t_loc", 0.0);
  r.i_loc = m.value("i_loc", 0.0);
  r.ri_loc = m.value("ri_loc", 0.0);
  r.ni_loc = m.value("ni_loc", 0.0);
  r.ci_loc = m.value("ci_loc", 0.0);
  r.mean_nine = m.value("mean_nine", 0.0);
  for (auto& [k, v] : j["per_pair"].items()) r.per_pair[k] = v.get<double>();
  if (j.contains("consistency"))
    for (auto& [k, v] : j["consistency"].items()) r.consistency[k] = v.get<double>();
  if (meta_out) *meta_out = j.contains("meta") ? meta_from_json(j["meta"]) : ReportMeta{};
  return r;
}

std::string metric_reports_csv(const std::vector<std::pair<std::string, MetricReport>>& rows) {
  std::ostringstream out;
  out << "label";
  for (const char* c : kNineColumns) out << "," << c;
  out << ",Mean\n";
  for (const auto& [label, r] : rows) {
    out << label;
    for (const char* c : kNineColumns) {
      auto it = r.per_pair.find(c);
      out << "," << (it == r.per_pair.end() ? "" : cell(it->second));
    }
    out << "," << cell(r.mean_nine) << "\n";
  }
  return out.str();
}

std::string edit_report_to_json(const EditReport& report, const ReportMeta& meta) {
  json j;
  j["meta"] = meta_to_json(meta);
  j["steps"] = report.steps;
  j["converged"] = report.converged;
  j["edit_loss"] = report.edit_loss;
  j["base_locality"] = report.base_locality;
  j["mm_locality"] = report.mm_locality;
  j["delta_norms"] = report.delta_norms;
  return j.dump(2) + "\n";
}

std::string key_token_path_to_json(const KeyTokenPath& path, const ReportMeta& meta) {
  json j;
  j["meta"] = meta_to_json(meta);
  j["gamma"] = path.config.gamma;
  j["top_k"] = path.config.top_k;
  j["n_positions"] = path.n_positions;
  j["root"] = path.n_positions - 1;
  json layers = json::array();
  for (std::size_t l = 0; l < path.layers.size(); ++l) {
    json entries = json::array();
    for (const KeyTokenEntry& e : path.layers[l].examined)
      entries.push_back(json{{"position", e.position},
                             {"score", e.score},
                             {"accepted", e.accepted},
                             {"expanded_from", e.expanded_from}});
    layers.push_back(json{{"layer", l}, {"examined", entries}});
  }
  j["layers"] = layers;
  return j.dump(2) + "\n";
}

std::string modality_series_csv(const ModalityRatioSeries& series) {
  std::ostringstream out;
  out << "layer,score,infinite\n";
  for (std::size_t l = 0; l < series.score.size(); ++l)
    out << l << "," << (series.infinite[l] ? "inf" : cell(series.score[l])) << ","
        << (series.infinite[l] ? 1 : 0) << "\n";
  return out.str();
}

std::string mask_sweep_csv(const MaskSweepTable& table) {
  std::ostringstream out;
  out << "start_layer,masked_accuracy,retained\n";
  for (const MaskSweepRow& r : table.rows)
    out << r.start_layer << "," << cell(r.masked_accuracy) << "," << cell(r.retained) << "\n";
  return out.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write file: " + path);
  out << content;
  if (!out) throw DataError("write failed: " + path);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace tblab
