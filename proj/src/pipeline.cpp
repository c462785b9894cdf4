#include "tblab/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <numeric>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "tblab/checkpoint.hpp"
#include "tblab/errors.hpp"
#include "tblab/forward.hpp"
#include "tblab/grid.hpp"
#include "tblab/report_io.hpp"
#include "tblab/rng.hpp"
#include "tblab/sampling.hpp"

namespace tblab {

namespace fs = std::filesystem;
using nlohmann::json;

void PipelineConfig::validate() const {
  if (corpus_path.empty()) throw ConfigError("pipeline: corpus path is empty");
  if (checkpoint_path.empty()) throw ConfigError("pipeline: checkpoint path is empty");
  if (out_dir.empty()) throw ConfigError("pipeline: output directory is empty");
  if (editor != "edit-only" && editor != "composite")
    throw ConfigError("pipeline: unknown editor \"" + editor +
                      "\" (expected edit-only or composite)");
  if (n_edits < 0) throw ConfigError("pipeline: n_edits must be >= 0");
  if (jobs < 1) throw ConfigError("pipeline: jobs must be >= 1");
  editor_cfg.validate();
  attribution.validate();
}

void PipelineConfig::resolve_editor() {
  editor_cfg = editor == "composite" ? EditorConfig::composite() : EditorConfig::edit_only();
}

std::string PipelineConfig::config_hash() const {
  std::ostringstream s;
  s << editor << '|' << editor_cfg.lambda1 << '|' << editor_cfg.lambda2 << '|'
    << editor_cfg.lambda3 << '|' << editor_cfg.lr << '|' << editor_cfg.max_steps << '|'
    << editor_cfg.convergence << '|' << editor_cfg.target_params << '|';
  for (LocalityTerm t : editor_cfg.loss_combination) s << locality_term_name(t) << ',';
  s << '|' << attribution.gamma << '|' << attribution.top_k << '|'
    << static_cast<int>(attribution.aggregation) << '|' << n_edits << '|' << seed << '|'
    << with_attribution;
  return hex64(fnv1a64(s.str()));
}

std::vector<int> select_edit_records(int n_records, int n_edits, std::uint64_t seed) {
  if (n_edits > n_records)
    throw DataError("requested " + std::to_string(n_edits) + " edits but the corpus has " +
                    std::to_string(n_records) + " records");
  std::vector<int> all(static_cast<std::size_t>(n_records));
  std::iota(all.begin(), all.end(), 0);
  Rng rng = Rng(seed).child("edit-select");
  rng.shuffle(all);
  all.resize(static_cast<std::size_t>(n_edits));
  std::sort(all.begin(), all.end());
  return all;
}

namespace {

FailureKind classify_failure(const std::exception& e) {
  if (dynamic_cast<const NumericError*>(&e)) return FailureKind::Numeric;
  if (dynamic_cast<const DataError*>(&e)) return FailureKind::Data;
  if (dynamic_cast<const ConfigError*>(&e)) return FailureKind::Config;
  return FailureKind::None;
}

const char* failure_name(FailureKind k) {
  switch (k) {
    case FailureKind::Config: return "config";
    case FailureKind::Data: return "data";
    case FailureKind::Numeric: return "numeric";
    default: return "none";
  }
}

const char* expectation_name(Expectation e) {
  switch (e) {
    case Expectation::EqualsTarget: return "equals-target";
    case Expectation::NotTarget: return "not-target";
    default: return "equals-pre-edit";
  }
}

std::string fresh_run_dir(const std::string& out_dir) {
  std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "run-%Y%m%d-%H%M%S", &tm);
  fs::create_directories(out_dir);
  std::string base = out_dir + "/" + stamp;
  std::string dir = base;
  for (int n = 2; fs::exists(dir); ++n) dir = base + "-" + std::to_string(n);
  fs::create_directory(dir);
  return dir;
}

std::string token_word(const Vocabulary& vocab, int id) {
  if (id < 0 || id >= vocab.size()) return "";
  return vocab.tokens[static_cast<std::size_t>(id)];
}

json cells_to_json(const std::vector<CellResult>& cells, const Vocabulary& vocab) {
  json arr = json::array();
  for (const CellResult& c : cells)
    arr.push_back(json{{"cell", c.cell_id},
                       {"class", metric_class_name(c.metric_class)},
                       {"canonical", c.canonical},
                       {"expectation", expectation_name(c.expectation)},
                       {"pre", token_word(vocab, c.pre_token)},
                       {"post", token_word(vocab, c.post_token)},
                       {"target", token_word(vocab, c.target_token)},
                       {"satisfied", c.satisfied},
                       {"consistent", c.consistent}});
  return arr;
}

std::uint64_t file_hash(const std::string& path) { return fnv1a64(read_text_file(path)); }

}  // namespace

PipelineResult run_pipeline(const PipelineConfig& cfg) {
  cfg.validate();
  if (!fs::exists(cfg.corpus_path)) throw DataError("corpus not found: " + cfg.corpus_path);
  if (!fs::exists(cfg.checkpoint_path))
    throw DataError("checkpoint not found: " + cfg.checkpoint_path);

  const std::uint64_t corpus_hash = file_hash(cfg.corpus_path);
  const std::uint64_t checkpoint_hash = file_hash(cfg.checkpoint_path);
  Corpus corpus = load_corpus(cfg.corpus_path);
  Parameters base = load_checkpoint(cfg.checkpoint_path);

  PipelineResult result;
  result.run_dir = fresh_run_dir(cfg.out_dir);
  const std::string cfg_hash = cfg.config_hash();
  ReportMeta meta{"tb-report-1", cfg_hash, cfg.seed, cfg.editor};

  std::vector<int> selected =
      select_edit_records(static_cast<int>(corpus.records.size()), cfg.n_edits, cfg.seed);
  result.edits.resize(selected.size());

  Rng run_rng(cfg.seed);
  std::vector<std::uint64_t> edit_seeds(selected.size());
  for (std::size_t k = 0; k < selected.size(); ++k)
    edit_seeds[k] = run_rng.child("edit", static_cast<std::uint64_t>(selected[k])).next_u64();

  struct EditDiagnostics {
    std::string path_json;
    std::string pre_series_csv;
    std::string post_series_csv;
    double kl_ratio_ci = 0.0;
    bool present = false;
  };
  std::vector<EditDiagnostics> diagnostics(selected.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      std::size_t k = next.fetch_add(1);
      if (k >= selected.size()) return;
      EditOutcome& out = result.edits[k];
      out.record_index = selected[k];
      const EditRecord& edit = corpus.records[static_cast<std::size_t>(selected[k])];
      try {
        EditTask task = make_edit_task(corpus, edit);
        AdversarialBatch batch = build_adversarial_batch(edit, corpus, edit_seeds[k]);
        EvalSuite suite = build_grid(edit, sample_sets(edit, corpus, edit_seeds[k]));
        auto [post, report] = apply_edit(base, task, batch, cfg.editor_cfg);
        out.report = std::move(report);
        out.cells = evaluate_suite(base, post, suite, corpus.vocab);
        if (cfg.with_attribution) {
          KeyTokenPath pre_path =
              extract_key_tokens(forward_with_trace(base, task.input), cfg.attribution);
          KeyTokenPath post_path =
              extract_key_tokens(forward_with_trace(post, task.input), cfg.attribution);
          std::vector<ModelInput> ci_inputs;
          for (const EvalCell& c : suite.cells)
            if (c.metric_class == MetricClass::CILoc && c.image)
              ci_inputs.push_back(input_for(corpus.vocab, c.question, &*c.image));
          EditDiagnostics& d = diagnostics[k];
          d.path_json = key_token_path_to_json(post_path, meta);
          d.pre_series_csv = modality_series_csv(modality_ratio(pre_path, base.config));
          d.post_series_csv = modality_series_csv(modality_ratio(post_path, base.config));
          d.kl_ratio_ci = kl_modality_ratio(base, post, ci_inputs);
          d.present = true;
        }
      } catch (const std::exception& e) {
        FailureKind kind = classify_failure(e);
        if (kind == FailureKind::None) throw;  // not one of ours: a real bug
        out.failure = kind;
        out.error = e.what();
      }
    }
  };
  std::size_t n_threads =
      std::min<std::size_t>(static_cast<std::size_t>(cfg.jobs), std::max<std::size_t>(selected.size(), 1));
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }

  std::vector<std::vector<CellResult>> per_edit;
  for (EditOutcome& out : result.edits) {
    if (out.failure == FailureKind::None) {
      per_edit.push_back(out.cells);
    } else {
      ++result.n_failed;
      if (result.worst_failure == FailureKind::None) result.worst_failure = out.failure;
    }
  }
  if (!per_edit.empty()) result.metrics = aggregate(per_edit);

  // ---- emit ----
  std::vector<std::string> files;
  auto emit = [&](const std::string& rel, const std::string& content) {
    write_text_file(result.run_dir + "/" + rel, content);
    files.push_back(rel);
  };

  json metrics_json = json::parse(metric_report_to_json(result.metrics, meta));
  if (per_edit.empty()) metrics_json["no_edits"] = true;
  emit("metrics.json", metrics_json.dump(2) + "\n");
  emit("metrics.csv", metric_reports_csv({{cfg.editor, result.metrics}}));

  fs::create_directory(result.run_dir + "/edits");
  for (std::size_t k = 0; k < result.edits.size(); ++k) {
    const EditOutcome& out = result.edits[k];
    char name[48];
    std::snprintf(name, sizeof name, "edits/edit-%03d.json", out.record_index);
    json j;
    j["meta"] = json{{"format", "tb-edit-1"},
                     {"config_hash", cfg_hash},
                     {"seed", edit_seeds[k]},
                     {"editor", cfg.editor}};
    j["record_index"] = out.record_index;
    if (out.failure != FailureKind::None) {
      j["failed"] = failure_name(out.failure);
      j["error"] = out.error;
    } else {
      j["report"] = json::parse(edit_report_to_json(out.report, meta));
      j["cells"] = cells_to_json(out.cells, corpus.vocab);
      if (diagnostics[k].present) j["kl_modality_ratio_ci"] = diagnostics[k].kl_ratio_ci;
    }
    emit(name, j.dump(2) + "\n");
    if (diagnostics[k].present) {
      char pname[64];
      std::snprintf(pname, sizeof pname, "edits/edit-%03d-path.json", out.record_index);
      emit(pname, diagnostics[k].path_json);
      std::snprintf(pname, sizeof pname, "edits/edit-%03d-modality-pre.csv", out.record_index);
      emit(pname, diagnostics[k].pre_series_csv);
      std::snprintf(pname, sizeof pname, "edits/edit-%03d-modality-post.csv",
                    out.record_index);
      emit(pname, diagnostics[k].post_series_csv);
    }
  }

  json manifest;
  manifest["format"] = "tb-manifest-1";
  std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", &tm);
  manifest["created"] = stamp;
  manifest["config_hash"] = cfg_hash;
  manifest["seed"] = cfg.seed;
  manifest["editor"] = cfg.editor;
  manifest["n_edits_requested"] = cfg.n_edits;
  manifest["n_edits_evaluated"] = static_cast<int>(per_edit.size());
  manifest["n_failed"] = result.n_failed;
  manifest["corpus"] = json{{"path", cfg.corpus_path}, {"hash", hex64(corpus_hash)}};
  manifest["checkpoint"] =
      json{{"path", cfg.checkpoint_path}, {"hash", hex64(checkpoint_hash)}};
  if (per_edit.empty()) manifest["no_edits"] = true;
  manifest["files"] = files;
  write_text_file(result.run_dir + "/manifest.json", manifest.dump(2) + "\n");

  return result;
}

}  // namespace tblab
