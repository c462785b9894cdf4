// Command-line front end: corpus generation, base training, edit-and-evaluate
// pipelines, attribution traces, mask sweeps, and report merging.
//
// Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
// failure.

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tblab/attribution.hpp"
#include "tblab/checkpoint.hpp"
#include "tblab/corpus.hpp"
#include "tblab/errors.hpp"
#include "tblab/forward.hpp"
#include "tblab/grid.hpp"
#include "tblab/kv_config.hpp"
#include "tblab/pipeline.hpp"
#include "tblab/report_io.hpp"
#include "tblab/train.hpp"

namespace fs = std::filesystem;
using namespace tblab;

namespace {

// File values fill in whatever the command line left at its default.
struct Layered {
  CLI::App* cmd;
  const KvConfig* file;

  template <typename T>
  void fill(const std::string& flag, const std::string& key, T& value) const {
    if (!file || cmd->count(flag) > 0 || !file->has(key)) return;
    if constexpr (std::is_same_v<T, int>)
      value = file->get_int(key, value);
    else if constexpr (std::is_same_v<T, double>)
      value = file->get_double(key, value);
    else if constexpr (std::is_same_v<T, bool>)
      value = file->get_bool(key, value);
    else if constexpr (std::is_same_v<T, std::uint64_t>)
      value = static_cast<std::uint64_t>(file->get_int(key, static_cast<int>(value)));
    else
      value = file->get_str(key, value);
  }
};

void refuse_overwrite(const std::string& path, bool force) {
  if (!force && fs::exists(path))
    throw ConfigError(path + " exists; pass --force to overwrite");
}

AttributionConfig attribution_from(const Layered& lay, double gamma, int top_k,
                                   std::string aggregation) {
  lay.fill("--gamma", "attribution.gamma", gamma);
  lay.fill("--top-k", "attribution.top_k", top_k);
  lay.fill("--aggregation", "attribution.aggregation", aggregation);
  AttributionConfig ac;
  ac.gamma = gamma;
  ac.top_k = top_k;
  if (aggregation == "sum")
    ac.aggregation = ScoreAggregation::Sum;
  else if (aggregation == "mean")
    ac.aggregation = ScoreAggregation::Mean;
  else
    throw ConfigError("attribution aggregation must be sum or mean, got " + aggregation);
  ac.validate();
  return ac;
}

int run(int argc, char** argv) {
  CLI::App app{"desk-scale multimodal editing laboratory"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path, "tb-cfg-1 key-value config file");

  // ---- gen-data ----
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic corpus file");
  std::string gen_out;
  WorldConfig world;
  bool gen_force = false;
  gen->add_option("--out", gen_out, "corpus output path (JSON lines)")->required();
  gen->add_option("--records", world.n_records, "number of edit records");
  gen->add_option("--objects", world.n_objects, "number of world objects");
  gen->add_option("--attributes", world.n_attributes, "attributes per object");
  gen->add_option("--values", world.n_values, "values per attribute");
  gen->add_option("--seed", world.seed, "world seed");
  gen->add_flag("--force", gen_force, "overwrite an existing file");

  // ---- train ----
  auto* train = app.add_subcommand("train", "train the base model on a corpus");
  std::string train_corpus, train_out;
  TrainConfig tc;
  ModelConfig mc;
  bool train_force = false;
  train->add_option("--corpus", train_corpus, "corpus path")->required();
  train->add_option("--out", train_out, "checkpoint output path")->required();
  train->add_option("--epochs", tc.epochs, "epoch budget");
  train->add_option("--seed", tc.seed, "training seed");
  train->add_option("--lr", tc.lr, "learning rate");
  train->add_option("--batch-size", tc.batch_size, "batch size");
  train->add_option("--no-image-fraction", tc.no_image_fraction,
                    "fraction of samples trained with the image withheld");
  train->add_option("--target-accuracy", tc.target_accuracy, "early-stop accuracy");
  train->add_flag("--force", train_force, "overwrite an existing checkpoint");

  // ---- pipeline ----
  auto* pipe = app.add_subcommand("pipeline", "edit records one at a time and score the grid");
  PipelineConfig pc;
  std::string pipe_mode = "single";
  double pipe_gamma = AttributionConfig{}.gamma;
  int pipe_topk = AttributionConfig{}.top_k;
  std::string pipe_agg = "sum";
  pipe->add_option("--corpus", pc.corpus_path, "corpus path")->required();
  pipe->add_option("--checkpoint", pc.checkpoint_path, "base checkpoint path")->required();
  pipe->add_option("--out", pc.out_dir, "parent directory for the run directory")->required();
  pipe->add_option("--editor", pc.editor, "edit-only or composite");
  pipe->add_option("--edits", pc.n_edits, "how many records to edit");
  pipe->add_option("--seed", pc.seed, "edit selection / sampling seed");
  pipe->add_option("--jobs", pc.jobs, "parallel edit workers");
  pipe->add_flag("--attribution", pc.with_attribution, "emit per-edit trace diagnostics");
  pipe->add_option("--mode", pipe_mode, "editing mode (only \"single\" is supported)");
  pipe->add_option("--gamma", pipe_gamma, "attribution acceptance threshold");
  pipe->add_option("--top-k", pipe_topk, "attention sources expanded per key token");
  pipe->add_option("--aggregation", pipe_agg, "modality score aggregation: sum or mean");
  double lam1 = -1, lam2 = -1, lam3 = -1, elr = -1, econv = -1;
  int esteps = -1;
  std::string etarget;
  pipe->add_option("--lambda1", lam1, "edit loss weight override");
  pipe->add_option("--lambda2", lam2, "language-preserving KL weight override");
  pipe->add_option("--lambda3", lam3, "adversarial KL weight override");
  pipe->add_option("--editor-lr", elr, "editor learning rate override");
  pipe->add_option("--editor-steps", esteps, "editor step budget override");
  pipe->add_option("--convergence", econv, "editor convergence threshold override");
  pipe->add_option("--target-params", etarget, "edited tensors: D, V, DV, or a name list");

  // ---- trace ----
  auto* trace = app.add_subcommand("trace", "key-token provenance for one record");
  std::string tr_corpus, tr_checkpoint, tr_out;
  int tr_record = 0;
  bool tr_no_image = false;
  double tr_gamma = AttributionConfig{}.gamma;
  int tr_topk = AttributionConfig{}.top_k;
  std::string tr_agg = "sum";
  trace->add_option("--corpus", tr_corpus, "corpus path")->required();
  trace->add_option("--checkpoint", tr_checkpoint, "checkpoint path")->required();
  trace->add_option("--record", tr_record, "corpus record index");
  trace->add_flag("--no-image", tr_no_image, "trace the question without its image");
  trace->add_option("--gamma", tr_gamma, "acceptance threshold");
  trace->add_option("--top-k", tr_topk, "attention sources expanded per key token");
  trace->add_option("--aggregation", tr_agg, "sum or mean");
  trace->add_option("--out", tr_out, "output path (default stdout)");

  // ---- mask-sweep ----
  auto* mask = app.add_subcommand("mask-sweep", "retained accuracy when masking non-key tokens");
  std::string mk_corpus, mk_checkpoint, mk_out;
  int mk_samples = 100;
  std::uint64_t mk_seed = 0;
  double mk_gamma = AttributionConfig{}.gamma;
  int mk_topk = AttributionConfig{}.top_k;
  std::string mk_agg = "sum";
  mask->add_option("--corpus", mk_corpus, "corpus path")->required();
  mask->add_option("--checkpoint", mk_checkpoint, "checkpoint path")->required();
  mask->add_option("--samples", mk_samples, "how many corpus records to score");
  mask->add_option("--seed", mk_seed, "sample selection seed");
  mask->add_option("--gamma", mk_gamma, "acceptance threshold");
  mask->add_option("--top-k", mk_topk, "attention sources expanded per key token");
  mask->add_option("--aggregation", mk_agg, "sum or mean");
  mask->add_option("--out", mk_out, "output path (default stdout)");

  // ---- report ----
  auto* rep = app.add_subcommand("report", "merge two pipeline metric files into one table");
  std::string rep_a, rep_b, rep_label_a = "a", rep_label_b = "b", rep_out;
  rep->add_option("--a", rep_a, "first metrics.json")->required();
  rep->add_option("--b", rep_b, "second metrics.json")->required();
  rep->add_option("--label-a", rep_label_a, "row label for the first file");
  rep->add_option("--label-b", rep_label_b, "row label for the second file");
  rep->add_option("--out", rep_out, "output path (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return 2;
  }

  KvConfig file_cfg;
  bool have_file = false;
  if (!config_path.empty()) {
    file_cfg = KvConfig::parse_file(config_path);
    have_file = true;
  }

  if (gen->parsed()) {
    Layered lay{gen, have_file ? &file_cfg : nullptr};
    lay.fill("--records", "world.records", world.n_records);
    lay.fill("--objects", "world.objects", world.n_objects);
    lay.fill("--attributes", "world.attributes", world.n_attributes);
    lay.fill("--values", "world.values", world.n_values);
    lay.fill("--seed", "world.seed", world.seed);
    refuse_overwrite(gen_out, gen_force);
    Corpus corpus = generate_corpus(world);
    save_corpus(corpus, gen_out);
    std::printf("wrote %zu records, vocabulary %d, to %s\n", corpus.records.size(),
                corpus.vocab.size(), gen_out.c_str());
    return 0;
  }

  if (train->parsed()) {
    Layered lay{train, have_file ? &file_cfg : nullptr};
    lay.fill("--epochs", "train.epochs", tc.epochs);
    lay.fill("--seed", "train.seed", tc.seed);
    lay.fill("--lr", "train.lr", tc.lr);
    lay.fill("--batch-size", "train.batch_size", tc.batch_size);
    lay.fill("--no-image-fraction", "train.no_image_fraction", tc.no_image_fraction);
    lay.fill("--target-accuracy", "train.target_accuracy", tc.target_accuracy);
    if (have_file) {
      mc.n_layers = file_cfg.get_int("model.n_layers", mc.n_layers);
      mc.d_model = file_cfg.get_int("model.d_model", mc.d_model);
      mc.n_heads = file_cfg.get_int("model.n_heads", mc.n_heads);
      mc.d_ff = file_cfg.get_int("model.d_ff", mc.d_ff);
      mc.n_image_tokens = file_cfg.get_int("model.n_image_tokens", mc.n_image_tokens);
      mc.max_text_tokens = file_cfg.get_int("model.max_text_tokens", mc.max_text_tokens);
      mc.seed = static_cast<std::uint64_t>(
          file_cfg.get_int("model.seed", static_cast<int>(mc.seed)));
    }
    refuse_overwrite(train_out, train_force);
    Corpus corpus = load_corpus(train_corpus);
    mc.vocab_size = corpus.vocab.size();
    if (!corpus.records.empty())
      mc.d_image = static_cast<int>(corpus.records.front().image.features.size());
    TrainResult result = train_base(corpus, mc, tc);
    save_checkpoint(result.params, train_out);
    std::printf("accuracy %.4f after %d epochs (%s), text-prior follow %.3f, wrote %s\n",
                result.report.accuracy, result.report.epochs_run,
                result.report.converged ? "met target" : "budget exhausted",
                result.report.no_image_follow, train_out.c_str());
    return 0;
  }

  if (pipe->parsed()) {
    if (pipe_mode != "single")
      throw ConfigError("editing mode \"" + pipe_mode +
                        "\" is not supported: records are edited one at a time, each on a "
                        "fresh copy of the base model (mode must be \"single\")");
    Layered lay{pipe, have_file ? &file_cfg : nullptr};
    lay.fill("--editor", "editor.name", pc.editor);
    lay.fill("--edits", "pipeline.edits", pc.n_edits);
    lay.fill("--seed", "pipeline.seed", pc.seed);
    lay.fill("--jobs", "pipeline.jobs", pc.jobs);
    lay.fill("--attribution", "pipeline.attribution", pc.with_attribution);
    pc.resolve_editor();
    if (have_file) {
      pc.editor_cfg.lr = file_cfg.get_double("editor.lr", pc.editor_cfg.lr);
      pc.editor_cfg.max_steps = file_cfg.get_int("editor.max_steps", pc.editor_cfg.max_steps);
      pc.editor_cfg.convergence =
          file_cfg.get_double("editor.convergence", pc.editor_cfg.convergence);
      pc.editor_cfg.target_params =
          file_cfg.get_str("editor.target_params", pc.editor_cfg.target_params);
      pc.editor_cfg.lambda1 = file_cfg.get_double("editor.lambda1", pc.editor_cfg.lambda1);
      pc.editor_cfg.lambda2 = file_cfg.get_double("editor.lambda2", pc.editor_cfg.lambda2);
      pc.editor_cfg.lambda3 = file_cfg.get_double("editor.lambda3", pc.editor_cfg.lambda3);
    }
    if (lam1 >= 0) pc.editor_cfg.lambda1 = lam1;
    if (lam2 >= 0) pc.editor_cfg.lambda2 = lam2;
    if (lam3 >= 0) pc.editor_cfg.lambda3 = lam3;
    if (elr > 0) pc.editor_cfg.lr = elr;
    if (esteps >= 0) pc.editor_cfg.max_steps = esteps;
    if (econv >= 0) pc.editor_cfg.convergence = econv;
    if (!etarget.empty()) pc.editor_cfg.target_params = etarget;
    pc.attribution = attribution_from(lay, pipe_gamma, pipe_topk, pipe_agg);

    PipelineResult result = run_pipeline(pc);
    int evaluated = static_cast<int>(result.edits.size()) - result.n_failed;
    std::printf("run directory %s\n", result.run_dir.c_str());
    if (evaluated == 0 && result.n_failed == 0) {
      std::printf("no edits requested; empty report written\n");
    } else {
      std::printf("%d edits evaluated, %d failed\n", evaluated, result.n_failed);
      std::printf("Rel %.3f  T-Loc %.3f  I-Loc %.3f  mm-locality %.3f  mean-nine %.3f\n",
                  result.metrics.rel, result.metrics.t_loc, result.metrics.i_loc,
                  result.metrics.mm_locality_mean(), result.metrics.mean_nine);
    }
    switch (result.worst_failure) {
      case FailureKind::Config: return 2;
      case FailureKind::Data: return 3;
      case FailureKind::Numeric: return 4;
      default: return 0;
    }
  }

  if (trace->parsed()) {
    Layered lay{trace, have_file ? &file_cfg : nullptr};
    AttributionConfig ac = attribution_from(lay, tr_gamma, tr_topk, tr_agg);
    Corpus corpus = load_corpus(tr_corpus);
    Parameters params = load_checkpoint(tr_checkpoint);
    if (tr_record < 0 || tr_record >= static_cast<int>(corpus.records.size()))
      throw DataError("record index " + std::to_string(tr_record) + " out of range (corpus has " +
                      std::to_string(corpus.records.size()) + ")");
    const EditRecord& rec = corpus.records[static_cast<std::size_t>(tr_record)];
    ModelInput input =
        input_for(corpus.vocab, rec.question, tr_no_image ? nullptr : &rec.image);
    KeyTokenPath path = extract_key_tokens(forward_with_trace(params, input), ac);
    ReportMeta meta{"tb-trace-1", model_config_hash(params.config), params.config.seed, ""};
    std::string payload = key_token_path_to_json(path, meta);
    if (tr_out.empty())
      std::fputs(payload.c_str(), stdout);
    else
      write_text_file(tr_out, payload);
    return 0;
  }

  if (mask->parsed()) {
    Layered lay{mask, have_file ? &file_cfg : nullptr};
    AttributionConfig ac = attribution_from(lay, mk_gamma, mk_topk, mk_agg);
    Corpus corpus = load_corpus(mk_corpus);
    Parameters params = load_checkpoint(mk_checkpoint);
    std::vector<int> picks =
        select_edit_records(static_cast<int>(corpus.records.size()), mk_samples, mk_seed);
    std::vector<ModelInput> inputs;
    std::vector<int> answers;
    std::vector<KeyTokenPath> paths;
    for (int idx : picks) {
      const EditRecord& rec = corpus.records[static_cast<std::size_t>(idx)];
      inputs.push_back(input_for(corpus.vocab, rec.question, &rec.image));
      answers.push_back(corpus.vocab.id_of(rec.answer));
      paths.push_back(extract_key_tokens(forward_with_trace(params, inputs.back()), ac));
    }
    // suffix ranges [L-3, L], [L-7, L], ... clipped at zero
    std::vector<int> starts;
    for (int span = 3; ; span += 4) {
      int start = params.config.n_layers - span;
      starts.push_back(start > 0 ? start : 0);
      if (start <= 0) break;
    }
    MaskSweepTable table = mask_sweep(params, inputs, answers, paths, starts);
    std::string payload = mask_sweep_csv(table);
    if (mk_out.empty())
      std::fputs(payload.c_str(), stdout);
    else
      write_text_file(mk_out, payload);
    return 0;
  }

  if (rep->parsed()) {
    ReportMeta meta_a, meta_b;
    MetricReport a = metric_report_from_json(read_text_file(rep_a), &meta_a);
    MetricReport b = metric_report_from_json(read_text_file(rep_b), &meta_b);
    if (rep_label_a == "a" && !meta_a.editor.empty()) rep_label_a = meta_a.editor;
    if (rep_label_b == "b" && !meta_b.editor.empty()) rep_label_b = meta_b.editor;
    std::string payload = metric_reports_csv({{rep_label_a, a}, {rep_label_b, b}});
    if (rep_out.empty())
      std::fputs(payload.c_str(), stdout);
    else
      write_text_file(rep_out, payload);
    return 0;
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 3;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return 4;
  }
}
