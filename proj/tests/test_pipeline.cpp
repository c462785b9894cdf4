#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "tblab/checkpoint.hpp"
#include "tblab/corpus.hpp"
#include "tblab/errors.hpp"
#include "tblab/kv_config.hpp"
#include "tblab/pipeline.hpp"
#include "tblab/report_io.hpp"
#include "tblab/train.hpp"

using namespace tblab;
namespace fs = std::filesystem;

static std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------- kv config

TEST_CASE("config requires the format line first") {
  CHECK_THROWS_AS(KvConfig::parse_string("a.b = 1\n"), ConfigError);
  CHECK_THROWS_AS(KvConfig::parse_string("format = tb-cfg-2\na = 1\n"), ConfigError);
  CHECK_THROWS_AS(KvConfig::parse_string(""), ConfigError);
  // comments and blanks may precede it
  KvConfig c = KvConfig::parse_string("# hi\n\nformat = tb-cfg-1\na = 1\n");
  CHECK(c.get_int("a", 0) == 1);
}

TEST_CASE("config parses dotted keys, comments, and spaced values") {
  KvConfig c = KvConfig::parse_string(
      "format = tb-cfg-1\n"
      "# world block\n"
      "world.records = 200\n"
      "editor.lr = 0.01\n"
      "editor.target_params = W_out,image_proj\n"
      "pipeline.attribution = yes\n");
  CHECK(c.get_int("world.records", 0) == 200);
  CHECK(c.get_double("editor.lr", 0.0) == doctest::Approx(0.01));
  CHECK(c.get_str("editor.target_params", "") == "W_out,image_proj");
  CHECK(c.get_bool("pipeline.attribution", false));
  CHECK(c.has("world.records"));
  CHECK_FALSE(c.has("world.objects"));
}

TEST_CASE("config rejects duplicates and malformed lines") {
  CHECK_THROWS_AS(KvConfig::parse_string("format = tb-cfg-1\na = 1\na = 2\n"), ConfigError);
  CHECK_THROWS_AS(KvConfig::parse_string("format = tb-cfg-1\njust words\n"), ConfigError);
}

TEST_CASE("typed getters fall back when absent and reject garbage") {
  KvConfig c = KvConfig::parse_string("format = tb-cfg-1\nn = 12x\nf = 1.5.2\nb = maybe\n");
  CHECK(c.get_int("missing", 7) == 7);
  CHECK(c.get_double("missing", 2.5) == doctest::Approx(2.5));
  CHECK(c.get_bool("missing", true));
  CHECK(c.get_str("missing", "dflt") == "dflt");
  CHECK_THROWS_AS(c.get_int("n", 0), ConfigError);
  CHECK_THROWS_AS(c.get_double("f", 0.0), ConfigError);
  CHECK_THROWS_AS(c.get_bool("b", false), ConfigError);
}

TEST_CASE("explicit overrides replace file values") {
  KvConfig c = KvConfig::parse_string("format = tb-cfg-1\na = 1\n");
  c.override_value("a", "9");
  c.override_value("fresh", "3");
  CHECK(c.get_int("a", 0) == 9);
  CHECK(c.get_int("fresh", 0) == 3);
}

// ---------------------------------------------------------------- report io

static MetricReport sample_report() {
  MetricReport r;
  r.n_edits = 3;
  r.rel = 1.0;
  r.t_gen = 2.0 / 3.0;
  r.i_gen = 1.0 / 3.0;
  r.t_loc = 1.0;
  r.i_loc = 2.0 / 3.0;
  r.ri_loc = 1.0 / 3.0;
  r.ni_loc = 0.0;
  r.ci_loc = 1.0 / 3.0;
  const char* ids[] = {"T1I1", "T1I2", "T1I3", "T1I4", "T2I1", "T2I2", "T2I3", "T2I4",
                       "T3I1", "T3I2", "T3I3", "T3I4", "T4I1", "T4I2", "T4I3", "T4I4"};
  double v = 0.0;
  for (const char* id : ids) {
    r.per_pair[id] = std::fmod(v, 1.0);
    r.consistency[id] = 1.0 - std::fmod(v, 1.0);
    v += 1.0 / 3.0;
  }
  double sum = 0.0;
  for (const char* col : kNineColumns) sum += r.per_pair.at(col);
  r.mean_nine = sum / 9.0;
  return r;
}

TEST_CASE("metric report survives a json round trip") {
  MetricReport r = sample_report();
  ReportMeta meta{"tb-report-1", "cafe1234", 42, "composite"};
  std::string text = metric_report_to_json(r, meta);
  ReportMeta back_meta;
  MetricReport back = metric_report_from_json(text, &back_meta);
  CHECK(back.n_edits == r.n_edits);
  CHECK(back.rel == doctest::Approx(r.rel).epsilon(1e-12));
  CHECK(back.ni_loc == doctest::Approx(r.ni_loc).epsilon(1e-12));
  CHECK(back.mean_nine == doctest::Approx(r.mean_nine).epsilon(1e-12));
  CHECK(back.per_pair == r.per_pair);
  CHECK(back.consistency == r.consistency);
  CHECK(back_meta.format == meta.format);
  CHECK(back_meta.config_hash == meta.config_hash);
  CHECK(back_meta.seed == meta.seed);
  CHECK(back_meta.editor == meta.editor);
}

TEST_CASE("metric report parser flags broken input as data errors") {
  CHECK_THROWS_AS(metric_report_from_json("not json at all", nullptr), DataError);
  CHECK_THROWS_AS(metric_report_from_json("{\"meta\": {}}", nullptr), DataError);
}

TEST_CASE("metrics csv holds one labeled row per report and a recomputable mean") {
  MetricReport r = sample_report();
  std::string csv = metric_reports_csv({{"edit-only", r}, {"composite", r}});
  std::istringstream lines(csv);
  std::string header;
  std::getline(lines, header);
  std::string expect = "label";
  for (const char* col : kNineColumns) expect += std::string(",") + col;
  expect += ",Mean";
  CHECK(header == expect);

  // external-recompute check: average the nine printed cells, compare to the
  // printed Mean
  std::string row;
  int rows = 0;
  while (std::getline(lines, row)) {
    ++rows;
    std::istringstream cells(row);
    std::string cell;
    std::getline(cells, cell, ',');
    CHECK((cell == "edit-only" || cell == "composite"));
    double sum = 0.0;
    for (int i = 0; i < 9; ++i) {
      std::getline(cells, cell, ',');
      sum += std::stod(cell);
    }
    std::getline(cells, cell, ',');
    CHECK(std::abs(sum / 9.0 - std::stod(cell)) < 1e-9);
  }
  CHECK(rows == 2);
}

TEST_CASE("modality csv spells out infinities") {
  ModalityRatioSeries s;
  s.score = {0.5, 0.0, 2.25};
  s.infinite = {false, true, false};
  std::string csv = modality_series_csv(s);
  std::istringstream lines(csv);
  std::string line;
  std::getline(lines, line);
  CHECK(line == "layer,score,infinite");
  std::getline(lines, line);
  CHECK(line.rfind("0,0.5", 0) == 0);
  std::getline(lines, line);
  CHECK(line.find("inf") != std::string::npos);
  CHECK(line.back() == '1');
}

TEST_CASE("mask sweep csv has one row per range") {
  MaskSweepTable t;
  t.base_accuracy = 0.9;
  t.rows = {{2, 0.85, 0.85 / 0.9}, {0, 0.5, 0.5 / 0.9}};
  std::string csv = mask_sweep_csv(t);
  std::istringstream lines(csv);
  std::string line;
  std::getline(lines, line);
  CHECK(line == "start_layer,masked_accuracy,retained");
  int rows = 0;
  while (std::getline(lines, line)) ++rows;
  CHECK(rows == 2);
}

TEST_CASE("text files round trip and missing reads are data errors") {
  fs::path p = fs::temp_directory_path() / "tblab_report_io_probe.txt";
  write_text_file(p.string(), "alpha\nbeta\n");
  CHECK(read_text_file(p.string()) == "alpha\nbeta\n");
  fs::remove(p);
  CHECK_THROWS_AS(read_text_file(p.string()), DataError);
}

// ----------------------------------------------------------------- pipeline

// One small trained world shared by the pipeline cases.
struct Lab {
  fs::path dir;
  std::string corpus_path;
  std::string checkpoint_path;
  Corpus corpus;
};

static const Lab& lab() {
  static Lab l = [] {
    Lab x;
    x.dir = fs::temp_directory_path() / "tblab_pipeline_lab";
    fs::remove_all(x.dir);
    fs::create_directories(x.dir);
    WorldConfig w;
    w.n_objects = 6;
    w.n_values = 4;
    w.n_records = 60;
    w.seed = 3;
    x.corpus = generate_corpus(w);
    x.corpus_path = (x.dir / "corpus.jsonl").string();
    save_corpus(x.corpus, x.corpus_path);
    ModelConfig mc;
    mc.vocab_size = x.corpus.vocab.size();
    mc.d_image = w.feature_dim();
    TrainConfig tc;
    tc.epochs = 40;
    TrainResult r = train_base(x.corpus, mc, tc);
    x.checkpoint_path = (x.dir / "base.json").string();
    save_checkpoint(r.params, x.checkpoint_path);
    return x;
  }();
  return l;
}

static PipelineConfig lab_config(const std::string& sub) {
  PipelineConfig pc;
  pc.corpus_path = lab().corpus_path;
  pc.checkpoint_path = lab().checkpoint_path;
  pc.out_dir = (lab().dir / sub).string();
  pc.n_edits = 2;
  pc.seed = 5;
  pc.editor_cfg.max_steps = 400;
  return pc;
}

TEST_CASE("edit selection is deterministic, sorted, in range, and bounded") {
  std::vector<int> a = select_edit_records(100, 10, 42);
  std::vector<int> b = select_edit_records(100, 10, 42);
  CHECK(a == b);
  CHECK(std::is_sorted(a.begin(), a.end()));
  CHECK(std::set<int>(a.begin(), a.end()).size() == a.size());
  for (int i : a) {
    CHECK(i >= 0);
    CHECK(i < 100);
  }
  CHECK(select_edit_records(100, 10, 43) != a);
  CHECK_THROWS_AS(select_edit_records(5, 6, 1), DataError);
}

TEST_CASE("config hash tracks the run recipe, not the file paths") {
  PipelineConfig a = lab_config("h1");
  PipelineConfig b = a;
  b.corpus_path = "elsewhere.jsonl";
  b.out_dir = "other";
  CHECK(a.config_hash() == b.config_hash());
  b = a;
  b.editor = "composite";
  b.resolve_editor();
  CHECK(a.config_hash() != b.config_hash());
  b = a;
  b.seed = 6;
  CHECK(a.config_hash() != b.config_hash());
  b = a;
  b.n_edits = 3;
  CHECK(a.config_hash() != b.config_hash());
}

TEST_CASE("pipeline validation rejects nonsense up front") {
  PipelineConfig pc = lab_config("v");
  pc.editor = "sequential";
  CHECK_THROWS_AS(pc.validate(), ConfigError);
  pc = lab_config("v");
  pc.n_edits = -1;
  CHECK_THROWS_AS(pc.validate(), ConfigError);
  pc = lab_config("v");
  pc.jobs = 0;
  CHECK_THROWS_AS(pc.validate(), ConfigError);
  pc = lab_config("v");
  pc.corpus_path = "";
  CHECK_THROWS_AS(pc.validate(), ConfigError);
}

TEST_CASE("missing inputs surface as data errors") {
  PipelineConfig pc = lab_config("m");
  pc.corpus_path = (lab().dir / "absent.jsonl").string();
  CHECK_THROWS_AS(run_pipeline(pc), DataError);
  pc = lab_config("m");
  pc.checkpoint_path = (lab().dir / "absent.json").string();
  CHECK_THROWS_AS(run_pipeline(pc), DataError);
}

TEST_CASE("zero edits produce an explicitly empty report") {
  PipelineConfig pc = lab_config("zero");
  pc.n_edits = 0;
  PipelineResult r = run_pipeline(pc);
  CHECK(r.edits.empty());
  CHECK(r.worst_failure == FailureKind::None);
  nlohmann::json m = nlohmann::json::parse(slurp(r.run_dir + "/metrics.json"));
  CHECK(m.value("no_edits", false));
  CHECK(m["n_edits"].get<int>() == 0);
  nlohmann::json man = nlohmann::json::parse(slurp(r.run_dir + "/manifest.json"));
  CHECK(man.value("no_edits", false));
  CHECK(man["n_edits_requested"].get<int>() == 0);
}

TEST_CASE("identical configs write byte-identical payloads under fresh run dirs") {
  PipelineConfig pc = lab_config("rep");
  pc.with_attribution = true;
  std::string ck_before = slurp(pc.checkpoint_path);
  PipelineResult r1 = run_pipeline(pc);
  PipelineResult r2 = run_pipeline(pc);
  CHECK(r1.run_dir != r2.run_dir);
  CHECK(r1.n_failed == 0);

  // every payload file identical; the manifest is the only timestamped file
  nlohmann::json man = nlohmann::json::parse(slurp(r1.run_dir + "/manifest.json"));
  REQUIRE(man.contains("files"));
  for (const auto& rel : man["files"]) {
    std::string name = rel.get<std::string>();
    CHECK_MESSAGE(slurp(r1.run_dir + "/" + name) == slurp(r2.run_dir + "/" + name), name);
  }

  // the base checkpoint was read, never written
  CHECK(slurp(pc.checkpoint_path) == ck_before);
}

TEST_CASE("worker count changes the schedule, not the bytes") {
  PipelineConfig pc = lab_config("jobs");
  pc.n_edits = 4;
  PipelineResult r1 = run_pipeline(pc);
  pc.jobs = 4;
  PipelineResult r4 = run_pipeline(pc);
  CHECK(slurp(r1.run_dir + "/metrics.json") == slurp(r4.run_dir + "/metrics.json"));
  CHECK(slurp(r1.run_dir + "/metrics.csv") == slurp(r4.run_dir + "/metrics.csv"));
}

TEST_CASE("mean in the emitted csv matches a recompute from its own cells") {
  PipelineConfig pc = lab_config("csv");
  pc.n_edits = 3;
  PipelineResult r = run_pipeline(pc);
  std::istringstream lines(slurp(r.run_dir + "/metrics.csv"));
  std::string header, row;
  std::getline(lines, header);
  std::getline(lines, row);
  std::istringstream cells(row);
  std::string cell;
  std::getline(cells, cell, ',');  // label
  double sum = 0.0;
  for (int i = 0; i < 9; ++i) {
    std::getline(cells, cell, ',');
    sum += std::stod(cell);
  }
  std::getline(cells, cell, ',');
  CHECK(std::abs(sum / 9.0 - std::stod(cell)) < 1e-9);
  CHECK(std::abs(sum / 9.0 - r.metrics.mean_nine) < 1e-9);
}

TEST_CASE("editors on the same seed edit the same records") {
  PipelineConfig pc = lab_config("cmp");
  PipelineResult eo = run_pipeline(pc);
  pc.editor = "composite";
  pc.resolve_editor();
  pc.editor_cfg.max_steps = 400;
  PipelineResult co = run_pipeline(pc);
  REQUIRE(eo.edits.size() == co.edits.size());
  for (std::size_t i = 0; i < eo.edits.size(); ++i)
    CHECK(eo.edits[i].record_index == co.edits[i].record_index);
  // identical suites: same cell ids in the same order
  REQUIRE(!eo.edits.empty());
  REQUIRE(eo.edits[0].cells.size() == co.edits[0].cells.size());
  for (std::size_t i = 0; i < eo.edits[0].cells.size(); ++i)
    CHECK(eo.edits[0].cells[i].cell_id == co.edits[0].cells[i].cell_id);
}

TEST_CASE("attribution artifacts appear only when asked for") {
  PipelineConfig pc = lab_config("attr");
  pc.n_edits = 1;
  PipelineResult off = run_pipeline(pc);
  pc.with_attribution = true;
  PipelineResult on = run_pipeline(pc);
  auto count = [](const std::string& dir, const char* suffix) {
    int n = 0;
    for (const auto& e : fs::directory_iterator(dir + "/edits"))
      if (e.path().string().ends_with(suffix)) ++n;
    return n;
  };
  CHECK(count(off.run_dir, "-path.json") == 0);
  CHECK(count(on.run_dir, "-path.json") == 1);
  CHECK(count(on.run_dir, "-modality-pre.csv") == 1);
  CHECK(count(on.run_dir, "-modality-post.csv") == 1);
}
