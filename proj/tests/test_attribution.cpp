#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "support.hpp"
#include "tblab/attribution.hpp"
#include "tblab/corpus.hpp"
#include "tblab/editor.hpp"
#include "tblab/errors.hpp"
#include "tblab/forward.hpp"
#include "tblab/reference.hpp"
#include "tblab/train.hpp"

using namespace tblab;

static ModelInput random_input(const ModelConfig& cfg, Rng& rng, bool with_image) {
  ModelInput in;
  in.text.resize(static_cast<std::size_t>(cfg.max_text_tokens));
  for (auto& t : in.text)
    t = static_cast<int>(rng.uniform_index(static_cast<std::size_t>(cfg.vocab_size)));
  if (with_image) {
    std::vector<double> f(static_cast<std::size_t>(cfg.d_image));
    for (auto& x : f) x = rng.normal(0.0, 1.0);
    in.image = ImageInput::of_features(std::move(f));
  } else {
    in.image = ImageInput::absent();
  }
  return in;
}

TEST_CASE("contribution score follows the hand-computed geometry") {
  // ratio 1/(1.5+1.5+1) = 0.25, cosine 1
  CHECK(distance_score({2, 0}, {1, 0}, {0.5, 0}, {0.5, 0}) ==
        doctest::Approx(1.25).epsilon(1e-12));
  // orthogonal attention with all three distances equal: 1/3 + 0
  double r = std::sqrt(2.0);
  CHECK(distance_score({1, 0}, {0, 1}, {1, r}, {1, -r}) ==
        doctest::Approx(1.0 / 3.0).epsilon(1e-9));
  // state equal to its attention component: zero ratio, cosine one
  CHECK(distance_score({3, 4}, {3, 4}, {1, 1}, {0, 2}) ==
        doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("contribution score rejects degenerate geometry and bad shapes") {
  CHECK_THROWS_AS(distance_score({1, 1}, {1, 1}, {1, 1}, {1, 1}), DegenerateState);
  CHECK_THROWS_AS(distance_score({0, 0}, {1, 0}, {2, 0}, {3, 0}), DegenerateState);
  CHECK_THROWS_AS(distance_score({1, 0}, {0, 0}, {2, 0}, {3, 0}), DegenerateState);
  CHECK_THROWS_AS(distance_score({1, 0}, {1, 0, 0}, {2, 0}, {3, 0}), ConfigError);
  CHECK_THROWS_AS(distance_score({}, {}, {}, {}), ConfigError);
}

TEST_CASE("contribution score is scale invariant and stays in its range") {
  Rng rng(41);
  for (int rep = 0; rep < 200; ++rep) {
    std::size_t n = 2 + rng.uniform_index(6);
    auto vec = [&] {
      std::vector<double> v(n);
      for (auto& x : v) x = rng.normal(0.0, 1.0);
      return v;
    };
    std::vector<double> h = vec(), a = vec(), m = vec(), hp = vec();
    double s = distance_score(h, a, m, hp);
    CHECK(s >= -1.0);
    CHECK(s <= 2.0);
    double c = 0.5 + rng.uniform() * 3.0;
    auto scaled = [&](std::vector<double> v) {
      for (auto& x : v) x *= c;
      return v;
    };
    CHECK(distance_score(scaled(h), scaled(a), scaled(m), scaled(hp)) ==
          doctest::Approx(s).epsilon(1e-9));
  }
}

TEST_CASE("a threshold above the score range keeps only the seed") {
  ModelConfig cfg = test::tiny_config(51);
  Parameters p = Parameters::init(cfg);
  Rng rng(8);
  ForwardTrace tr = forward_with_trace(p, random_input(cfg, rng, true));
  AttributionConfig acfg;
  acfg.gamma = 2.01;
  KeyTokenPath path = extract_key_tokens(tr, acfg);

  REQUIRE(static_cast<int>(path.layers.size()) == cfg.n_layers);
  const LayerKeyTokens& top = path.layers.back();
  REQUIRE(top.examined.size() == 1);
  CHECK(top.examined[0].position == path.n_positions - 1);
  CHECK_FALSE(top.examined[0].accepted);
  CHECK(top.examined[0].expanded_from == -1);
  for (const LayerKeyTokens& layer : path.layers) {
    CHECK(layer.accepted_scores.empty());
    if (&layer != &top) CHECK(layer.examined.empty());
  }
  CHECK(path.union_accepted(0).empty());
}

TEST_CASE("accept-everything settings saturate every layer") {
  ModelConfig cfg = test::tiny_config(52);
  Parameters p = Parameters::init(cfg);
  Rng rng(9);
  ForwardTrace tr = forward_with_trace(p, random_input(cfg, rng, true));
  int n = cfg.n_image_tokens + cfg.max_text_tokens;
  AttributionConfig acfg;
  acfg.gamma = -1.0;
  acfg.top_k = n;
  KeyTokenPath path = extract_key_tokens(tr, acfg);

  for (const LayerKeyTokens& layer : path.layers) {
    CHECK(static_cast<int>(layer.examined.size()) == n);
    CHECK(static_cast<int>(layer.accepted_scores.size()) == n);
    std::set<int> seen;
    for (const KeyTokenEntry& e : layer.examined) {
      CHECK(e.accepted);
      seen.insert(e.position);
    }
    CHECK(static_cast<int>(seen.size()) == n);  // visited set: each position once
  }
  std::vector<int> all = path.union_accepted(0);
  CHECK(static_cast<int>(all.size()) == n);
}

TEST_CASE("provenance edges point at earlier accepted tokens of the same layer") {
  ModelConfig cfg = test::tiny_config(53);
  Parameters p = Parameters::init(cfg);
  Rng rng(10);
  ForwardTrace tr = forward_with_trace(p, random_input(cfg, rng, true));
  AttributionConfig acfg;
  acfg.gamma = 0.3;
  acfg.top_k = 3;
  KeyTokenPath path = extract_key_tokens(tr, acfg);

  bool any_expansion = false;
  for (const LayerKeyTokens& layer : path.layers) {
    std::set<int> seen_accepted;
    for (const KeyTokenEntry& e : layer.examined) {
      if (e.expanded_from >= 0) {
        any_expansion = true;
        CHECK(seen_accepted.count(e.expanded_from) == 1);
      }
      if (e.accepted) seen_accepted.insert(e.position);
    }
    // each position examined at most once per layer
    std::set<int> positions;
    for (const KeyTokenEntry& e : layer.examined) positions.insert(e.position);
    CHECK(positions.size() == layer.examined.size());
  }
  CHECK(any_expansion);  // gamma 0.3 accepts enough to expand somewhere
}

TEST_CASE("raising the threshold or shrinking the fan-out never adds tokens") {
  ModelConfig cfg = test::tiny_config(54);
  Parameters p = Parameters::init(cfg);
  Rng rng(11);
  ForwardTrace tr = forward_with_trace(p, random_input(cfg, rng, true));

  auto accepted_sets = [&](double gamma, int k) {
    AttributionConfig acfg;
    acfg.gamma = gamma;
    acfg.top_k = k;
    KeyTokenPath path = extract_key_tokens(tr, acfg);
    std::vector<std::set<int>> sets;
    for (const LayerKeyTokens& layer : path.layers) {
      auto v = layer.accepted_positions();
      sets.emplace_back(v.begin(), v.end());
    }
    return sets;
  };
  auto subset = [](const std::vector<std::set<int>>& small,
                   const std::vector<std::set<int>>& big) {
    for (std::size_t l = 0; l < small.size(); ++l)
      for (int pos : small[l])
        if (!big[l].count(pos)) return false;
    return true;
  };

  for (double lo : {-1.0, 0.2, 0.6}) {
    CHECK(subset(accepted_sets(lo + 0.3, 3), accepted_sets(lo, 3)));
  }
  CHECK(subset(accepted_sets(0.4, 1), accepted_sets(0.4, 2)));
  CHECK(subset(accepted_sets(0.4, 2), accepted_sets(0.4, 5)));
}

TEST_CASE("config validation rejects what the walk cannot use") {
  ModelConfig cfg = test::tiny_config(55);
  Parameters p = Parameters::init(cfg);
  Rng rng(12);
  ForwardTrace tr = forward_with_trace(p, random_input(cfg, rng, true));
  AttributionConfig acfg;
  acfg.top_k = 0;
  CHECK_THROWS_AS(extract_key_tokens(tr, acfg), ConfigError);
  acfg.top_k = 1;
  acfg.gamma = std::nan("");
  CHECK_THROWS_AS(extract_key_tokens(tr, acfg), ConfigError);
}

static KeyTokenEntry make_entry(int pos, double score) {
  KeyTokenEntry e;
  e.position = pos;
  e.score = score;
  e.accepted = true;
  return e;
}

TEST_CASE("modality ratio arithmetic, sentinels, and aggregation modes") {
  ModelConfig cfg;  // default: 8 image positions
  KeyTokenPath path;
  path.config.aggregation = ScoreAggregation::Sum;
  path.layers.resize(4);
  // one image token 0.6, one text token 0.3 -> 2.0
  path.layers[0].examined = {make_entry(2, 0.6), make_entry(10, 0.3)};
  // text only -> 0
  path.layers[1].examined = {make_entry(9, 0.4), make_entry(12, 0.2)};
  // image only -> infinity with its flag
  path.layers[2].examined = {make_entry(1, 0.7)};
  // nothing accepted -> 0 without the flag

  ModalityRatioSeries series = modality_ratio(path, cfg);
  REQUIRE(series.size() == 4);
  CHECK(series.score[0] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK_FALSE(series.infinite[0]);
  CHECK(series.score[1] == 0.0);
  CHECK_FALSE(series.infinite[1]);
  CHECK(std::isinf(series.score[2]));
  CHECK(series.infinite[2]);
  CHECK(series.score[3] == 0.0);
  CHECK_FALSE(series.infinite[3]);

  // mean mode rebalances uneven counts: two image tokens of 0.3 vs one text 0.3
  KeyTokenPath mean_path;
  mean_path.config.aggregation = ScoreAggregation::Mean;
  mean_path.layers.resize(1);
  mean_path.layers[0].examined = {make_entry(0, 0.3), make_entry(1, 0.3),
                                  make_entry(11, 0.3)};
  CHECK(modality_ratio(mean_path, cfg).score[0] == doctest::Approx(1.0).epsilon(1e-12));
  mean_path.config.aggregation = ScoreAggregation::Sum;
  CHECK(modality_ratio(mean_path, cfg).score[0] == doctest::Approx(2.0).epsilon(1e-12));
}

// The trained-model cases share one small fitted lab.
static WorldConfig small_world() {
  WorldConfig w;
  w.n_objects = 6;
  w.n_records = 160;
  w.seed = 7;
  return w;
}

namespace {
struct Lab {
  Corpus corpus;
  TrainResult base;
};
}  // namespace

static const Lab& lab() {
  static Lab shared = [] {
    Lab l{generate_corpus(small_world()), {}};
    ModelConfig m;
    m.n_layers = 2;
    m.d_model = 32;
    m.n_heads = 2;
    m.d_ff = 64;
    m.vocab_size = l.corpus.vocab.size();
    m.n_image_tokens = 4;
    m.max_text_tokens = 6;
    m.d_image = static_cast<int>(l.corpus.records.front().image.features.size());
    m.seed = 11;
    TrainConfig tc;
    tc.epochs = 120;
    tc.target_accuracy = 0.99;
    tc.seed = 3;
    l.base = train_base(l.corpus, m, tc);
    return l;
  }();
  return shared;
}

TEST_CASE("mask sweep is exact on the empty range and collapses when all is hidden") {
  const Lab& l = lab();
  const int L = l.base.params.config.n_layers;
  std::vector<ModelInput> inputs;
  std::vector<int> answers;
  std::vector<KeyTokenPath> paths;
  AttributionConfig acfg;
  for (int i = 0; i < 60; ++i) {
    const EditRecord& r = l.corpus.records[static_cast<std::size_t>(i)];
    ModelInput in = input_for(l.corpus.vocab, r.question, &r.image);
    paths.push_back(extract_key_tokens(forward_with_trace(l.base.params, in), acfg));
    inputs.push_back(std::move(in));
    answers.push_back(l.corpus.vocab.id_of(r.answer));
  }

  MaskSweepTable table = mask_sweep(l.base.params, inputs, answers, paths, {L, L - 1, 0});
  REQUIRE(table.rows.size() == 3);
  CHECK(table.base_accuracy >= 0.95);
  CHECK(table.rows[0].retained == 1.0);  // empty suffix masks nothing

  // keep-nothing paths: only the output position survives anywhere
  std::vector<KeyTokenPath> hollow = paths;
  for (auto& path : hollow)
    for (auto& layer : path.layers) {
      layer.examined.clear();
      layer.accepted_scores.clear();
    }
  MaskSweepTable collapsed = mask_sweep(l.base.params, inputs, answers, hollow, {0});
  double chance = 1.0 / l.corpus.vocab.answer_vocab_size();
  CHECK(collapsed.rows[0].masked_accuracy <= chance + 0.05);
  CHECK(collapsed.rows[0].retained < table.rows[0].retained);

  CHECK_THROWS_AS(mask_sweep(l.base.params, inputs, answers, paths, {L + 1}), ConfigError);
  CHECK_THROWS_AS(mask_sweep(l.base.params, std::vector<ModelInput>{},
                            std::vector<int>{}, std::vector<KeyTokenPath>{},
                            std::vector<int>{0}),
                  DataError);
}

TEST_CASE("key tokens at the top layer keep most of the accuracy when the rest is masked") {
  const Lab& l = lab();
  const int L = l.base.params.config.n_layers;
  std::vector<ModelInput> inputs;
  std::vector<int> answers;
  std::vector<KeyTokenPath> paths;
  AttributionConfig acfg;
  for (int i = 60; i < 140; ++i) {
    const EditRecord& r = l.corpus.records[static_cast<std::size_t>(i)];
    ModelInput in = input_for(l.corpus.vocab, r.question, &r.image);
    paths.push_back(extract_key_tokens(forward_with_trace(l.base.params, in), acfg));
    inputs.push_back(std::move(in));
    answers.push_back(l.corpus.vocab.id_of(r.answer));
  }
  MaskSweepTable table = mask_sweep(l.base.params, inputs, answers, paths, {L - 1});
  CHECK(table.rows[0].retained >= 0.8);
}

TEST_CASE("modality shift ratio is one for a no-op edit and for image-free inputs") {
  const Lab& l = lab();
  std::vector<ModelInput> inputs;
  for (int i = 0; i < 6; ++i) {
    const EditRecord& r = l.corpus.records[static_cast<std::size_t>(i)];
    inputs.push_back(input_for(l.corpus.vocab, r.question, &r.image));
  }
  CHECK(kl_modality_ratio(l.base.params, l.base.params, inputs) == 1.0);

  // an image-pathway edit cannot move any story on absent-image inputs
  const EditRecord& edit = l.corpus.records[8];
  EditTask task = make_edit_task(l.corpus, edit);
  AdversarialBatch batch = build_adversarial_batch(edit, l.corpus, 13);
  EditorConfig vcfg = EditorConfig::edit_only();
  vcfg.target_params = "V";
  vcfg.max_steps = 40;
  vcfg.convergence = 1e-9;
  auto [post, report] = apply_edit(l.base.params, task, batch, vcfg);
  (void)report;
  std::vector<ModelInput> no_image = {*batch.ni, *batch.unrelated_text};
  CHECK(kl_modality_ratio(l.base.params, post, no_image) == 1.0);

  // a language-pathway edit moves the text story on a real input
  auto [post_d, rep_d] =
      apply_edit(l.base.params, task, batch, EditorConfig::edit_only());
  (void)rep_d;
  double r = kl_modality_ratio(l.base.params, post_d, {task.input});
  CHECK(r > 0.0);
  CHECK(std::isfinite(r));

  Parameters odd = Parameters::init(test::tiny_config(3));
  CHECK_THROWS_AS(kl_modality_ratio(l.base.params, odd, inputs), ConfigError);
  CHECK_THROWS_AS(kl_modality_ratio(l.base.params, l.base.params,
                                    std::vector<ModelInput>{}),
                  DataError);
}

TEST_CASE("full-scale reference rows keep their published shape") {
  double sum = 0.0;
  for (double v : reference::kNineCellRow) sum += v;
  CHECK(std::fabs(sum / 9.0 - reference::kNineCellMean) < 1e-4);
  CHECK(reference::kMaskTop4Retained > 0.9);
  CHECK(reference::kMaskAllRetained < 0.01);
  // image story moved an order of magnitude less than the text story
  CHECK(reference::kKlImageShift / reference::kKlTextShift < 0.15);
}
