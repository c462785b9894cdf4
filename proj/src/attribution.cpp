#include "tblab/attribution.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <set>

#include "tblab/errors.hpp"
#include "tblab/stats.hpp"

namespace tblab {

const char* score_aggregation_name(ScoreAggregation a) {
  return a == ScoreAggregation::Sum ? "sum" : "mean";
}

void AttributionConfig::validate() const {
  if (!std::isfinite(gamma)) throw ConfigError("attribution: gamma must be finite");
  if (top_k < 1) throw ConfigError("attribution: top_k must be >= 1");
}

std::vector<int> LayerKeyTokens::accepted_positions() const {
  std::vector<int> out;
  for (const KeyTokenEntry& e : examined)
    if (e.accepted) out.push_back(e.position);
  return out;
}

std::vector<int> KeyTokenPath::union_accepted(int start_layer) const {
  std::set<int> keep;
  for (std::size_t l = static_cast<std::size_t>(std::max(start_layer, 0));
       l < layers.size(); ++l)
    for (const KeyTokenEntry& e : layers[l].examined)
      if (e.accepted) keep.insert(e.position);
  return {keep.begin(), keep.end()};
}

static double l2_diff(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

static double score_raw(const double* h, const double* a, const double* m,
                        const double* h_prev, std::size_t n) {
  double to_attn = l2_diff(h, a, n);
  double denom = l2_diff(h, h_prev, n) + l2_diff(h, m, n) + to_attn;
  if (denom == 0.0)
    throw DegenerateState("contribution score: state equals all its components");
  double nh = 0.0, na = 0.0, dot = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    nh += h[i] * h[i];
    na += a[i] * a[i];
    dot += h[i] * a[i];
  }
  if (nh == 0.0 || na == 0.0)
    throw DegenerateState("contribution score: zero vector in the cosine term");
  return to_attn / denom + dot / std::sqrt(nh * na);
}

double distance_score(const std::vector<double>& h, const std::vector<double>& a,
                      const std::vector<double>& m, const std::vector<double>& h_prev) {
  if (h.size() != a.size() || h.size() != m.size() || h.size() != h_prev.size())
    throw ConfigError("contribution score: component dimensions differ");
  if (h.empty()) throw ConfigError("contribution score: empty vectors");
  return score_raw(h.data(), a.data(), m.data(), h_prev.data(), h.size());
}

KeyTokenPath extract_key_tokens(const ForwardTrace& trace, const AttributionConfig& cfg) {
  cfg.validate();
  if (trace.layers.empty()) throw DataError("key-token extraction: trace has no layers");
  const int n_layers = static_cast<int>(trace.layers.size());
  const int n = static_cast<int>(trace.layers[0].h_new.rows());
  const std::size_t d = trace.layers[0].h_new.cols();

  KeyTokenPath path;
  path.config = cfg;
  path.n_positions = n;
  path.layers.resize(static_cast<std::size_t>(n_layers));

  std::vector<int> seeds = {n - 1};  // the answer is read at the last position
  for (int l = n_layers - 1; l >= 0; --l) {
    const LayerTrace& lt = trace.layers[static_cast<std::size_t>(l)];
    LayerKeyTokens& out = path.layers[static_cast<std::size_t>(l)];
    std::deque<std::pair<int, int>> queue;  // position, expanded_from
    std::set<int> visited;
    for (int s : seeds)
      if (visited.insert(s).second) queue.emplace_back(s, -1);

    std::vector<int> accepted;
    while (!queue.empty()) {
      auto [pos, from] = queue.front();
      queue.pop_front();
      std::size_t p = static_cast<std::size_t>(pos);
      KeyTokenEntry e;
      e.position = pos;
      e.expanded_from = from;
      e.score = score_raw(lt.h_new.row(p), lt.attn_out.row(p), lt.mlp_out.row(p),
                          lt.h_prev.row(p), d);
      e.accepted = e.score >= cfg.gamma;
      if (e.accepted) {
        accepted.push_back(pos);
        out.accepted_scores.push_back(e.score);
        // strongest attention sources of this token join the queue
        std::vector<int> order(static_cast<std::size_t>(n));
        for (int j = 0; j < n; ++j) order[static_cast<std::size_t>(j)] = j;
        const double* row = lt.attn.row(p);
        std::sort(order.begin(), order.end(), [&](int x, int y) {
          if (row[x] != row[y]) return row[x] > row[y];
          return x < y;
        });
        int take = std::min(cfg.top_k, n);
        for (int k = 0; k < take; ++k)
          if (visited.insert(order[static_cast<std::size_t>(k)]).second)
            queue.emplace_back(order[static_cast<std::size_t>(k)], pos);
      }
      out.examined.push_back(std::move(e));
    }
    seeds = std::move(accepted);  // hand the layer's key tokens down
  }
  return path;
}

ModalityRatioSeries modality_ratio(const KeyTokenPath& path, const ModelConfig& cfg) {
  ModalityRatioSeries series;
  series.score.reserve(path.layers.size());
  series.infinite.reserve(path.layers.size());
  for (const LayerKeyTokens& layer : path.layers) {
    double img = 0.0, txt = 0.0;
    int n_img = 0, n_txt = 0;
    for (const KeyTokenEntry& e : layer.examined) {
      if (!e.accepted) continue;
      if (is_image_position(e.position, cfg)) {
        img += e.score;
        ++n_img;
      } else {
        txt += e.score;
        ++n_txt;
      }
    }
    if (path.config.aggregation == ScoreAggregation::Mean) {
      img = n_img > 0 ? img / n_img : 0.0;
      txt = n_txt > 0 ? txt / n_txt : 0.0;
    }
    if (txt == 0.0) {
      bool has_image_mass = img != 0.0;
      series.score.push_back(has_image_mass
                                 ? std::numeric_limits<double>::infinity()
                                 : 0.0);
      series.infinite.push_back(has_image_mass);
    } else {
      series.score.push_back(img / txt);
      series.infinite.push_back(false);
    }
  }
  return series;
}

MaskSweepTable mask_sweep(const Parameters& params, const std::vector<ModelInput>& inputs,
                          const std::vector<int>& answers,
                          const std::vector<KeyTokenPath>& paths,
                          const std::vector<int>& start_layers) {
  if (inputs.empty()) throw DataError("mask sweep: no inputs");
  if (inputs.size() != answers.size() || inputs.size() != paths.size())
    throw ConfigError("mask sweep: inputs, answers, and paths must align");
  const int n_layers = params.config.n_layers;

  MaskSweepTable table;
  int base_hits = 0;
  for (std::size_t i = 0; i < inputs.size(); ++i)
    if (argmax_token(forward_probs(params, inputs[i])) == answers[i]) ++base_hits;
  table.base_accuracy = static_cast<double>(base_hits) / static_cast<double>(inputs.size());
  if (table.base_accuracy == 0.0)
    throw DegenerateState("mask sweep: unmasked accuracy is zero, fractions undefined");

  for (int start : start_layers) {
    if (start < 0 || start > n_layers)
      throw ConfigError("mask sweep: start layer outside [0, n_layers]");
    int hits = 0;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      const KeyTokenPath& path = paths[i];
      std::vector<int> keep = path.union_accepted(start);
      std::set<int> kept(keep.begin(), keep.end());
      kept.insert(path.n_positions - 1);  // the output position always survives
      MaskPlan plan = MaskPlan::none(n_layers);
      for (int l = start; l < n_layers; ++l)
        for (int p = 0; p + 1 < path.n_positions; ++p)
          if (!kept.count(p)) plan.suppress[static_cast<std::size_t>(l)].push_back(p);
      if (argmax_token(forward_masked(params, inputs[i], plan)) == answers[i]) ++hits;
    }
    MaskSweepRow row;
    row.start_layer = start;
    row.masked_accuracy = static_cast<double>(hits) / static_cast<double>(inputs.size());
    row.retained = row.masked_accuracy / table.base_accuracy;
    table.rows.push_back(row);
  }
  return table;
}

double kl_modality_ratio(const Parameters& before, const Parameters& after,
                         const std::vector<ModelInput>& inputs) {
  if (!(before.config == after.config))
    throw ConfigError("modality shift: snapshots use different model configs");
  if (inputs.empty()) throw DataError("modality shift: no inputs");
  const int m = before.config.n_image_tokens;

  auto modality_means = [&](const ForwardTrace& tr) {
    const int n = static_cast<int>(tr.probs.rows());
    const std::size_t v = tr.probs.cols();
    std::vector<double> img(v, 0.0), txt(v, 0.0);
    for (int p = 0; p < n; ++p) {
      const double* row = tr.probs.row(static_cast<std::size_t>(p));
      double* acc = p < m ? img.data() : txt.data();
      for (std::size_t k = 0; k < v; ++k) acc[k] += row[k];
    }
    for (auto& x : img) x /= m;
    for (auto& x : txt) x /= n - m;
    return std::make_pair(std::move(img), std::move(txt));
  };

  double sum = 0.0;
  for (const ModelInput& in : inputs) {
    auto [img_b, txt_b] = modality_means(forward_with_trace(before, in));
    auto [img_a, txt_a] = modality_means(forward_with_trace(after, in));
    double kl_img = kl_divergence(img_b, img_a);
    double kl_txt = kl_divergence(txt_b, txt_a);
    if (kl_img < 1e-12 && kl_txt < 1e-12)
      sum += 1.0;  // no-op edit: neither story moved
    else
      sum += kl_img / std::max(kl_txt, 1e-12);
  }
  return sum / static_cast<double>(inputs.size());
}

}  // namespace tblab
