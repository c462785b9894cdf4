#include "tblab/parameters.hpp"

#include <cmath>
#include <sstream>

#include "tblab/errors.hpp"
#include "tblab/rng.hpp"

namespace tblab {

Parameters Parameters::allocate(const ModelConfig& cfg) {
  cfg.validate();
  Parameters p;
  p.config = cfg;
  std::size_t d = static_cast<std::size_t>(cfg.d_model);
  std::size_t v = static_cast<std::size_t>(cfg.vocab_size);
  std::size_t n = static_cast<std::size_t>(cfg.seq_len());
  std::size_t m = static_cast<std::size_t>(cfg.n_image_tokens);
  std::size_t ff = static_cast<std::size_t>(cfg.d_ff);
  std::size_t di = static_cast<std::size_t>(cfg.d_image);

  p.text_embed = Tensor::zeros({v, d});
  p.pos_embed = Tensor::zeros({n, d});
  p.null_image = Tensor::zeros({d});
  p.image_proj = Tensor::zeros({m * d, di});
  p.layers.resize(static_cast<std::size_t>(cfg.n_layers));
  for (auto& l : p.layers) {
    l.attn.wq = Tensor::zeros({d, d});
    l.attn.wk = Tensor::zeros({d, d});
    l.attn.wv = Tensor::zeros({d, d});
    l.attn.wo = Tensor::zeros({d, d});
    l.mlp.w1 = Tensor::zeros({ff, d});
    l.mlp.w2 = Tensor::zeros({d, ff});
  }
  p.out_proj = Tensor::zeros({v, d});
  return p;
}

Parameters Parameters::init(const ModelConfig& cfg) {
  Parameters p = allocate(cfg);
  Rng rng(cfg.seed ^ 0x7b1fa3c5d2e90814ull);
  double emb_std = 0.05;
  double proj_std = 0.05;
  // residual-branch outputs scaled down so depth does not blow up the stream
  double branch_std = 0.05 / std::sqrt(2.0 * cfg.n_layers);
  p.for_each([&](const std::string& name, Tensor& t) {
    double std_dev = proj_std;
    if (name.find("wo") != std::string::npos || name.find("w2") != std::string::npos)
      std_dev = branch_std;
    else if (name.rfind("embed.", 0) == 0)
      std_dev = emb_std;
    for (double& x : t.data) x = rng.normal(0.0, std_dev);
  });
  return p;
}

Parameters Parameters::zeros_like(const Parameters& other) {
  Parameters p = other;
  p.for_each([](const std::string&, Tensor& t) { t.fill(0.0); });
  return p;
}

template <typename P, typename Fn>
static void walk(P& p, const Fn& fn) {
  fn("embed.text", p.text_embed);
  fn("embed.pos", p.pos_embed);
  fn("embed.null_image", p.null_image);
  fn("image_proj", p.image_proj);
  for (std::size_t i = 0; i < p.layers.size(); ++i) {
    std::string base = "layers." + std::to_string(i) + ".";
    fn(base + "attn.wq", p.layers[i].attn.wq);
    fn(base + "attn.wk", p.layers[i].attn.wk);
    fn(base + "attn.wv", p.layers[i].attn.wv);
    fn(base + "attn.wo", p.layers[i].attn.wo);
    fn(base + "mlp.w1", p.layers[i].mlp.w1);
    fn(base + "mlp.w2", p.layers[i].mlp.w2);
  }
  fn("head.out", p.out_proj);
}

void Parameters::for_each(const std::function<void(const std::string&, Tensor&)>& fn) {
  walk(*this, fn);
}

void Parameters::for_each(
    const std::function<void(const std::string&, const Tensor&)>& fn) const {
  walk(*this, fn);
}

Tensor* Parameters::find(const std::string& name) {
  Tensor* hit = nullptr;
  for_each([&](const std::string& n, Tensor& t) {
    if (n == name) hit = &t;
  });
  return hit;
}

bool Parameters::finite() const {
  bool ok = true;
  for_each([&](const std::string&, const Tensor& t) { ok = ok && t.finite(); });
  return ok;
}

bool Parameters::same_shapes(const Parameters& o) const {
  if (layers.size() != o.layers.size()) return false;
  bool ok = true;
  const Parameters* other = &o;
  std::vector<const Tensor*> mine, theirs;
  for_each([&](const std::string&, const Tensor& t) { mine.push_back(&t); });
  other->for_each([&](const std::string&, const Tensor& t) { theirs.push_back(&t); });
  if (mine.size() != theirs.size()) return false;
  for (std::size_t i = 0; i < mine.size(); ++i)
    ok = ok && mine[i]->same_shape(*theirs[i]);
  return ok;
}

bool Parameters::bit_equal(const Parameters& o) const {
  if (!same_shapes(o)) return false;
  std::vector<const Tensor*> mine, theirs;
  for_each([&](const std::string&, const Tensor& t) { mine.push_back(&t); });
  o.for_each([&](const std::string&, const Tensor& t) { theirs.push_back(&t); });
  for (std::size_t i = 0; i < mine.size(); ++i)
    if (mine[i]->data != theirs[i]->data) return false;
  return true;
}

std::vector<std::string> resolve_target_params(const std::string& selector,
                                               const ModelConfig& cfg) {
  std::vector<std::string> names;
  auto add_mlp_top3 = [&] {
    int lo = cfg.n_layers > 3 ? cfg.n_layers - 3 : 0;
    for (int i = lo; i < cfg.n_layers; ++i) {
      names.push_back("layers." + std::to_string(i) + ".mlp.w1");
      names.push_back("layers." + std::to_string(i) + ".mlp.w2");
    }
  };
  if (selector == "D") {
    add_mlp_top3();
  } else if (selector == "V") {
    names.push_back("image_proj");
  } else if (selector == "DV") {
    add_mlp_top3();
    names.push_back("image_proj");
  } else {
    std::stringstream ss(selector);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (!item.empty()) names.push_back(item);
    }
    if (names.empty()) throw ConfigError("empty target_params selector");
  }
  return names;
}

}  // namespace tblab
