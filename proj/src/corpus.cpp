#include "tblab/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "tblab/errors.hpp"
#include "tblab/hash.hpp"
#include "tblab/rng.hpp"

namespace tblab {

using nlohmann::json;

static const char* kFormat = "tb-corpus-1";

void WorldConfig::validate() const {
  if (n_objects < 1) throw ConfigError("world: n_objects must be >= 1");
  if (n_attributes < 1) throw ConfigError("world: n_attributes must be >= 1");
  if (n_values < 2) throw ConfigError("world: n_values must be >= 2 so edits have a target");
  if (n_records < 1) throw ConfigError("world: n_records must be >= 1");
  if (objects_per_image < 1 || objects_per_image > n_objects)
    throw ConfigError("world: objects_per_image must be in [1, n_objects]");
  if (feature_noise < 0.0) throw ConfigError("world: feature_noise must be >= 0");
}

std::set<std::string> ImageSpec::objects() const {
  std::set<std::string> out;
  for (const auto& [obj, _] : attrs) out.insert(obj);
  return out;
}

bool ImageSpec::attrs_disjoint(const ImageSpec& other) const {
  for (const auto& [obj, _] : attrs)
    if (other.attrs.count(obj)) return false;
  return true;
}

const std::vector<std::vector<std::string>>& question_templates() {
  static const std::vector<std::vector<std::string>> t = {
      {"what", "is", "the", "", "of", ""},
      {"tell", "me", "some", "", "from", ""},
      {"give", "us", "your", "", "on", ""},
  };
  return t;
}

namespace {

const std::vector<std::string>& object_names() {
  static const std::vector<std::string> v = {"cube", "ball", "lamp", "desk", "book", "mug",
                                             "fan",  "kite", "drum", "vase", "sock", "cap",
                                             "pen",  "jar",  "bell", "boot"};
  return v;
}

const std::vector<std::string>& attribute_names() {
  static const std::vector<std::string> v = {"color", "size", "mood", "shape", "glow", "feel"};
  return v;
}

const std::vector<std::vector<std::string>>& value_names() {
  static const std::vector<std::vector<std::string>> v = {
      {"red", "blue", "green", "gold", "pink", "teal", "rust", "plum"},
      {"tiny", "small", "big", "huge", "wide", "slim", "tall", "short"},
      {"calm", "glad", "grim", "tense", "bored", "eager", "proud", "shy"},
      {"round", "square", "oval", "bent", "star", "cone", "disc", "wavy"},
      {"dim", "faint", "soft", "vivid", "harsh", "neon", "pale", "deep"},
      {"rough", "smooth", "silky", "gritty", "fuzzy", "sharp", "damp", "dry"},
  };
  return v;
}

std::string object_name(int i) {
  const auto& names = object_names();
  if (i < static_cast<int>(names.size())) return names[static_cast<std::size_t>(i)];
  return "obj" + std::to_string(i);
}

std::string attribute_name(int a) {
  const auto& names = attribute_names();
  if (a < static_cast<int>(names.size())) return names[static_cast<std::size_t>(a)];
  return "attr" + std::to_string(a);
}

std::string value_name(int a, int v) {
  const auto& names = value_names();
  if (a < static_cast<int>(names.size()) &&
      v < static_cast<int>(names[static_cast<std::size_t>(a)].size()))
    return names[static_cast<std::size_t>(a)][static_cast<std::size_t>(v)];
  return "val" + std::to_string(a) + "_" + std::to_string(v);
}

double snap_f32(double x) { return static_cast<double>(static_cast<float>(x)); }

// one-hot block per (object, attribute, value) entry plus seeded noise,
// values snapped to f32 so the JSONL round-trip is lossless
std::vector<double> encode_features(const WorldConfig& cfg,
                                    const std::map<int, std::map<int, int>>& entries,
                                    Rng rng) {
  std::vector<double> f(static_cast<std::size_t>(cfg.feature_dim()), 0.0);
  for (double& x : f) x = cfg.feature_noise * rng.normal();
  for (const auto& [obj, by_attr] : entries)
    for (const auto& [attr, val] : by_attr) {
      std::size_t idx = static_cast<std::size_t>((obj * cfg.n_attributes + attr) * cfg.n_values + val);
      f[idx] += 1.0;
    }
  for (double& x : f) x = snap_f32(x);
  return f;
}

std::string attrs_key(const std::map<int, std::map<int, int>>& entries) {
  std::string k;
  for (const auto& [obj, by_attr] : entries) {
    k += std::to_string(obj) + ":";
    for (const auto& [attr, val] : by_attr)
      k += std::to_string(attr) + "=" + std::to_string(val) + ",";
    k += ";";
  }
  return k;
}

ImageSpec materialize_image(const WorldConfig& cfg, const std::string& id,
                            const std::map<int, std::map<int, int>>& entries, Rng rng) {
  ImageSpec img;
  img.id = id;
  for (const auto& [obj, by_attr] : entries) {
    auto& slot = img.attrs[object_name(obj)];
    for (const auto& [attr, val] : by_attr)
      slot[attribute_name(attr)] = value_name(attr, val);
  }
  img.features = encode_features(cfg, entries, rng);
  return img;
}

// target = another value of the answer's attribute, seeded only by
// file-visible data so loading a corpus reproduces the same targets
std::string derive_target(int record_id, const std::string& answer,
                          const std::vector<std::string>& values_of_attr) {
  std::vector<std::string> options;
  for (const auto& v : values_of_attr)
    if (v != answer) options.push_back(v);
  if (options.empty()) return "";
  std::uint64_t h = fnv1a64("target:" + std::to_string(record_id) + ":" + answer);
  return options[h % options.size()];
}

void finalize_targets(Corpus& corpus) {
  corpus.attr_values.clear();
  corpus.value_attr.clear();
  std::map<std::string, std::set<std::string>> seen;
  for (const auto& r : corpus.records)
    for (const auto& [obj, by_attr] : r.image.attrs)
      for (const auto& [attr, val] : by_attr) {
        seen[attr].insert(val);
        corpus.value_attr[val] = attr;
      }
  for (auto& [attr, vals] : seen)
    corpus.attr_values[attr] = std::vector<std::string>(vals.begin(), vals.end());
  for (auto& r : corpus.records) {
    auto it = corpus.value_attr.find(r.answer);
    if (it == corpus.value_attr.end()) {
      r.target = "";
      continue;
    }
    r.target = derive_target(r.id, r.answer, corpus.attr_values[it->second]);
  }
}

void build_vocab(Corpus& corpus) {
  std::set<std::string> toks;
  toks.insert(corpus.vocab.unknown_token);
  for (const auto& r : corpus.records) {
    for (const auto& w : r.question) toks.insert(w);
    for (const auto& w : r.rephrase_q) toks.insert(w);
    toks.insert(r.answer);
    if (!r.target.empty()) toks.insert(r.target);
    for (const auto& [obj, by_attr] : r.image.attrs) {
      toks.insert(obj);
      for (const auto& [attr, val] : by_attr) {
        toks.insert(attr);
        toks.insert(val);
      }
    }
  }
  corpus.vocab.tokens.assign(toks.begin(), toks.end());
  corpus.vocab.ids.clear();
  for (std::size_t i = 0; i < corpus.vocab.tokens.size(); ++i)
    corpus.vocab.ids[corpus.vocab.tokens[i]] = static_cast<int>(i);
  corpus.vocab.answer_tokens.clear();
  for (const auto& r : corpus.records) corpus.vocab.answer_tokens.insert(r.answer);
}

std::vector<double> bag_embedding(const Vocabulary& vocab,
                                  const std::vector<std::string>& question) {
  std::vector<double> e(static_cast<std::size_t>(vocab.size()), 0.0);
  for (const auto& w : question) e[static_cast<std::size_t>(vocab.id_of(w))] += 1.0;
  double norm = 0.0;
  for (double x : e) norm += x * x;
  norm = std::sqrt(norm);
  if (norm > 0.0)
    for (double& x : e) x = snap_f32(x / norm);
  return e;
}

}  // namespace

int Vocabulary::id_of(const std::string& tok) const {
  auto it = ids.find(tok);
  if (it == ids.end()) throw InvalidToken("token not in vocabulary: " + tok);
  return it->second;
}

std::vector<int> Vocabulary::encode(const std::vector<std::string>& words) const {
  std::vector<int> out;
  out.reserve(words.size());
  for (const auto& w : words) out.push_back(id_of(w));
  return out;
}

const EditRecord& Corpus::by_id(int id) const {
  for (const auto& r : records)
    if (r.id == id) return r;
  throw DataError("no record with id " + std::to_string(id));
}

int Corpus::template_of(const std::vector<std::string>& question) const {
  const auto& temps = question_templates();
  if (question.empty()) return -1;
  for (std::size_t t = 0; t < temps.size(); ++t)
    if (temps[t][0] == question[0]) return static_cast<int>(t);
  return -1;
}

Corpus generate_corpus(const WorldConfig& cfg) {
  cfg.validate();
  Corpus corpus;
  Rng root(cfg.seed);
  Rng draw = root.child("records");

  const auto& temps = question_templates();
  std::set<std::string> uniq;
  int attempts_left = cfg.n_records * 1000 + 1000;

  for (int id = 0; id < cfg.n_records;) {
    if (--attempts_left <= 0)
      throw WorldExhausted("world cannot supply " + std::to_string(cfg.n_records) +
                           " unique records");

    // objects in the scene
    std::vector<int> pool(static_cast<std::size_t>(cfg.n_objects));
    for (int i = 0; i < cfg.n_objects; ++i) pool[static_cast<std::size_t>(i)] = i;
    draw.shuffle(pool);
    pool.resize(static_cast<std::size_t>(cfg.objects_per_image));
    std::sort(pool.begin(), pool.end());

    std::map<int, std::map<int, int>> entries;
    for (int obj : pool)
      for (int a = 0; a < cfg.n_attributes; ++a)
        entries[obj][a] = static_cast<int>(draw.uniform_index(static_cast<std::size_t>(cfg.n_values)));

    int q_obj = pool[draw.uniform_index(pool.size())];
    int q_attr = static_cast<int>(draw.uniform_index(static_cast<std::size_t>(cfg.n_attributes)));

    // early records sweep every (attribute, value) so the answer vocabulary
    // covers the whole value table
    if (id < cfg.n_attributes * cfg.n_values) {
      q_attr = id / cfg.n_values;
      entries[q_obj][q_attr] = id % cfg.n_values;
    }

    int tmpl = static_cast<int>(draw.uniform_index(temps.size()));
    std::string key = attrs_key(entries) + "|q" + std::to_string(q_obj) + "." +
                      std::to_string(q_attr) + "." + std::to_string(tmpl);
    if (uniq.count(key)) continue;
    uniq.insert(key);

    EditRecord r;
    r.id = id;
    r.image = materialize_image(cfg, "img" + std::to_string(id), entries,
                                root.child("img", static_cast<std::uint64_t>(id)));
    r.question = temps[static_cast<std::size_t>(tmpl)];
    r.question[3] = attribute_name(q_attr);
    r.question[5] = object_name(q_obj);
    r.answer = value_name(q_attr, entries[q_obj][q_attr]);

    int re_tmpl = (tmpl + 1 + static_cast<int>(draw.uniform_index(temps.size() - 1))) %
                  static_cast<int>(temps.size());
    r.rephrase_q = temps[static_cast<std::size_t>(re_tmpl)];
    r.rephrase_q[3] = attribute_name(q_attr);
    r.rephrase_q[5] = object_name(q_obj);

    r.rephrase_img = materialize_image(cfg, "img" + std::to_string(id) + "r", entries,
                                       root.child("imgr", static_cast<std::uint64_t>(id)));
    corpus.records.push_back(std::move(r));
    ++id;
  }

  finalize_targets(corpus);
  build_vocab(corpus);
  for (auto& r : corpus.records) r.embedding = bag_embedding(corpus.vocab, r.question);
  return corpus;
}

// ---- file io ----

static json image_to_json(const ImageSpec& img) {
  json attrs = json::object();
  for (const auto& [obj, by_attr] : img.attrs) {
    json slot = json::object();
    for (const auto& [attr, val] : by_attr) slot[attr] = val;
    attrs[obj] = slot;
  }
  return json{{"id", img.id}, {"attrs", attrs}, {"features", img.features}};
}

static ImageSpec image_from_json(const json& j) {
  ImageSpec img;
  img.id = j.value("id", "");
  for (const auto& [obj, slot] : j.at("attrs").items())
    for (const auto& [attr, val] : slot.items())
      img.attrs[obj][attr] = val.get<std::string>();
  img.features = j.at("features").get<std::vector<double>>();
  return img;
}

void save_corpus(const Corpus& corpus, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot open corpus for writing: " + path);
  for (const auto& r : corpus.records) {
    json line{{"format", kFormat},
              {"id", r.id},
              {"image", image_to_json(r.image)},
              {"question", r.question},
              {"answer", r.answer},
              {"rephrase_q", r.rephrase_q},
              {"rephrase_img", image_to_json(r.rephrase_img)},
              {"embedding", r.embedding}};
    out << line.dump() << "\n";
  }
  if (!out) throw DataError("corpus write failed: " + path);
}

Corpus load_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open corpus: " + path);
  Corpus corpus;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError("corpus line " + std::to_string(lineno) +
                      " is not valid JSON: " + e.what());
    }
    if (j.value("format", "") != kFormat)
      throw DataError("corpus line " + std::to_string(lineno) + " has unsupported format");
    EditRecord r;
    r.id = j.at("id").get<int>();
    r.image = image_from_json(j.at("image"));
    r.question = j.at("question").get<std::vector<std::string>>();
    r.answer = j.at("answer").get<std::string>();
    r.rephrase_q = j.at("rephrase_q").get<std::vector<std::string>>();
    r.rephrase_img = image_from_json(j.at("rephrase_img"));
    r.embedding = j.at("embedding").get<std::vector<double>>();
    corpus.records.push_back(std::move(r));
  }
  if (corpus.records.empty()) throw DataError("corpus is empty: " + path);
  finalize_targets(corpus);
  build_vocab(corpus);
  return corpus;
}

ModelInput input_for(const Vocabulary& vocab, const std::vector<std::string>& question,
                     const ImageSpec* image) {
  ModelInput in;
  in.text = vocab.encode(question);
  in.image = image ? ImageInput::of_features(image->features) : ImageInput::absent();
  return in;
}

}  // namespace tblab
