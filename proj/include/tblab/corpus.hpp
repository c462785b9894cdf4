#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "tblab/forward.hpp"

namespace tblab {

// Synthetic attribute world: each image holds a few objects, each object has a
// value for every attribute, questions ask for one (object, attribute) slot.
struct WorldConfig {
  int n_objects = 12;
  int n_attributes = 4;
  int n_values = 6;          // per attribute, value tokens are globally distinct
  int n_records = 2000;
  int objects_per_image = 2;
  double feature_noise = 0.02;
  std::uint64_t seed = 7;

  void validate() const;
  int feature_dim() const { return n_objects * n_attributes * n_values; }
};

struct ImageSpec {
  std::string id;
  // object -> attribute -> value
  std::map<std::string, std::map<std::string, std::string>> attrs;
  std::vector<double> features;

  std::set<std::string> objects() const;
  bool attrs_disjoint(const ImageSpec& other) const;
};

struct EditRecord {
  int id = -1;
  ImageSpec image;
  std::vector<std::string> question;
  std::string answer;        // ground truth under image
  std::string target;        // edit target, same attribute, != answer (derived)
  std::vector<std::string> rephrase_q;
  ImageSpec rephrase_img;    // same attributes, fresh noise
  std::vector<double> embedding;  // unit-norm question embedding
};

struct Vocabulary {
  std::vector<std::string> tokens;           // sorted
  std::map<std::string, int> ids;
  std::set<std::string> answer_tokens;       // observed corpus answers
  std::string unknown_token = "unknown";

  int id_of(const std::string& tok) const;
  bool has(const std::string& tok) const { return ids.count(tok) > 0; }
  int unknown_id() const { return id_of(unknown_token); }
  int size() const { return static_cast<int>(tokens.size()); }
  int answer_vocab_size() const { return static_cast<int>(answer_tokens.size()); }

  std::vector<int> encode(const std::vector<std::string>& words) const;
};

struct Corpus {
  std::vector<EditRecord> records;
  Vocabulary vocab;
  // attribute token -> sorted values observed as answers for it
  std::map<std::string, std::vector<std::string>> attr_values;
  // answer value -> its attribute token
  std::map<std::string, std::string> value_attr;

  const EditRecord& by_id(int id) const;
  // question template identity = the template's first word; -1 when unknown
  int template_of(const std::vector<std::string>& question) const;
};

Corpus generate_corpus(const WorldConfig& cfg);

void save_corpus(const Corpus& corpus, const std::string& path);
Corpus load_corpus(const std::string& path);

// Model-input builders. The vocabulary maps words to ids; images go in as
// feature vectors, missing images as the null-image path.
ModelInput input_for(const Vocabulary& vocab, const std::vector<std::string>& question,
                     const ImageSpec* image);

// Fixed question templates of the generator (each exactly 6 words, slot 3 is
// the attribute, slot 5 the object, word sets pairwise disjoint).
const std::vector<std::vector<std::string>>& question_templates();

}  // namespace tblab
