#include "tblab/checkpoint.hpp"

#include <fstream>
#include <vector>

#include <json.hpp>

#include "tblab/errors.hpp"
#include "tblab/hash.hpp"

namespace tblab {

using nlohmann::json;

static const char* kFormat = "tb-ckpt-1";

static json config_to_json(const ModelConfig& c) {
  return json{{"n_layers", c.n_layers},
              {"d_model", c.d_model},
              {"n_heads", c.n_heads},
              {"d_ff", c.d_ff},
              {"vocab_size", c.vocab_size},
              {"n_image_tokens", c.n_image_tokens},
              {"max_text_tokens", c.max_text_tokens},
              {"d_image", c.d_image},
              {"seed", c.seed}};
}

static ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.n_layers = j.at("n_layers").get<int>();
  c.d_model = j.at("d_model").get<int>();
  c.n_heads = j.at("n_heads").get<int>();
  c.d_ff = j.at("d_ff").get<int>();
  c.vocab_size = j.at("vocab_size").get<int>();
  c.n_image_tokens = j.at("n_image_tokens").get<int>();
  c.max_text_tokens = j.at("max_text_tokens").get<int>();
  c.d_image = j.at("d_image").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

std::string model_config_hash(const ModelConfig& cfg) {
  return hex64(fnv1a64(config_to_json(cfg).dump()));
}

void save_checkpoint(const Parameters& params, const std::string& path) {
  json manifest = json::array();
  std::size_t total = 0;
  params.for_each([&](const std::string& name, const Tensor& t) {
    manifest.push_back(json{{"name", name}, {"shape", t.shape}});
    total += t.data.size();
  });
  json header{{"format", kFormat},
              {"config", config_to_json(params.config)},
              {"config_hash", model_config_hash(params.config)},
              {"seed", params.config.seed},
              {"tensors", manifest}};

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open checkpoint for writing: " + path);
  out << header.dump() << "\n";

  std::vector<float> buf;
  buf.reserve(total);
  params.for_each([&](const std::string&, const Tensor& t) {
    for (double v : t.data) buf.push_back(static_cast<float>(v));
  });
  out.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!out) throw DataError("checkpoint write failed: " + path);
}

Parameters load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  std::string line;
  if (!std::getline(in, line)) throw DataError("checkpoint missing header: " + path);
  json header;
  try {
    header = json::parse(line);
  } catch (const json::exception& e) {
    throw DataError("checkpoint header is not valid JSON: " + std::string(e.what()));
  }
  if (header.value("format", "") != kFormat)
    throw DataError("unsupported checkpoint format: " + header.value("format", "<missing>"));

  ModelConfig cfg = config_from_json(header.at("config"));
  cfg.validate();
  Parameters params = Parameters::allocate(cfg);

  const json& manifest = header.at("tensors");
  std::size_t idx = 0;
  params.for_each([&](const std::string& name, Tensor& t) {
    if (idx >= manifest.size()) throw DataError("checkpoint manifest too short");
    const json& entry = manifest[idx++];
    if (entry.at("name").get<std::string>() != name)
      throw DataError("checkpoint manifest order mismatch at " + name);
    std::vector<std::size_t> shape = entry.at("shape").get<std::vector<std::size_t>>();
    if (shape != t.shape) throw DataError("checkpoint shape mismatch for " + name);
    std::vector<float> buf(t.data.size());
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (static_cast<std::size_t>(in.gcount()) != buf.size() * sizeof(float))
      throw DataError("checkpoint payload truncated at " + name);
    for (std::size_t i = 0; i < buf.size(); ++i) t.data[i] = static_cast<double>(buf[i]);
  });
  if (idx != manifest.size()) throw DataError("checkpoint manifest has extra tensors");
  char extra;
  if (in.read(&extra, 1)) throw DataError("checkpoint has trailing bytes");
  return params;
}

}  // namespace tblab
