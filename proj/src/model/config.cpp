#include "usermodel/model/config.hpp"

#include "usermodel/error.hpp"
#include "usermodel/util/io.hpp"

namespace usermodel::model {
namespace {

[[noreturn]] void bad(const std::string& what) {
  throw Error(ErrorCode::kInvalidConfig, "model config: " + what);
}

std::size_t positive(const nlohmann::json& j, const char* key, std::size_t fallback) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_number_integer() || j.at(key).get<long long>() <= 0) {
    bad(std::string(key) + " must be a positive integer");
  }
  return j.at(key).get<std::size_t>();
}

}  // namespace

void ModelConfig::validate() const {
  if (n_layers == 0 || d_model == 0 || n_heads == 0 || vocab_size == 0) {
    bad("dimensions must be positive");
  }
  if (d_model % n_heads != 0) bad("d_model must be divisible by n_heads");
  if (context_window < 16) bad("context_window must be at least 16");
  if (tokenizer.kind == TokenizerSpec::Kind::kByte && vocab_size != 257) {
    bad("byte tokenizer requires vocab_size 257");
  }
  if (weight_source.kind == WeightSource::Kind::kWeightFile && weight_source.path.empty()) {
    bad("weight-file source needs a path");
  }
}

nlohmann::json ModelConfig::to_json() const {
  nlohmann::json j{{"n_layers", n_layers},
                   {"d_model", d_model},
                   {"n_heads", n_heads},
                   {"vocab_size", vocab_size},
                   {"context_window", context_window}};
  if (weight_source.kind == WeightSource::Kind::kSeededRandom) {
    j["weight_source"] = {{"type", "seeded-random"}, {"seed", weight_source.seed}};
  } else {
    j["weight_source"] = {{"type", "weight-file"}, {"path", weight_source.path.string()}};
  }
  if (tokenizer.kind == TokenizerSpec::Kind::kByte) {
    j["tokenizer"] = {{"type", "byte"}};
  } else {
    j["tokenizer"] = {{"type", "vocab"}, {"path", tokenizer.path.string()}};
  }
  return j;
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j,
                                   const std::filesystem::path& base_dir) {
  if (!j.is_object()) bad("expected a JSON object");
  ModelConfig c;
  c.n_layers = positive(j, "n_layers", c.n_layers);
  c.d_model = positive(j, "d_model", c.d_model);
  c.n_heads = positive(j, "n_heads", c.n_heads);
  c.vocab_size = positive(j, "vocab_size", c.vocab_size);
  c.context_window = positive(j, "context_window", c.context_window);
  auto resolve = [&](const std::string& p) {
    std::filesystem::path path(p);
    return path.is_relative() && !base_dir.empty() ? base_dir / path : path;
  };
  if (j.contains("weight_source")) {
    const auto& ws = j.at("weight_source");
    const auto type = ws.value("type", std::string("seeded-random"));
    if (type == "seeded-random") {
      c.weight_source.kind = WeightSource::Kind::kSeededRandom;
      c.weight_source.seed = ws.value("seed", std::uint64_t{0});
    } else if (type == "weight-file") {
      c.weight_source.kind = WeightSource::Kind::kWeightFile;
      c.weight_source.path = resolve(ws.value("path", std::string()));
    } else {
      bad("unknown weight_source type '" + type + "'");
    }
  }
  if (j.contains("tokenizer")) {
    const auto& tk = j.at("tokenizer");
    const auto type = tk.value("type", std::string("byte"));
    if (type == "byte") {
      c.tokenizer.kind = TokenizerSpec::Kind::kByte;
    } else if (type == "vocab") {
      c.tokenizer.kind = TokenizerSpec::Kind::kVocab;
      c.tokenizer.path = resolve(tk.value("path", std::string()));
    } else {
      bad("unknown tokenizer type '" + type + "'");
    }
  }
  c.validate();
  return c;
}

ModelConfig ModelConfig::load(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(util::read_text(path));
  } catch (const nlohmann::json::exception& e) {
    bad(path.string() + ": " + e.what());
  }
  return from_json(j, path.parent_path());
}

}  // namespace usermodel::model
