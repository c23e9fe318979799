#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

namespace usermodel::model {

struct WeightSource {
  enum class Kind { kSeededRandom, kWeightFile };
  Kind kind = Kind::kSeededRandom;
  std::uint64_t seed = 0;
  std::filesystem::path path;
};

struct TokenizerSpec {
  enum class Kind { kByte, kVocab };
  Kind kind = Kind::kByte;
  // kVocab: JSON asset {"tokens": [...], "eos": "...", "unk": "..."}
  std::filesystem::path path;
};

struct ModelConfig {
  std::size_t n_layers = 4;
  std::size_t d_model = 64;
  std::size_t n_heads = 4;
  std::size_t vocab_size = 257;
  std::size_t context_window = 1024;
  WeightSource weight_source;
  TokenizerSpec tokenizer;

  std::size_t head_dim() const { return d_model / n_heads; }
  std::size_t d_ff() const { return 4 * d_model; }

  // Throws Error(kInvalidConfig) when an invariant does not hold.
  void validate() const;

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j,
                               const std::filesystem::path& base_dir = {});
  static ModelConfig load(const std::filesystem::path& path);
};

}  // namespace usermodel::model
