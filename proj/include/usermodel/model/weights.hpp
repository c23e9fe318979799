#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "usermodel/model/config.hpp"

namespace usermodel::model {

struct LayerWeights {
  std::vector<float> attn_norm;  // d
  std::vector<float> wq, wk, wv, wo;  // d x d, row-major (out x in)
  std::vector<float> mlp_norm;   // d
  std::vector<float> w_gate, w_up;  // ff x d
  std::vector<float> w_down;     // d x ff
};

struct Weights {
  std::vector<float> tok_embeddings;  // vocab x d
  std::vector<float> pos_embeddings;  // ctx x d
  std::vector<LayerWeights> layers;
  std::vector<float> final_norm;      // d
  std::vector<float> output;          // vocab x d

  static Weights seeded(const ModelConfig& config, std::uint64_t seed);

  // Weight file: container header {"format":"usermodel-weights","version":1,
  // "tensors":[{"name","shape","offset"}]} where offset is a byte offset into
  // the float32 payload.
  static Weights load(const std::filesystem::path& path, const ModelConfig& config);
  void save(const std::filesystem::path& path, const ModelConfig& config) const;

  std::string digest() const;
};

}  // namespace usermodel::model
