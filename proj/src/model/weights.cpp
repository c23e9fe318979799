#include "usermodel/model/weights.hpp"

#include <cmath>
#include <functional>
#include <map>
#include <random>

#include "usermodel/error.hpp"
#include "usermodel/util/container.hpp"
#include "usermodel/util/hash.hpp"
#include "usermodel/util/random.hpp"

namespace usermodel::model {
namespace {

struct TensorRef {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<float>* data;
};

// Canonical tensor order; seeded initialization and the weight file both
// follow it.
std::vector<TensorRef> tensor_table(Weights& w, const ModelConfig& c) {
  const std::size_t d = c.d_model, ff = c.d_ff(), v = c.vocab_size;
  std::vector<TensorRef> t;
  t.push_back({"tok_embeddings", {v, d}, &w.tok_embeddings});
  t.push_back({"pos_embeddings", {c.context_window, d}, &w.pos_embeddings});
  w.layers.resize(c.n_layers);
  for (std::size_t l = 0; l < c.n_layers; ++l) {
    auto& L = w.layers[l];
    const std::string p = "layers." + std::to_string(l) + ".";
    t.push_back({p + "attn_norm", {d}, &L.attn_norm});
    t.push_back({p + "wq", {d, d}, &L.wq});
    t.push_back({p + "wk", {d, d}, &L.wk});
    t.push_back({p + "wv", {d, d}, &L.wv});
    t.push_back({p + "wo", {d, d}, &L.wo});
    t.push_back({p + "mlp_norm", {d}, &L.mlp_norm});
    t.push_back({p + "w_gate", {ff, d}, &L.w_gate});
    t.push_back({p + "w_up", {ff, d}, &L.w_up});
    t.push_back({p + "w_down", {d, ff}, &L.w_down});
  }
  t.push_back({"final_norm", {d}, &w.final_norm});
  t.push_back({"output", {v, d}, &w.output});
  return t;
}

std::size_t numel(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (auto s : shape) n *= s;
  return n;
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

Weights Weights::seeded(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Weights w;
  std::mt19937_64 rng(seed);
  for (auto& t : tensor_table(w, config)) {
    const std::size_t n = numel(t.shape);
    t.data->resize(n);
    if (ends_with(t.name, "norm")) {
      std::fill(t.data->begin(), t.data->end(), 1.0f);
      continue;
    }
    double scale = 1.0 / std::sqrt(static_cast<double>(t.shape.back()));
    if (t.name == "tok_embeddings") scale = 1.0;
    if (t.name == "pos_embeddings") scale = 0.5;
    for (auto& x : *t.data) x = static_cast<float>(scale * util::normal(rng));
  }
  return w;
}

Weights Weights::load(const std::filesystem::path& path, const ModelConfig& config) {
  auto c = util::read_container(path);
  if (c.header.value("format", std::string()) != "usermodel-weights") {
    throw Error(ErrorCode::kMalformedFile, path.string() + ": not a weight file");
  }
  if (c.header.value("version", 0) != 1) {
    throw Error(ErrorCode::kUnsupportedVersion, path.string() + ": unsupported weight file version");
  }
  std::map<std::string, nlohmann::json> entries;
  for (const auto& e : c.header.at("tensors")) entries[e.at("name").get<std::string>()] = e;
  Weights w;
  for (auto& t : tensor_table(w, config)) {
    auto it = entries.find(t.name);
    if (it == entries.end()) {
      throw Error(ErrorCode::kMalformedFile, path.string() + ": missing tensor " + t.name);
    }
    const auto shape = it->second.at("shape").get<std::vector<std::size_t>>();
    if (shape != t.shape) {
      throw Error(ErrorCode::kMalformedFile, path.string() + ": shape mismatch for " + t.name);
    }
    const auto offset = it->second.at("offset").get<std::size_t>();
    const std::size_t n = numel(shape);
    if (offset % sizeof(float) != 0 || offset / sizeof(float) + n > c.payload.size()) {
      throw Error(ErrorCode::kMalformedFile, path.string() + ": bad offset for " + t.name);
    }
    const auto first = c.payload.begin() + static_cast<std::ptrdiff_t>(offset / sizeof(float));
    t.data->assign(first, first + static_cast<std::ptrdiff_t>(n));
  }
  return w;
}

void Weights::save(const std::filesystem::path& path, const ModelConfig& config) const {
  Weights copy = *this;
  nlohmann::json tensors = nlohmann::json::array();
  std::vector<float> payload;
  for (auto& t : tensor_table(copy, config)) {
    if (t.data->size() != numel(t.shape)) {
      throw Error(ErrorCode::kInvalidArgument, "weights do not match config at " + t.name);
    }
    tensors.push_back({{"name", t.name}, {"shape", t.shape}, {"offset", payload.size() * sizeof(float)}});
    payload.insert(payload.end(), t.data->begin(), t.data->end());
  }
  util::write_container(path, {{"format", "usermodel-weights"}, {"version", 1}, {"tensors", tensors}},
                        payload);
}

std::string Weights::digest() const {
  util::Fnv1a h;
  auto feed = [&](const std::vector<float>& v) {
    h.update(std::as_bytes(std::span<const float>(v)));
  };
  feed(tok_embeddings);
  feed(pos_embeddings);
  for (const auto& L : layers) {
    for (const auto* v : {&L.attn_norm, &L.wq, &L.wk, &L.wv, &L.wo, &L.mlp_norm, &L.w_gate,
                          &L.w_up, &L.w_down}) {
      feed(*v);
    }
  }
  feed(final_norm);
  feed(output);
  return h.hex();
}

}  // namespace usermodel::model
