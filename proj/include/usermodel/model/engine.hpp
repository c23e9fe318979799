#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "usermodel/model/chat.hpp"
#include "usermodel/model/config.hpp"
#include "usermodel/model/tokenizer.hpp"
#include "usermodel/model/weights.hpp"

namespace usermodel::model {

// Per-layer additive deltas on the residual stream. A layer's delta is added
// to the output of that transformer block, before the next block reads it.
struct SteeringPlan {
  std::map<int, std::vector<float>> deltas;

  bool empty() const { return deltas.empty(); }
  const std::vector<float>* delta(int layer) const {
    auto it = deltas.find(layer);
    return it == deltas.end() ? nullptr : &it->second;
  }
};

struct TapRequest {
  std::vector<int> layers;
  // Empty means every position.
  std::vector<std::size_t> positions;
};

// Residual vectors at block outputs, keyed by (layer, position).
struct ActivationTrace {
  std::map<std::pair<int, std::size_t>, std::vector<float>> entries;

  bool empty() const { return entries.empty(); }
  const std::vector<float>& at(int layer, std::size_t position) const;
};

struct ForwardOptions {
  const SteeringPlan* plan = nullptr;
  // First steered position; defaults to the last input position.
  std::optional<std::size_t> steer_from;
};

struct ForwardResult {
  std::vector<float> logits;  // positions x vocab
  std::size_t vocab = 0;
  ActivationTrace trace;

  std::size_t positions() const { return vocab == 0 ? 0 : logits.size() / vocab; }
  std::span<const float> row(std::size_t position) const {
    return std::span<const float>(logits).subspan(position * vocab, vocab);
  }
};

struct GenerationParams {
  std::size_t max_new_tokens = 64;
  // End-of-sequence is masked until this many tokens exist.
  std::size_t min_new_tokens = 0;
};

struct GenerationResult {
  std::string text;
  std::vector<TokenId> tokens;
  std::size_t prompt_tokens = 0;
  bool stopped_on_eos = false;
};

struct LensEntry {
  int layer = 0;
  TokenId token = 0;
  std::string text;
};

// Lowest id wins ties.
TokenId argmax(std::span<const float> logits);

// Decoder-only transformer (pre-RMSNorm, causal multi-head attention, SwiGLU
// MLP, learned positions). Immutable after construction; every const method
// may be called concurrently.
class Engine {
 public:
  static Engine from_config(const ModelConfig& config);
  Engine(ModelConfig config, Weights weights, std::unique_ptr<Tokenizer> tokenizer);

  Engine(Engine&&) noexcept = default;
  Engine& operator=(Engine&&) noexcept = default;

  const ModelConfig& config() const { return config_; }
  const Tokenizer& tokenizer() const { return *tokenizer_; }
  const Weights& weights() const { return weights_; }
  const std::string& fingerprint() const { return fingerprint_; }
  int n_layers() const { return static_cast<int>(config_.n_layers); }
  std::size_t d_model() const { return config_.d_model; }

  std::vector<TokenId> tokenize(std::string_view text) const { return tokenizer_->encode(text); }
  std::string detokenize(std::span<const TokenId> ids) const { return tokenizer_->decode(ids); }

  TemplatedPrompt template_for(const Conversation& conversation,
                               std::string_view system_prompt = kDefaultSystemPrompt) const;

  ForwardResult forward_with_taps(std::span<const TokenId> tokens, const TapRequest& taps,
                                  const ForwardOptions& options = {}) const;

  // Greedy decoding. The plan's deltas are added at the current last
  // position on every decode step; prompt positions before the last one are
  // not steered.
  GenerationResult generate(const Conversation& conversation, const GenerationParams& params,
                            const SteeringPlan* plan = nullptr,
                            std::string_view system_prompt = kDefaultSystemPrompt) const;
  GenerationResult generate_from_tokens(std::span<const TokenId> prompt,
                                        const GenerationParams& params,
                                        const SteeringPlan* plan = nullptr) const;

  // argmax(unembed(final_norm(residual at layer l, last position))) per layer.
  std::vector<LensEntry> logit_lens(const Conversation& conversation,
                                    std::string_view system_prompt = kDefaultSystemPrompt) const;
  std::vector<LensEntry> logit_lens_tokens(std::span<const TokenId> tokens) const;

  void unembed(std::span<const float> residual, std::span<float> logits) const;

 private:
  struct DecodeState;
  void validate_plan(const SteeringPlan* plan) const;
  // Runs one token at position state.len; `residuals` (optional) receives the
  // block output of every layer, n_layers x d.
  void step(DecodeState& state, TokenId token, const SteeringPlan* plan,
            std::vector<float>* residuals, std::span<float> logits) const;

  ModelConfig config_;
  Weights weights_;
  std::unique_ptr<Tokenizer> tokenizer_;
  std::string fingerprint_;
};

}  // namespace usermodel::model
