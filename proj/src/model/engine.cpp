#include "usermodel/model/engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "usermodel/error.hpp"
#include "usermodel/simd/kernels.hpp"
#include "usermodel/util/hash.hpp"

namespace usermodel::model {

namespace {
constexpr float kNormEps = 1e-5f;
}

const std::vector<float>& ActivationTrace::at(int layer, std::size_t position) const {
  auto it = entries.find({layer, position});
  if (it == entries.end()) {
    throw Error(ErrorCode::kInvalidTap, "trace has no entry for layer " + std::to_string(layer) +
                                            " position " + std::to_string(position));
  }
  return it->second;
}

TokenId argmax(std::span<const float> logits) {
  TokenId best = 0;
  for (std::size_t i = 1; i < logits.size(); ++i) {
    if (logits[i] > logits[static_cast<std::size_t>(best)]) best = static_cast<TokenId>(i);
  }
  return best;
}

struct Engine::DecodeState {
  std::vector<std::vector<float>> keys, values;  // per layer, len x d
  std::size_t len = 0;
  std::vector<float> x, h, q, k, v, attn, proj, scores, gate, up, down, normed;

  DecodeState(const ModelConfig& c, std::size_t capacity)
      : keys(c.n_layers), values(c.n_layers), x(c.d_model), h(c.d_model), q(c.d_model),
        k(c.d_model), v(c.d_model), attn(c.d_model), proj(c.d_model), scores(capacity),
        gate(c.d_ff()), up(c.d_ff()), down(c.d_model), normed(c.d_model) {
    for (auto& kv : keys) kv.reserve(capacity * c.d_model);
    for (auto& kv : values) kv.reserve(capacity * c.d_model);
  }
};

Engine Engine::from_config(const ModelConfig& config) {
  config.validate();
  Weights w = config.weight_source.kind == WeightSource::Kind::kSeededRandom
                  ? Weights::seeded(config, config.weight_source.seed)
                  : Weights::load(config.weight_source.path, config);
  return Engine(config, std::move(w), make_tokenizer(config));
}

Engine::Engine(ModelConfig config, Weights weights, std::unique_ptr<Tokenizer> tokenizer)
    : config_(std::move(config)), weights_(std::move(weights)), tokenizer_(std::move(tokenizer)) {
  config_.validate();
  if (tokenizer_->vocab_size() != config_.vocab_size) {
    throw Error(ErrorCode::kInvalidConfig, "tokenizer vocabulary does not match vocab_size");
  }
  util::Fnv1a h;
  h.update_pod(static_cast<std::uint64_t>(config_.n_layers));
  h.update_pod(static_cast<std::uint64_t>(config_.d_model));
  h.update_pod(static_cast<std::uint64_t>(config_.n_heads));
  h.update_pod(static_cast<std::uint64_t>(config_.vocab_size));
  h.update_pod(static_cast<std::uint64_t>(config_.context_window));
  h.update(tokenizer_->kind());
  h.update(weights_.digest());
  fingerprint_ = h.hex();
}

TemplatedPrompt Engine::template_for(const Conversation& conversation,
                                     std::string_view system_prompt) const {
  return apply_chat_template(*tokenizer_, conversation, system_prompt, config_.context_window);
}

void Engine::validate_plan(const SteeringPlan* plan) const {
  if (plan == nullptr) return;
  for (const auto& [layer, delta] : plan->deltas) {
    if (layer < 0 || layer >= n_layers()) {
      throw Error(ErrorCode::kInvalidArgument,
                  "steering plan targets layer " + std::to_string(layer) + " outside the model");
    }
    if (delta.size() != config_.d_model) {
      throw Error(ErrorCode::kInvalidArgument, "steering delta length does not match d_model");
    }
  }
}

void Engine::unembed(std::span<const float> residual, std::span<float> logits) const {
  const auto& K = simd::kernels();
  std::vector<float> normed(config_.d_model);
  K.rmsnorm(residual.data(), weights_.final_norm.data(), normed.data(), config_.d_model, kNormEps);
  K.matvec(weights_.output.data(), normed.data(), logits.data(), config_.vocab_size,
           config_.d_model);
}

void Engine::step(DecodeState& s, TokenId token, const SteeringPlan* plan,
                  std::vector<float>* residuals, std::span<float> logits) const {
  const auto& K = simd::kernels();
  const std::size_t d = config_.d_model, ff = config_.d_ff(), hd = config_.head_dim();
  const std::size_t pos = s.len;
  const float scale = 1.0f / std::sqrt(static_cast<float>(hd));

  const float* te = weights_.tok_embeddings.data() + static_cast<std::size_t>(token) * d;
  const float* pe = weights_.pos_embeddings.data() + pos * d;
  for (std::size_t i = 0; i < d; ++i) s.x[i] = te[i] + pe[i];

  for (std::size_t l = 0; l < config_.n_layers; ++l) {
    const auto& L = weights_.layers[l];
    K.rmsnorm(s.x.data(), L.attn_norm.data(), s.h.data(), d, kNormEps);
    K.matvec(L.wq.data(), s.h.data(), s.q.data(), d, d);
    K.matvec(L.wk.data(), s.h.data(), s.k.data(), d, d);
    K.matvec(L.wv.data(), s.h.data(), s.v.data(), d, d);
    auto& keys = s.keys[l];
    auto& values = s.values[l];
    keys.insert(keys.end(), s.k.begin(), s.k.end());
    values.insert(values.end(), s.v.begin(), s.v.end());

    std::fill(s.attn.begin(), s.attn.end(), 0.0f);
    for (std::size_t head = 0; head < config_.n_heads; ++head) {
      const std::size_t off = head * hd;
      float max_score = -std::numeric_limits<float>::infinity();
      for (std::size_t j = 0; j <= pos; ++j) {
        s.scores[j] = K.dot(s.q.data() + off, keys.data() + j * d + off, hd) * scale;
        max_score = std::max(max_score, s.scores[j]);
      }
      float total = 0.0f;
      for (std::size_t j = 0; j <= pos; ++j) {
        s.scores[j] = std::exp(s.scores[j] - max_score);
        total += s.scores[j];
      }
      for (std::size_t j = 0; j <= pos; ++j) {
        K.axpy(s.scores[j] / total, values.data() + j * d + off, s.attn.data() + off, hd);
      }
    }
    K.matvec(L.wo.data(), s.attn.data(), s.proj.data(), d, d);
    K.add(s.proj.data(), s.x.data(), d);

    K.rmsnorm(s.x.data(), L.mlp_norm.data(), s.h.data(), d, kNormEps);
    K.matvec(L.w_gate.data(), s.h.data(), s.gate.data(), ff, d);
    K.matvec(L.w_up.data(), s.h.data(), s.up.data(), ff, d);
    for (std::size_t i = 0; i < ff; ++i) {
      const float g = s.gate[i];
      s.gate[i] = g / (1.0f + std::exp(-g)) * s.up[i];
    }
    K.matvec(L.w_down.data(), s.gate.data(), s.down.data(), d, ff);
    K.add(s.down.data(), s.x.data(), d);

    if (plan != nullptr) {
      if (const auto* delta = plan->delta(static_cast<int>(l))) K.add(delta->data(), s.x.data(), d);
    }
    if (residuals != nullptr) {
      std::copy(s.x.begin(), s.x.end(), residuals->begin() + static_cast<std::ptrdiff_t>(l * d));
    }
  }
  ++s.len;
  if (!logits.empty()) unembed(s.x, logits);
}

ForwardResult Engine::forward_with_taps(std::span<const TokenId> tokens, const TapRequest& taps,
                                        const ForwardOptions& options) const {
  const std::size_t n = tokens.size();
  if (n > config_.context_window) {
    throw Error(ErrorCode::kContextOverflow,
                "input of " + std::to_string(n) + " tokens exceeds the context budget of " +
                    std::to_string(config_.context_window));
  }
  for (int layer : taps.layers) {
    if (layer < 0 || layer >= n_layers()) {
      throw Error(ErrorCode::kInvalidTap, "tap layer " + std::to_string(layer) +
                                              " is outside [0, " + std::to_string(n_layers()) + ")");
    }
  }
  for (std::size_t p : taps.positions) {
    if (p >= n) {
      throw Error(ErrorCode::kInvalidTap, "tap position " + std::to_string(p) +
                                              " is outside the input of length " + std::to_string(n));
    }
  }
  for (TokenId t : tokens) {
    if (t < 0 || static_cast<std::size_t>(t) >= config_.vocab_size) {
      throw Error(ErrorCode::kInvalidArgument, "token id " + std::to_string(t) + " out of range");
    }
  }
  validate_plan(options.plan);

  ForwardResult result;
  result.vocab = config_.vocab_size;
  result.logits.resize(n * config_.vocab_size);
  if (n == 0) return result;

  const std::size_t steer_from = options.steer_from.value_or(n - 1);
  std::vector<bool> tap_position(n, taps.positions.empty());
  for (std::size_t p : taps.positions) tap_position[p] = true;

  DecodeState state(config_, n);
  std::vector<float> residuals(config_.n_layers * config_.d_model);
  const bool want_taps = !taps.layers.empty();
  for (std::size_t pos = 0; pos < n; ++pos) {
    const SteeringPlan* plan = pos >= steer_from ? options.plan : nullptr;
    step(state, tokens[pos], plan, want_taps ? &residuals : nullptr,
         std::span<float>(result.logits).subspan(pos * result.vocab, result.vocab));
    if (!want_taps || !tap_position[pos]) continue;
    for (int layer : taps.layers) {
      const auto first = residuals.begin() + static_cast<std::ptrdiff_t>(layer) * static_cast<std::ptrdiff_t>(config_.d_model);
      result.trace.entries[{layer, pos}] =
          std::vector<float>(first, first + static_cast<std::ptrdiff_t>(config_.d_model));
    }
  }
  return result;
}

GenerationResult Engine::generate(const Conversation& conversation, const GenerationParams& params,
                                  const SteeringPlan* plan, std::string_view system_prompt) const {
  const auto prompt = template_for(conversation, system_prompt);
  return generate_from_tokens(prompt.tokens, params, plan);
}

GenerationResult Engine::generate_from_tokens(std::span<const TokenId> prompt,
                                              const GenerationParams& params,
                                              const SteeringPlan* plan) const {
  if (params.max_new_tokens == 0) {
    throw Error(ErrorCode::kInvalidArgument, "max_new_tokens must be at least 1");
  }
  if (prompt.empty()) throw Error(ErrorCode::kEmptyInput, "generation needs a non-empty prompt");
  if (prompt.size() + 1 > config_.context_window) {
    throw Error(ErrorCode::kContextOverflow,
                "prompt uses " + std::to_string(prompt.size()) + " of " +
                    std::to_string(config_.context_window) +
                    " context tokens, leaving no room for a reply");
  }
  validate_plan(plan);
  const SteeringPlan* active = plan != nullptr && !plan->empty() ? plan : nullptr;

  GenerationResult out;
  out.prompt_tokens = prompt.size();
  DecodeState state(config_, std::min(config_.context_window, prompt.size() + params.max_new_tokens));
  std::vector<float> logits(config_.vocab_size);
  for (std::size_t i = 0; i + 1 < prompt.size(); ++i) step(state, prompt[i], nullptr, nullptr, {});
  step(state, prompt.back(), active, nullptr, logits);

  const auto eos = static_cast<std::size_t>(tokenizer_->eos_id());
  while (true) {
    if (out.tokens.size() < params.min_new_tokens && eos < logits.size()) {
      logits[eos] = -std::numeric_limits<float>::infinity();
    }
    const TokenId next = argmax(logits);
    if (next == tokenizer_->eos_id()) {
      out.stopped_on_eos = true;
      break;
    }
    out.tokens.push_back(next);
    if (out.tokens.size() >= params.max_new_tokens || state.len + 1 >= config_.context_window) break;
    step(state, next, active, nullptr, logits);
  }
  out.text = detokenize(out.tokens);
  return out;
}

std::vector<LensEntry> Engine::logit_lens(const Conversation& conversation,
                                          std::string_view system_prompt) const {
  if (conversation.messages.empty()) {
    throw Error(ErrorCode::kEmptyInput, "logit lens needs a non-empty conversation");
  }
  return logit_lens_tokens(template_for(conversation, system_prompt).tokens);
}

std::vector<LensEntry> Engine::logit_lens_tokens(std::span<const TokenId> tokens) const {
  if (tokens.empty()) throw Error(ErrorCode::kEmptyInput, "logit lens needs input tokens");
  TapRequest taps;
  for (int l = 0; l < n_layers(); ++l) taps.layers.push_back(l);
  taps.positions = {tokens.size() - 1};
  const auto fwd = forward_with_taps(tokens, taps);
  std::vector<LensEntry> out;
  std::vector<float> logits(config_.vocab_size);
  for (int l = 0; l < n_layers(); ++l) {
    unembed(fwd.trace.at(l, tokens.size() - 1), logits);
    const TokenId t = argmax(logits);
    out.push_back({l, t, detokenize(std::span<const TokenId>(&t, 1))});
  }
  return out;
}

}  // namespace usermodel::model
