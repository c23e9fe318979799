#include "usermodel/repr/representation.hpp"

#include "usermodel/error.hpp"
#include "usermodel/util/container.hpp"
#include "usermodel/util/hash.hpp"

namespace usermodel::repr {

using model::Conversation;
using model::Engine;

std::string_view rep_kind_name(RepKind kind) {
  return kind == RepKind::kReading ? "reading" : "control";
}

RepKind parse_rep_kind(std::string_view name) {
  if (name == "reading") return RepKind::kReading;
  if (name == "control") return RepKind::kControl;
  throw Error(ErrorCode::kInvalidArgument, "unknown probe kind '" + std::string(name) + "'");
}

std::string reading_query(Attribute attribute) {
  return "I think the " + std::string(attribute_display(attribute)) + " of this user is";
}

namespace {

RepresentationSample read_all_layers(const Engine& engine, std::span<const model::TokenId> tokens,
                                     std::size_t position) {
  model::TapRequest taps;
  for (int l = 0; l < engine.n_layers(); ++l) taps.layers.push_back(l);
  taps.positions = {position};
  // Causal masking: positions after the tap cannot influence it.
  auto fwd = engine.forward_with_taps(tokens.first(position + 1), taps);
  RepresentationSample s;
  s.position = position;
  for (int l = 0; l < engine.n_layers(); ++l) {
    s.vectors[l] = std::move(fwd.trace.entries.at({l, position}));
  }
  return s;
}

std::size_t require_user(const Conversation& conversation) {
  const auto last = conversation.last_user_index();
  if (!last) {
    throw Error(ErrorCode::kEmptyInput, "representation extraction needs at least one user message");
  }
  return *last;
}

}  // namespace

RepresentationSample extract_reading_rep(const Engine& engine, const Conversation& conversation,
                                         Attribute attribute) {
  const std::size_t last_user = require_user(conversation);
  Conversation query;
  query.messages.assign(conversation.messages.begin(),
                        conversation.messages.begin() + static_cast<std::ptrdiff_t>(last_user) + 1);
  query.messages.push_back({model::Role::kAssistant, reading_query(attribute)});
  const auto prompt = engine.template_for(query);
  auto s = read_all_layers(engine, prompt.tokens, prompt.tokens.size() - 1);
  s.kind = RepKind::kReading;
  s.attribute = attribute;
  return s;
}

RepresentationSample extract_control_rep(const Engine& engine, const Conversation& conversation) {
  const std::size_t last_user = require_user(conversation);
  Conversation prefix;
  prefix.messages.assign(conversation.messages.begin(),
                         conversation.messages.begin() + static_cast<std::ptrdiff_t>(last_user) + 1);
  const auto prompt = engine.template_for(prefix);
  const auto& span = prompt.spans.back();
  if (span.end == span.begin) {
    throw Error(ErrorCode::kEmptyInput, "last user message has no tokens");
  }
  auto s = read_all_layers(engine, prompt.tokens, span.end - 1);
  s.kind = RepKind::kControl;
  return s;
}

ActivationCache::ActivationCache(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
}

std::filesystem::path ActivationCache::path_for(const std::string& fingerprint,
                                                const Conversation& conversation, RepKind kind,
                                                Attribute attribute) const {
  util::Fnv1a h;
  h.update(fingerprint).update("|").update(conversation.content_hash()).update("|");
  h.update(rep_kind_name(kind));
  // Control samples do not depend on the attribute.
  if (kind == RepKind::kReading) h.update("|").update(attribute_name(attribute));
  return dir_ / (h.hex() + ".bin");
}

RepresentationSample ActivationCache::get_or_extract(const Engine& engine,
                                                     const Conversation& conversation,
                                                     RepKind kind, Attribute attribute) {
  const auto path = path_for(engine.fingerprint(), conversation, kind, attribute);
  const std::size_t d = engine.d_model();
  if (std::filesystem::exists(path)) {
    auto c = util::read_container(path);
    if (c.header.value("model_fingerprint", std::string()) != engine.fingerprint() ||
        c.header.value("d_model", std::size_t{0}) != d ||
        c.header.value("kind", std::string()) != rep_kind_name(kind)) {
      throw Error(ErrorCode::kMalformedFile, "activation cache entry " + path.string() +
                                                 " does not match the engine");
    }
    const auto layers = c.header.at("layers").get<std::vector<int>>();
    if (c.payload.size() != layers.size() * d) {
      throw Error(ErrorCode::kMalformedFile, "activation cache entry " + path.string() + " is truncated");
    }
    RepresentationSample s;
    s.kind = kind;
    s.attribute = attribute;
    s.position = c.header.at("position").get<std::size_t>();
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const auto first = c.payload.begin() + static_cast<std::ptrdiff_t>(i * d);
      s.vectors[layers[i]] = std::vector<float>(first, first + static_cast<std::ptrdiff_t>(d));
    }
    ++hits_;
    return s;
  }
  ++misses_;
  auto s = kind == RepKind::kReading ? extract_reading_rep(engine, conversation, attribute)
                                     : extract_control_rep(engine, conversation);
  s.attribute = attribute;
  std::vector<int> layers;
  std::vector<float> payload;
  for (const auto& [layer, vec] : s.vectors) {
    layers.push_back(layer);
    payload.insert(payload.end(), vec.begin(), vec.end());
  }
  util::write_container(path,
                        {{"model_fingerprint", engine.fingerprint()},
                         {"d_model", d},
                         {"layers", layers},
                         {"kind", rep_kind_name(kind)},
                         {"attribute", attribute_name(attribute)},
                         {"position", s.position},
                         {"conversation_hash", conversation.content_hash()}},
                        payload);
  return s;
}

}  // namespace usermodel::repr
