#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "usermodel/model/engine.hpp"
#include "usermodel/probes/scheme.hpp"

namespace usermodel::repr {

enum class RepKind { kReading, kControl };

std::string_view rep_kind_name(RepKind kind);
RepKind parse_rep_kind(std::string_view name);

struct RepresentationSample {
  std::map<int, std::vector<float>> vectors;  // layer -> residual at the tap position
  Attribute attribute = Attribute::kAge;      // reading: the queried attribute
  std::optional<std::string> label;
  RepKind kind = RepKind::kReading;
  std::string source_conversation_id;
  std::size_t position = 0;                   // token index the vectors were read at
};

// "I think the {attribute} of this user is"
std::string reading_query(Attribute attribute);

// Truncates after the last user message, appends the reading query as an
// assistant message and reads every layer's residual at its last token.
RepresentationSample extract_reading_rep(const model::Engine& engine,
                                         const model::Conversation& conversation,
                                         Attribute attribute);

// Every layer's residual at the last content token of the last user message.
RepresentationSample extract_control_rep(const model::Engine& engine,
                                         const model::Conversation& conversation);

// On-disk cache of extracted samples keyed by
// (model fingerprint, conversation hash, kind, attribute). File format:
// container header {model_fingerprint, d_model, layers, kind, attribute,
// position, conversation_hash} with one d_model block per layer.
class ActivationCache {
 public:
  explicit ActivationCache(std::filesystem::path dir);

  RepresentationSample get_or_extract(const model::Engine& engine,
                                      const model::Conversation& conversation, RepKind kind,
                                      Attribute attribute);

  std::size_t hits() const { return hits_; }
  std::size_t misses() const { return misses_; }
  std::filesystem::path path_for(const std::string& fingerprint,
                                 const model::Conversation& conversation, RepKind kind,
                                 Attribute attribute) const;

 private:
  std::filesystem::path dir_;
  std::size_t hits_ = 0;
  std::size_t misses_ = 0;
};

}  // namespace usermodel::repr
