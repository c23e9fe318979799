#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "usermodel/model/engine.hpp"
#include "usermodel/probes/probe.hpp"

namespace usermodel::probes {

inline constexpr double kDefaultUnknownThreshold = 0.5;

struct AttributeReading {
  Attribute attribute = Attribute::kAge;
  std::optional<std::string> top;             // nullopt reads as "unknown"
  std::map<std::string, double> confidences;  // normalized, sums to 1
  std::map<std::string, double> raw;          // per-probe sigma scores

  bool unknown() const { return !top.has_value(); }
  nlohmann::json to_json() const;
};

struct UserModelSnapshot {
  std::vector<AttributeReading> attributes;  // kAllAttributes order

  const AttributeReading& at(Attribute a) const;
  nlohmann::json to_json() const;
  static UserModelSnapshot from_json(const nlohmann::json& j);
  static UserModelSnapshot all_unknown();
};

// Scores one attribute's probes (scheme order) against a residual vector.
// top is the argmax of the normalized scores (lowest index on ties) unless
// the largest raw score is below `unknown_threshold`.
AttributeReading reading_from_vector(Attribute attribute, std::span<const Probe* const> probes,
                                     std::span<const float> x, double unknown_threshold);

// Every attribute is Unknown when the conversation has no user message.
UserModelSnapshot read_user_model(const model::Engine& engine,
                                  const model::Conversation& conversation,
                                  const ProbeSet& probe_set,
                                  double unknown_threshold = kDefaultUnknownThreshold);

}  // namespace usermodel::probes
