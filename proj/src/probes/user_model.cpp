#include "usermodel/probes/user_model.hpp"

#include "usermodel/error.hpp"

namespace usermodel::probes {

nlohmann::json AttributeReading::to_json() const {
  return {{"top", top.value_or("unknown")}, {"confidences", confidences}, {"raw", raw}};
}

const AttributeReading& UserModelSnapshot::at(Attribute a) const {
  for (const auto& r : attributes) {
    if (r.attribute == a) return r;
  }
  throw Error(ErrorCode::kInvalidArgument,
              "snapshot has no reading for " + std::string(attribute_name(a)));
}

nlohmann::json UserModelSnapshot::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& r : attributes) j[std::string(attribute_name(r.attribute))] = r.to_json();
  return j;
}

UserModelSnapshot UserModelSnapshot::from_json(const nlohmann::json& j) {
  UserModelSnapshot s;
  for (Attribute a : kAllAttributes) {
    const auto& e = j.at(std::string(attribute_name(a)));
    AttributeReading r;
    r.attribute = a;
    const auto top = e.at("top").get<std::string>();
    if (top != "unknown") r.top = top;
    r.confidences = e.at("confidences").get<std::map<std::string, double>>();
    r.raw = e.at("raw").get<std::map<std::string, double>>();
    s.attributes.push_back(std::move(r));
  }
  return s;
}

UserModelSnapshot UserModelSnapshot::all_unknown() {
  UserModelSnapshot s;
  for (Attribute a : kAllAttributes) {
    AttributeReading r;
    r.attribute = a;
    const auto& subs = subcategories(a);
    for (const auto& sub : subs) {
      r.confidences[sub] = 1.0 / static_cast<double>(subs.size());
      r.raw[sub] = 0.0;
    }
    s.attributes.push_back(std::move(r));
  }
  return s;
}

AttributeReading reading_from_vector(Attribute attribute, std::span<const Probe* const> probes,
                                     std::span<const float> x, double unknown_threshold) {
  const auto& subs = subcategories(attribute);
  if (probes.size() != subs.size()) {
    throw Error(ErrorCode::kMissingProbe, "expected one probe per subcategory of " +
                                              std::string(attribute_name(attribute)));
  }
  AttributeReading r;
  r.attribute = attribute;
  std::vector<double> raw(subs.size());
  double total = 0.0, max_raw = 0.0;
  for (std::size_t i = 0; i < subs.size(); ++i) {
    raw[i] = probes[i]->score(x);
    total += raw[i];
    max_raw = std::max(max_raw, raw[i]);
  }
  std::size_t best = 0;
  for (std::size_t i = 0; i < subs.size(); ++i) {
    const double norm = total > 0.0 ? raw[i] / total : 1.0 / static_cast<double>(subs.size());
    r.raw[subs[i]] = raw[i];
    r.confidences[subs[i]] = norm;
    if (raw[i] > raw[best]) best = i;
  }
  if (max_raw >= unknown_threshold) r.top = subs[best];
  return r;
}

UserModelSnapshot read_user_model(const model::Engine& engine,
                                  const model::Conversation& conversation,
                                  const ProbeSet& probe_set, double unknown_threshold) {
  for (Attribute a : kAllAttributes) {
    if (!probe_set.selected(a, RepKind::kReading)) {
      throw Error(ErrorCode::kMissingProbe, "probe set has no selected reading layer for " +
                                                std::string(attribute_name(a)));
    }
  }
  if (conversation.user_turns() == 0) return UserModelSnapshot::all_unknown();
  UserModelSnapshot s;
  for (Attribute a : kAllAttributes) {
    const int layer = *probe_set.selected(a, RepKind::kReading);
    const auto probes = probe_set.attribute_probes(a, layer, RepKind::kReading);
    const auto rep = repr::extract_reading_rep(engine, conversation, a);
    s.attributes.push_back(reading_from_vector(a, probes, rep.vectors.at(layer), unknown_threshold));
  }
  return s;
}

}  // namespace usermodel::probes
