#include "usermodel/probes/probe.hpp"

#include <cmath>
#include <fstream>
#include <iterator>

#include "usermodel/error.hpp"
#include "usermodel/simd/kernels.hpp"
#include "usermodel/util/container.hpp"
#include "usermodel/util/io.hpp"

namespace usermodel::probes {

double Probe::logit(std::span<const float> x) const {
  return static_cast<double>(simd::dot(weights, x)) + bias;
}

double Probe::score(std::span<const float> x) const {
  return 1.0 / (1.0 + std::exp(-logit(x)));
}

void ProbeSet::add(Probe probe) {
  ProbeKey key{probe.attribute, probe.subcategory, probe.layer, probe.kind};
  probes.insert_or_assign(std::move(key), std::move(probe));
}

const Probe* ProbeSet::find(Attribute a, std::string_view subcategory, int layer,
                            RepKind kind) const {
  auto it = probes.find(ProbeKey{a, std::string(subcategory), layer, kind});
  return it == probes.end() ? nullptr : &it->second;
}

const Probe& ProbeSet::at(Attribute a, std::string_view subcategory, int layer,
                          RepKind kind) const {
  if (const Probe* p = find(a, subcategory, layer, kind)) return *p;
  throw Error(ErrorCode::kMissingProbe,
              "no " + std::string(repr::rep_kind_name(kind)) + " probe for " +
                  std::string(attribute_name(a)) + "/" + std::string(subcategory) + " at layer " +
                  std::to_string(layer));
}

std::optional<int> ProbeSet::selected(Attribute a, RepKind kind) const {
  auto it = selected_layer.find({a, kind});
  if (it == selected_layer.end()) return std::nullopt;
  return it->second;
}

std::vector<const Probe*> ProbeSet::attribute_probes(Attribute a, int layer, RepKind kind) const {
  std::vector<const Probe*> out;
  for (const auto& sub : subcategories(a)) out.push_back(&at(a, sub, layer, kind));
  return out;
}

void ProbeSet::merge(const ProbeSet& other) {
  if (!model_fingerprint.empty() && !other.model_fingerprint.empty() &&
      model_fingerprint != other.model_fingerprint) {
    throw Error(ErrorCode::kFingerprintMismatch, "cannot merge probe sets from different models");
  }
  if (model_fingerprint.empty()) model_fingerprint = other.model_fingerprint;
  if (d_model == 0) d_model = other.d_model;
  for (const auto& [key, probe] : other.probes) probes.insert_or_assign(key, probe);
  for (const auto& [key, layer] : other.selected_layer) selected_layer.insert_or_assign(key, layer);
  for (const auto& [key, ids] : other.validation_ids) validation_ids.insert_or_assign(key, ids);
}

nlohmann::json template_texts() {
  nlohmann::json reading = nlohmann::json::object();
  for (Attribute a : kAllAttributes) reading[std::string(attribute_name(a))] = repr::reading_query(a);
  return {{"reading", reading},
          {"control", "last token of the last user message"},
          {"tap_site", "residual stream at the output of each transformer block"}};
}

std::vector<char> encode_probe_set(const ProbeSet& set) {
  nlohmann::json scheme = nlohmann::json::object();
  for (Attribute a : kAllAttributes) scheme[std::string(attribute_name(a))] = subcategories(a);
  nlohmann::json selected = nlohmann::json::array();
  for (const auto& [key, layer] : set.selected_layer) {
    selected.push_back({{"attribute", attribute_name(key.first)},
                        {"kind", repr::rep_kind_name(key.second)},
                        {"layer", layer}});
  }
  nlohmann::json val_ids = nlohmann::json::object();
  for (const auto& [a, ids] : set.validation_ids) val_ids[std::string(attribute_name(a))] = ids;

  nlohmann::json entries = nlohmann::json::array();
  std::vector<float> payload;
  for (const auto& [key, p] : set.probes) {
    if (p.weights.size() != set.d_model) {
      throw Error(ErrorCode::kInvalidArgument, "probe weights do not match d_model");
    }
    entries.push_back({{"attribute", attribute_name(p.attribute)},
                       {"subcategory", p.subcategory},
                       {"layer", p.layer},
                       {"kind", repr::rep_kind_name(p.kind)},
                       {"bias", p.bias},
                       {"val_accuracy", p.val_accuracy},
                       {"epochs", p.epochs},
                       {"weights_offset", payload.size()}});
    payload.insert(payload.end(), p.weights.begin(), p.weights.end());
  }
  nlohmann::json header{{"format", "usermodel-probes"},
                        {"version", ProbeSet::kFormatVersion},
                        {"model_fingerprint", set.model_fingerprint},
                        {"d_model", set.d_model},
                        {"scheme", scheme},
                        {"template_texts", template_texts()},
                        {"selected_layers", selected},
                        {"validation_ids", val_ids},
                        {"entries", entries}};
  return util::encode_container(header, payload);
}

ProbeSet decode_probe_set(std::span<const char> bytes) {
  const auto c = util::decode_container(bytes);
  const auto& h = c.header;
  if (h.value("format", std::string()) != "usermodel-probes") {
    throw Error(ErrorCode::kMalformedFile, "not a probe-set file");
  }
  if (!h.contains("version") || !h.at("version").is_number_integer() ||
      h.at("version").get<int>() != ProbeSet::kFormatVersion) {
    throw Error(ErrorCode::kUnsupportedVersion,
                "unsupported probe-set version " + (h.contains("version") ? h.at("version").dump() : "<missing>"));
  }
  try {
    ProbeSet set;
    set.model_fingerprint = h.at("model_fingerprint").get<std::string>();
    set.d_model = h.at("d_model").get<std::size_t>();
    if (set.d_model == 0) throw Error(ErrorCode::kMalformedFile, "probe set has d_model 0");
    const auto& entries = h.at("entries");
    if (entries.size() * set.d_model != c.payload.size()) {
      throw Error(ErrorCode::kMalformedFile, "probe payload does not match d_model x entries");
    }
    for (const auto& e : entries) {
      Probe p;
      p.attribute = parse_attribute(e.at("attribute").get<std::string>());
      p.subcategory = e.at("subcategory").get<std::string>();
      if (!is_subcategory(p.attribute, p.subcategory)) {
        throw Error(ErrorCode::kMalformedFile, "unknown subcategory " + p.subcategory);
      }
      p.layer = e.at("layer").get<int>();
      p.kind = repr::parse_rep_kind(e.at("kind").get<std::string>());
      p.bias = e.at("bias").get<double>();
      p.val_accuracy = e.at("val_accuracy").get<double>();
      p.epochs = e.value("epochs", std::size_t{0});
      const auto offset = e.at("weights_offset").get<std::size_t>();
      if (offset + set.d_model > c.payload.size()) {
        throw Error(ErrorCode::kMalformedFile, "probe weights_offset out of range");
      }
      const auto first = c.payload.begin() + static_cast<std::ptrdiff_t>(offset);
      p.weights.assign(first, first + static_cast<std::ptrdiff_t>(set.d_model));
      set.add(std::move(p));
    }
    for (const auto& s : h.at("selected_layers")) {
      set.selected_layer[{parse_attribute(s.at("attribute").get<std::string>()),
                          repr::parse_rep_kind(s.at("kind").get<std::string>())}] =
          s.at("layer").get<int>();
    }
    if (h.contains("validation_ids")) {
      for (const auto& [name, ids] : h.at("validation_ids").items()) {
        set.validation_ids[parse_attribute(name)] = ids.get<std::vector<std::string>>();
      }
    }
    return set;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kMalformedFile, std::string("probe-set manifest: ") + e.what());
  }
}

void save_probe_set(const ProbeSet& set, const std::filesystem::path& path) {
  const auto bytes = encode_probe_set(set);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

ProbeSet load_probe_set(const std::filesystem::path& path,
                        const std::optional<std::string>& expected_fingerprint) {
  const auto text = util::read_text(path);
  auto set = decode_probe_set(std::span<const char>(text.data(), text.size()));
  if (expected_fingerprint && set.model_fingerprint != *expected_fingerprint) {
    throw Error(ErrorCode::kFingerprintMismatch,
                path.string() + " was trained on model " + set.model_fingerprint +
                    " but the engine is " + *expected_fingerprint);
  }
  return set;
}

}  // namespace usermodel::probes
