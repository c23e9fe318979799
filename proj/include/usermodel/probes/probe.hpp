#pragma once

#include <compare>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "usermodel/probes/scheme.hpp"
#include "usermodel/repr/representation.hpp"

namespace usermodel::probes {

using repr::RepKind;

// One-vs-rest linear logistic classifier on one layer's residual stream.
struct Probe {
  Attribute attribute = Attribute::kAge;
  std::string subcategory;
  int layer = 0;
  std::vector<float> weights;
  double bias = 0.0;
  RepKind kind = RepKind::kReading;
  double val_accuracy = 0.0;
  std::size_t epochs = 0;

  double logit(std::span<const float> x) const;
  // sigma(<x, weights> + bias)
  double score(std::span<const float> x) const;

  bool operator==(const Probe&) const = default;
};

struct ProbeKey {
  Attribute attribute;
  std::string subcategory;
  int layer;
  RepKind kind;

  auto operator<=>(const ProbeKey&) const = default;
};

class ProbeSet {
 public:
  static constexpr int kFormatVersion = 1;

  std::string model_fingerprint;
  std::size_t d_model = 0;
  std::map<ProbeKey, Probe> probes;
  std::map<std::pair<Attribute, RepKind>, int> selected_layer;
  // Source conversation ids of the held-out fold, per attribute.
  std::map<Attribute, std::vector<std::string>> validation_ids;

  void add(Probe probe);
  const Probe* find(Attribute a, std::string_view subcategory, int layer, RepKind kind) const;
  // Throws Error(kMissingProbe).
  const Probe& at(Attribute a, std::string_view subcategory, int layer, RepKind kind) const;
  std::optional<int> selected(Attribute a, RepKind kind) const;
  // Probes of one attribute/layer/kind in scheme order; throws kMissingProbe.
  std::vector<const Probe*> attribute_probes(Attribute a, int layer, RepKind kind) const;

  // Adds every probe and selection of `other`; fingerprints must agree.
  void merge(const ProbeSet& other);

  bool operator==(const ProbeSet&) const = default;
};

// Texts the probes were trained against, recorded in every probe file.
nlohmann::json template_texts();

// Container manifest {version, model_fingerprint, d_model, scheme,
// template_texts, selected_layers, validation_ids, entries:[{attribute,
// subcategory, layer, kind, bias, val_accuracy, epochs, weights_offset}]}
// followed by the float32 weights. weights_offset counts floats.
std::vector<char> encode_probe_set(const ProbeSet& set);
ProbeSet decode_probe_set(std::span<const char> bytes);
void save_probe_set(const ProbeSet& set, const std::filesystem::path& path);
// When `expected_fingerprint` is given, a different fingerprint is an error.
ProbeSet load_probe_set(const std::filesystem::path& path,
                        const std::optional<std::string>& expected_fingerprint = std::nullopt);

}  // namespace usermodel::probes
