#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "usermodel/probes/probe.hpp"

namespace usermodel::probes {

// Row-major n x dim feature matrix with one label per row.
struct LabeledSet {
  std::size_t dim = 0;
  std::vector<float> features;
  std::vector<std::string> labels;

  std::size_t size() const { return labels.size(); }
  std::span<const float> row(std::size_t i) const {
    return std::span<const float>(features).subspan(i * dim, dim);
  }
  void add(std::span<const float> x, std::string label);
};

struct TrainConfig {
  double l2_strength = 1e-3;
  std::size_t max_epochs = 2000;
  double learning_rate = 0.1;
  double convergence_tol = 1e-7;
  double train_fraction = 0.8;  // validation gets the rest
  std::uint64_t seed = 0;

  void validate() const;
};

struct Split {
  std::vector<std::size_t> train;       // ascending indices
  std::vector<std::size_t> validation;  // ascending indices
};

// Per label, round(count * train_fraction) clamped to [1, count - 1] goes to
// the train fold. Labels with fewer than two samples are an error.
Split stratified_split(std::span<const std::string> labels, double train_fraction,
                       std::uint64_t seed);

// Full-batch gradient descent on mean logistic loss + (l2/2)|w|^2 from zero
// initialization. Stops when the loss improves by less than
// convergence_tol or after max_epochs.
Probe train_probe(const LabeledSet& train, std::string_view target, const TrainConfig& config);

// Fraction of rows where (score >= 0.5) == (label == probe.subcategory).
double evaluate_probe(const Probe& probe, const LabeledSet& samples);

// Mean of per-class recall. `classes` defaults to the distinct labels; a
// listed class with no true instance is an error.
double balanced_accuracy(std::span<const std::string> predictions,
                         std::span<const std::string> labels,
                         std::optional<std::vector<std::string>> classes = std::nullopt);

struct LabeledSample {
  std::string id;
  std::string label;
  repr::RepresentationSample rep;
};

struct AttributeData {
  Attribute attribute = Attribute::kAge;
  std::vector<LabeledSample> samples;
};

struct LayerAccuracy {
  Attribute attribute;
  int layer;
  RepKind kind;
  double mean_accuracy;
  std::vector<double> per_subcategory;  // scheme order
};

struct SuiteResult {
  ProbeSet set;
  std::vector<LayerAccuracy> table;
};

// One probe per (attribute, subcategory, layer) on a shared stratified split;
// the selected layer maximizes mean validation accuracy (lowest layer on
// ties).
SuiteResult train_probe_suite(std::span<const AttributeData> data, RepKind kind,
                              const TrainConfig& config, const std::string& model_fingerprint);

// Layer-level feature matrix for a set of samples.
LabeledSet layer_set(std::span<const LabeledSample> samples, std::span<const std::size_t> indices,
                     int layer);

std::string format_accuracy_table(std::span<const LayerAccuracy> rows);

}  // namespace usermodel::probes
