#include "usermodel/probes/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <random>
#include <set>

#include "usermodel/error.hpp"
#include "usermodel/simd/kernels.hpp"
#include "usermodel/util/random.hpp"

namespace usermodel::probes {

void LabeledSet::add(std::span<const float> x, std::string label) {
  if (dim == 0) dim = x.size();
  if (x.size() != dim) throw Error(ErrorCode::kInvalidArgument, "feature length mismatch");
  features.insert(features.end(), x.begin(), x.end());
  labels.push_back(std::move(label));
}

void TrainConfig::validate() const {
  if (!(l2_strength >= 0.0) || !(learning_rate > 0.0) || !(convergence_tol > 0.0) ||
      max_epochs == 0 || !(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "invalid probe training config");
  }
}

Split stratified_split(std::span<const std::string> labels, double train_fraction,
                       std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "train fraction must be in (0, 1)");
  }
  std::map<std::string, std::vector<std::size_t>> by_label;
  for (std::size_t i = 0; i < labels.size(); ++i) by_label[labels[i]].push_back(i);
  std::mt19937_64 rng(seed);
  Split split;
  for (auto& [label, idx] : by_label) {
    if (idx.size() < 2) {
      throw Error(ErrorCode::kStratification,
                  "subcategory '" + label + "' has " + std::to_string(idx.size()) +
                      " sample(s); stratification needs at least 2");
    }
    util::shuffle(idx.begin(), idx.end(), rng);
    auto n_train = static_cast<std::size_t>(
        std::floor(static_cast<double>(idx.size()) * train_fraction + 0.5));
    n_train = std::clamp<std::size_t>(n_train, 1, idx.size() - 1);
    split.train.insert(split.train.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
    split.validation.insert(split.validation.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_train),
                            idx.end());
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.validation.begin(), split.validation.end());
  return split;
}

namespace {

double sigmoid(double t) { return 1.0 / (1.0 + std::exp(-t)); }

double softplus(double t) { return t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t)); }

}  // namespace

Probe train_probe(const LabeledSet& train, std::string_view target, const TrainConfig& config) {
  config.validate();
  const std::size_t n = train.size();
  std::size_t positives = 0;
  for (const auto& l : train.labels) positives += l == target ? 1 : 0;
  if (n == 0 || positives == 0 || positives == n) {
    throw Error(ErrorCode::kDegenerateTraining,
                "training set for '" + std::string(target) + "' has a single class (" +
                    std::to_string(positives) + " positive of " + std::to_string(n) + ")");
  }
  const std::size_t d = train.dim;
  const auto& K = simd::kernels();
  std::vector<float> w(d, 0.0f), grad(d);
  std::vector<char> positive(n);
  for (std::size_t i = 0; i < n; ++i) positive[i] = train.labels[i] == target ? 1 : 0;
  double b = 0.0;
  const double inv_n = 1.0 / static_cast<double>(n);
  const auto lr = static_cast<float>(config.learning_rate);
  const auto l2 = static_cast<float>(config.l2_strength);

  double prev_loss = std::numeric_limits<double>::infinity();
  std::size_t epochs = 0;
  for (std::size_t epoch = 0; epoch < config.max_epochs; ++epoch) {
    std::fill(grad.begin(), grad.end(), 0.0f);
    double loss = 0.0, grad_b = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const float* x = train.features.data() + i * d;
      const double z = static_cast<double>(K.dot(w.data(), x, d)) + b;
      // Written so that flipping every label negates the residual exactly.
      const double r = positive[i] ? -sigmoid(-z) : sigmoid(z);
      loss += positive[i] ? softplus(-z) : softplus(z);
      grad_b += r;
      K.axpy(static_cast<float>(r * inv_n), x, grad.data(), d);
    }
    loss = loss * inv_n + 0.5 * config.l2_strength * static_cast<double>(K.dot(w.data(), w.data(), d));
    if (prev_loss - loss < config.convergence_tol) break;
    prev_loss = loss;
    K.axpy(l2, w.data(), grad.data(), d);
    K.axpy(-lr, grad.data(), w.data(), d);
    b -= config.learning_rate * grad_b * inv_n;
    epochs = epoch + 1;
  }
  Probe p;
  p.subcategory = std::string(target);
  p.weights = std::move(w);
  p.bias = b;
  p.epochs = epochs;
  return p;
}

double evaluate_probe(const Probe& probe, const LabeledSet& samples) {
  if (samples.size() == 0) throw Error(ErrorCode::kEmptyInput, "cannot evaluate on zero samples");
  if (samples.dim != probe.weights.size()) {
    throw Error(ErrorCode::kInvalidArgument, "sample width does not match probe weights");
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const bool predicted = probe.score(samples.row(i)) >= 0.5;
    const bool actual = samples.labels[i] == probe.subcategory;
    correct += predicted == actual ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(samples.size());
}

double balanced_accuracy(std::span<const std::string> predictions,
                         std::span<const std::string> labels,
                         std::optional<std::vector<std::string>> classes) {
  if (predictions.size() != labels.size()) {
    throw Error(ErrorCode::kInvalidArgument, "predictions and labels differ in length");
  }
  if (labels.empty()) throw Error(ErrorCode::kEmptyInput, "balanced accuracy of zero samples");
  std::vector<std::string> cls;
  if (classes) {
    cls = *classes;
  } else {
    std::set<std::string> distinct(labels.begin(), labels.end());
    cls.assign(distinct.begin(), distinct.end());
  }
  double total = 0.0;
  for (const auto& c : cls) {
    std::size_t support = 0, hit = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] != c) continue;
      ++support;
      hit += predictions[i] == c ? 1 : 0;
    }
    if (support == 0) {
      throw Error(ErrorCode::kUndefinedClass, "class '" + c + "' has no true instances");
    }
    total += static_cast<double>(hit) / static_cast<double>(support);
  }
  return total / static_cast<double>(cls.size());
}

LabeledSet layer_set(std::span<const LabeledSample> samples, std::span<const std::size_t> indices,
                     int layer) {
  LabeledSet set;
  for (std::size_t i : indices) {
    const auto& s = samples[i];
    auto it = s.rep.vectors.find(layer);
    if (it == s.rep.vectors.end()) {
      throw Error(ErrorCode::kInvalidArgument,
                  "sample " + s.id + " has no vector for layer " + std::to_string(layer));
    }
    set.add(it->second, s.label);
  }
  return set;
}

SuiteResult train_probe_suite(std::span<const AttributeData> data, RepKind kind,
                              const TrainConfig& config, const std::string& model_fingerprint) {
  config.validate();
  SuiteResult result;
  result.set.model_fingerprint = model_fingerprint;
  for (const auto& attr : data) {
    const std::string attr_name(attribute_name(attr.attribute));
    if (attr.samples.empty()) {
      throw Error(ErrorCode::kEmptyInput, "no samples for attribute " + attr_name);
    }
    std::vector<std::string> labels;
    for (const auto& s : attr.samples) {
      if (!is_subcategory(attr.attribute, s.label)) {
        throw Error(ErrorCode::kInvalidArgument,
                    "sample " + s.id + " has label '" + s.label + "' outside the " + attr_name + " scheme");
      }
      labels.push_back(s.label);
    }
    const Split split = stratified_split(labels, config.train_fraction, config.seed);
    auto& val_ids = result.set.validation_ids[attr.attribute];
    val_ids.clear();
    for (std::size_t i : split.validation) val_ids.push_back(attr.samples[i].id);

    std::vector<int> layers;
    for (const auto& [layer, vec] : attr.samples.front().rep.vectors) {
      layers.push_back(layer);
      if (result.set.d_model == 0) result.set.d_model = vec.size();
    }
    int best_layer = layers.empty() ? 0 : layers.front();
    double best_mean = -1.0;
    for (int layer : layers) {
      const LabeledSet train = layer_set(attr.samples, split.train, layer);
      const LabeledSet val = layer_set(attr.samples, split.validation, layer);
      LayerAccuracy row{attr.attribute, layer, kind, 0.0, {}};
      for (const auto& sub : subcategories(attr.attribute)) {
        Probe p;
        try {
          p = train_probe(train, sub, config);
        } catch (const Error& e) {
          throw Error(e.code(), "(" + attr_name + ", " + sub + ", layer " + std::to_string(layer) +
                                    "): " + e.what());
        }
        p.attribute = attr.attribute;
        p.layer = layer;
        p.kind = kind;
        p.val_accuracy = evaluate_probe(p, val);
        row.per_subcategory.push_back(p.val_accuracy);
        result.set.add(std::move(p));
      }
      double sum = 0.0;
      for (double a : row.per_subcategory) sum += a;
      row.mean_accuracy = sum / static_cast<double>(row.per_subcategory.size());
      if (row.mean_accuracy > best_mean) {
        best_mean = row.mean_accuracy;
        best_layer = layer;
      }
      result.table.push_back(std::move(row));
    }
    result.set.selected_layer[{attr.attribute, kind}] = best_layer;
  }
  return result;
}

std::string format_accuracy_table(std::span<const LayerAccuracy> rows) {
  std::string out = "attribute  kind     layer  mean    per-subcategory\n";
  char buf[64];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%-10s %-8s %5d  %.4f ", std::string(attribute_name(r.attribute)).c_str(),
                  std::string(repr::rep_kind_name(r.kind)).c_str(), r.layer, r.mean_accuracy);
    out += buf;
    const auto& subs = subcategories(r.attribute);
    for (std::size_t i = 0; i < r.per_subcategory.size(); ++i) {
      std::snprintf(buf, sizeof(buf), " %s=%.4f", subs[i].c_str(), r.per_subcategory[i]);
      out += buf;
    }
    out += "\n";
  }
  return out;
}

}  // namespace usermodel::probes
