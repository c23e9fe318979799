#include "usermodel/steering/steering.hpp"

#include <cmath>

#include "usermodel/error.hpp"
#include "usermodel/simd/kernels.hpp"

namespace usermodel::steering {

using probes::Probe;
using probes::ProbeSet;
using repr::RepKind;

std::string_view pin_mode_name(PinMode mode) {
  return mode == PinMode::kPin100 ? "pin-100" : "pin-0";
}

PinMode parse_pin_mode(std::string_view name) {
  if (name == "pin-100") return PinMode::kPin100;
  if (name == "pin-0") return PinMode::kPin0;
  throw Error(ErrorCode::kInvalidArgument, "unknown pin mode '" + std::string(name) + "'");
}

nlohmann::json PinState::to_json() const {
  return {{"attribute", attribute_name(attribute)},
          {"subcategory", subcategory},
          {"mode", pin_mode_name(mode)}};
}

void validate_pins(std::span<const PinState> pins) {
  for (std::size_t i = 0; i < pins.size(); ++i) {
    subcategory_index(pins[i].attribute, pins[i].subcategory);
    for (std::size_t j = 0; j < i; ++j) {
      if (pins[j].attribute == pins[i].attribute) {
        throw Error(ErrorCode::kInvalidArgument, "attribute " +
                                                     std::string(attribute_name(pins[i].attribute)) +
                                                     " is pinned more than once");
      }
    }
  }
}

void upsert_pin(std::vector<PinState>& pins, PinState pin) {
  subcategory_index(pin.attribute, pin.subcategory);
  for (auto& p : pins) {
    if (p.attribute == pin.attribute) {
      p = std::move(pin);
      return;
    }
  }
  pins.push_back(std::move(pin));
}

bool remove_pin(std::vector<PinState>& pins, Attribute attribute) {
  const auto before = pins.size();
  std::erase_if(pins, [&](const PinState& p) { return p.attribute == attribute; });
  return pins.size() != before;
}

SteeringConfig SteeringConfig::for_layers(int n_layers) {
  SteeringConfig c;
  c.window_first = n_layers / 2;
  c.window_last = n_layers - 1;
  return c;
}

SteeringConfig SteeringConfig::reference() {
  SteeringConfig c;
  c.window_first = 20;
  c.window_last = 29;
  c.strength = 8.0;
  return c;
}

void SteeringConfig::validate(int n_layers) const {
  if (window_first < 0 || window_last >= n_layers || window_first > window_last) {
    throw Error(ErrorCode::kInvalidArgument,
                "steering window [" + std::to_string(window_first) + ", " +
                    std::to_string(window_last) + "] is not inside [0, " + std::to_string(n_layers) + ")");
  }
  if (!std::isfinite(strength)) throw Error(ErrorCode::kInvalidArgument, "steering strength must be finite");
}

nlohmann::json SteeringConfig::to_json() const {
  return {{"layer_window", {window_first, window_last}},
          {"strength", strength},
          {"vector_source", source == VectorSource::kControlProbe ? "control-probe"
                                                                  : "reading-probe-matched-l2"},
          {"unit_normalize", unit_normalize},
          {"pin_zero", pin_zero == PinZeroMode::kNegate ? "negate" : "siblings"}};
}

namespace {

double norm(std::span<const float> v) {
  double ss = 0.0;
  for (float x : v) ss += static_cast<double>(x) * x;
  return std::sqrt(ss);
}

// Adds coef * unit(theta) (or coef * theta when not normalizing) to delta.
void add_direction(std::vector<float>& delta, const Probe& p, double coef, bool unit_normalize) {
  double scale = coef;
  if (unit_normalize) {
    const double n = norm(p.weights);
    if (n == 0.0) {
      throw Error(ErrorCode::kZeroNorm, "probe " + std::string(attribute_name(p.attribute)) + "/" +
                                            p.subcategory + " at layer " + std::to_string(p.layer) +
                                            " has zero-norm weights");
    }
    scale = coef / n;
  }
  simd::axpy(static_cast<float>(scale), p.weights, delta);
}

// Signed direction of every pin at one layer, from probes of `kind`.
std::vector<float> pinned_direction(std::span<const PinState> pins, const ProbeSet& set, int layer,
                                    RepKind kind, double strength, const SteeringConfig& config,
                                    std::size_t d) {
  std::vector<float> delta(d, 0.0f);
  for (const auto& pin : pins) {
    if (pin.mode == PinMode::kPin100) {
      add_direction(delta, set.at(pin.attribute, pin.subcategory, layer, kind), strength,
                    config.unit_normalize);
    } else if (config.pin_zero == PinZeroMode::kNegate) {
      add_direction(delta, set.at(pin.attribute, pin.subcategory, layer, kind), -strength,
                    config.unit_normalize);
    } else {
      const auto& subs = subcategories(pin.attribute);
      const double share = strength / static_cast<double>(subs.size() - 1);
      for (const auto& sub : subs) {
        if (sub == pin.subcategory) continue;
        add_direction(delta, set.at(pin.attribute, sub, layer, kind), share, config.unit_normalize);
      }
    }
  }
  return delta;
}

std::size_t plan_width(const ProbeSet& set) {
  if (set.d_model == 0) throw Error(ErrorCode::kMissingProbe, "probe set is empty");
  return set.d_model;
}

int max_layer(const ProbeSet& set) {
  int m = -1;
  for (const auto& [key, p] : set.probes) m = std::max(m, key.layer);
  return m + 1;
}

}  // namespace

model::SteeringPlan build_steering_plan(std::span<const PinState> pins, const ProbeSet& probe_set,
                                        const SteeringConfig& config) {
  validate_pins(pins);
  model::SteeringPlan plan;
  if (pins.empty()) return plan;
  config.validate(max_layer(probe_set));
  const std::size_t d = plan_width(probe_set);
  for (int layer = config.window_first; layer <= config.window_last; ++layer) {
    plan.deltas[layer] =
        pinned_direction(pins, probe_set, layer, RepKind::kControl, config.strength, config, d);
  }
  if (config.source == VectorSource::kReadingMatchedL2) {
    return matched_l2_plan(pins, probe_set, plan, config);
  }
  return plan;
}

model::SteeringPlan matched_l2_plan(std::span<const PinState> pins, const ProbeSet& probe_set,
                                    const model::SteeringPlan& control_plan,
                                    const SteeringConfig& config) {
  validate_pins(pins);
  const std::size_t d = plan_width(probe_set);
  SteeringConfig unit = config;
  unit.unit_normalize = true;
  model::SteeringPlan plan;
  for (const auto& [layer, control_delta] : control_plan.deltas) {
    const double target = norm(control_delta);
    auto dir = pinned_direction(pins, probe_set, layer, RepKind::kReading, 1.0, unit, d);
    const double dir_norm = norm(dir);
    std::vector<float> delta(d, 0.0f);
    if (dir_norm == 0.0) {
      if (target != 0.0) {
        throw Error(ErrorCode::kZeroNorm, "reading directions cancel at layer " + std::to_string(layer));
      }
    } else {
      simd::axpy(static_cast<float>(target / dir_norm), dir, delta);
    }
    plan.deltas[layer] = std::move(delta);
  }
  return plan;
}

model::SteeringPlan add_plans(const model::SteeringPlan& a, const model::SteeringPlan& b) {
  model::SteeringPlan out = a;
  for (const auto& [layer, delta] : b.deltas) {
    auto it = out.deltas.find(layer);
    if (it == out.deltas.end()) {
      out.deltas[layer] = delta;
    } else {
      if (it->second.size() != delta.size()) {
        throw Error(ErrorCode::kInvalidArgument, "cannot add plans of different widths");
      }
      simd::add(delta, it->second);
    }
  }
  return out;
}

model::GenerationResult generate_with_pins(const model::Engine& engine,
                                           const model::Conversation& conversation,
                                           std::span<const PinState> pins,
                                           const ProbeSet& probe_set, const SteeringConfig& config,
                                           const model::GenerationParams& params) {
  if (pins.empty()) return engine.generate(conversation, params);
  const auto plan = build_steering_plan(pins, probe_set, config);
  return engine.generate(conversation, params, &plan);
}

double steered_self_score(const Probe& probe, std::span<const float> x, double strength) {
  const double n = norm(probe.weights);
  if (n == 0.0) throw Error(ErrorCode::kZeroNorm, "probe has zero-norm weights");
  std::vector<float> moved(x.begin(), x.end());
  simd::axpy(static_cast<float>(strength / n), probe.weights, moved);
  return probe.score(moved);
}

nlohmann::json SweepRow::to_json() const {
  return {{"N", strength},
          {"response_text", response_text},
          {"self_score", self_score},
          {"reading_score", reading_score},
          {"layer_window", {window_first, window_last}}};
}

std::vector<SweepRow> strength_sweep(const model::Engine& engine,
                                     const model::Conversation& conversation, const PinState& pin,
                                     std::span<const double> strengths, const ProbeSet& probe_set,
                                     const SteeringConfig& config,
                                     const model::GenerationParams& params) {
  config.validate(engine.n_layers());
  for (double s : strengths) {
    if (!std::isfinite(s)) throw Error(ErrorCode::kInvalidArgument, "sweep strengths must be finite");
  }
  const int deepest = config.window_last;
  const RepKind source_kind =
      config.source == VectorSource::kControlProbe ? RepKind::kControl : RepKind::kReading;
  const Probe& source_probe = probe_set.at(pin.attribute, pin.subcategory, deepest, source_kind);
  const Probe& reading_probe = probe_set.at(pin.attribute, pin.subcategory, deepest, RepKind::kReading);

  const auto prompt = engine.template_for(conversation);
  const std::size_t last = prompt.tokens.size() - 1;
  model::TapRequest taps{{deepest}, {last}};
  const auto base = engine.forward_with_taps(prompt.tokens, taps).trace.at(deepest, last);

  const std::vector<PinState> pins{pin};
  std::vector<SweepRow> rows;
  for (double strength : strengths) {
    SteeringConfig cfg = config;
    cfg.strength = strength;
    const auto plan = build_steering_plan(pins, probe_set, cfg);
    SweepRow row;
    row.strength = strength;
    row.window_first = config.window_first;
    row.window_last = config.window_last;
    row.response_text = engine.generate(conversation, params, &plan).text;

    std::vector<float> moved = base;
    simd::add(plan.deltas.at(deepest), moved);
    row.self_score = source_probe.score(moved);

    model::ForwardOptions opts;
    opts.plan = &plan;
    const auto steered = engine.forward_with_taps(prompt.tokens, taps, opts);
    row.reading_score = reading_probe.score(steered.trace.at(deepest, last));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace usermodel::steering
