#pragma once

#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "usermodel/model/engine.hpp"
#include "usermodel/probes/probe.hpp"

namespace usermodel::steering {

enum class PinMode { kPin100, kPin0 };

std::string_view pin_mode_name(PinMode mode);
PinMode parse_pin_mode(std::string_view name);

struct PinState {
  Attribute attribute = Attribute::kAge;
  std::string subcategory;
  PinMode mode = PinMode::kPin100;

  bool operator==(const PinState&) const = default;
  nlohmann::json to_json() const;
};

// Throws when a subcategory is outside its scheme or an attribute is pinned
// twice.
void validate_pins(std::span<const PinState> pins);
// Replaces any pin on the same attribute.
void upsert_pin(std::vector<PinState>& pins, PinState pin);
// Returns true when a pin was removed.
bool remove_pin(std::vector<PinState>& pins, Attribute attribute);

enum class VectorSource { kControlProbe, kReadingMatchedL2 };
// pin-0 direction: minus the pinned subcategory's own direction, or plus the
// mean of its siblings' directions.
enum class PinZeroMode { kNegate, kSiblings };

struct SteeringConfig {
  int window_first = 2;  // inclusive
  int window_last = 3;   // inclusive
  double strength = 8.0;
  VectorSource source = VectorSource::kControlProbe;
  bool unit_normalize = true;
  PinZeroMode pin_zero = PinZeroMode::kNegate;

  // Top half of the layers.
  static SteeringConfig for_layers(int n_layers);
  // Layers 20..29 at N = 8 (a 40-layer model).
  static SteeringConfig reference();

  void validate(int n_layers) const;
  nlohmann::json to_json() const;
};

// For each window layer: sum over pins of s * N * unit(theta_control), with
// s = +1 for pin-100 and -1 for pin-0. Empty pins give an empty plan.
// With source kReadingMatchedL2 the control plan is built first and then
// re-expressed along reading directions with matched_l2_plan.
model::SteeringPlan build_steering_plan(std::span<const PinState> pins,
                                        const probes::ProbeSet& probe_set,
                                        const SteeringConfig& config);

// Per layer of `control_plan`: a delta along the (signed, summed) reading
// probe directions whose L2 norm equals the control delta's norm.
model::SteeringPlan matched_l2_plan(std::span<const PinState> pins,
                                    const probes::ProbeSet& probe_set,
                                    const model::SteeringPlan& control_plan,
                                    const SteeringConfig& config);

// Elementwise sum; layers present in either plan are kept.
model::SteeringPlan add_plans(const model::SteeringPlan& a, const model::SteeringPlan& b);

model::GenerationResult generate_with_pins(const model::Engine& engine,
                                           const model::Conversation& conversation,
                                           std::span<const PinState> pins,
                                           const probes::ProbeSet& probe_set,
                                           const SteeringConfig& config,
                                           const model::GenerationParams& params);

// sigma(<x + N * unit(theta), theta> + b)
double steered_self_score(const probes::Probe& probe, std::span<const float> x, double strength);

struct SweepRow {
  double strength = 0.0;
  std::string response_text;
  // Score of the probe that supplied the direction, on the prompt's last
  // position at the deepest window layer with that layer's delta added.
  double self_score = 0.0;
  // Reading probe of the pinned subcategory on the fully steered forward
  // pass at the deepest window layer.
  double reading_score = 0.0;
  int window_first = 0;
  int window_last = 0;

  nlohmann::json to_json() const;
};

std::vector<SweepRow> strength_sweep(const model::Engine& engine,
                                     const model::Conversation& conversation, const PinState& pin,
                                     std::span<const double> strengths,
                                     const probes::ProbeSet& probe_set,
                                     const SteeringConfig& config,
                                     const model::GenerationParams& params);

}  // namespace usermodel::steering
