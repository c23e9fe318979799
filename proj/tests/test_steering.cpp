#include <gtest/gtest.h>

#include <cmath>

#include "helpers.hpp"
#include "usermodel/error.hpp"
#include "usermodel/steering/steering.hpp"

using namespace usermodel;
using namespace usermodel::steering;
using probes::RepKind;
using testsupport::desk_engine;
using testsupport::single_turn;

namespace {

template <typename Fn>
ErrorCode code_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::kInvalidArgument;
}

double l2(const std::vector<float>& v) {
  double s = 0;
  for (float x : v) s += static_cast<double>(x) * x;
  return std::sqrt(s);
}

// s * N * theta / |theta| summed over pins, in double.
std::vector<double> oracle_delta(const probes::ProbeSet& set, const std::vector<PinState>& pins, int layer,
                                 double n) {
  std::vector<double> out(set.d_model, 0.0);
  for (const auto& pin : pins) {
    const auto& p = set.at(pin.attribute, pin.subcategory, layer, RepKind::kControl);
    double norm = 0;
    for (float w : p.weights) norm += static_cast<double>(w) * w;
    norm = std::sqrt(norm);
    const double s = pin.mode == PinMode::kPin100 ? 1.0 : -1.0;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += s * n * p.weights[i] / norm;
  }
  return out;
}

const std::vector<std::string> kPrompts{
    "What should I cook for dinner?", "Plan me a weekend trip.", "Which car should I buy?",
    "How do I save money?",           "Suggest a hobby for me.",  "What should I wear today?",
    "Recommend a book to read.",      "Where should I live?",     "How do I learn to code?",
    "What gift should I buy?"};

}  // namespace

TEST(Pins, ValidationUpsertAndRemove) {
  std::vector<PinState> pins;
  upsert_pin(pins, {Attribute::kGender, "male", PinMode::kPin100});
  upsert_pin(pins, {Attribute::kGender, "female", PinMode::kPin0});
  ASSERT_EQ(pins.size(), 1u);
  EXPECT_EQ(pins[0].subcategory, "female");
  EXPECT_EQ(pins[0].mode, PinMode::kPin0);
  upsert_pin(pins, {Attribute::kAge, "adult", PinMode::kPin100});
  EXPECT_TRUE(remove_pin(pins, Attribute::kGender));
  EXPECT_FALSE(remove_pin(pins, Attribute::kGender));
  EXPECT_EQ(pins.size(), 1u);
  std::vector<PinState> dup{{Attribute::kAge, "adult"}, {Attribute::kAge, "child"}};
  EXPECT_EQ(code_of([&] { validate_pins(dup); }), ErrorCode::kInvalidArgument);
  std::vector<PinState> bad{{Attribute::kAge, "male"}};
  EXPECT_EQ(code_of([&] { validate_pins(bad); }), ErrorCode::kInvalidArgument);
  EXPECT_EQ(parse_pin_mode("pin-0"), PinMode::kPin0);
  EXPECT_EQ(pin_mode_name(PinMode::kPin100), "pin-100");
  EXPECT_EQ(code_of([] { parse_pin_mode("pin-50"); }), ErrorCode::kInvalidArgument);
}

TEST(SteeringConfig, WindowsAndValidation) {
  const auto c = SteeringConfig::for_layers(4);
  EXPECT_EQ(c.window_first, 2);
  EXPECT_EQ(c.window_last, 3);
  EXPECT_EQ(c.strength, 8.0);
  const auto r = SteeringConfig::reference();
  EXPECT_EQ(r.window_first, 20);
  EXPECT_EQ(r.window_last, 29);
  EXPECT_NO_THROW(r.validate(40));
  EXPECT_EQ(code_of([&] { r.validate(4); }), ErrorCode::kInvalidArgument);
  SteeringConfig inverted = c;
  inverted.window_first = 3;
  inverted.window_last = 2;
  EXPECT_EQ(code_of([&] { inverted.validate(4); }), ErrorCode::kInvalidArgument);
  SteeringConfig nan = c;
  nan.strength = NAN;
  EXPECT_EQ(code_of([&] { nan.validate(4); }), ErrorCode::kInvalidArgument);
  EXPECT_EQ(c.to_json()["layer_window"], nlohmann::json({2, 3}));
}

TEST(Plan, MatchesOracleForMixedPins) {
  const auto set = testsupport::random_probe_set(desk_engine(), 1);
  const std::vector<PinState> pins{{Attribute::kGender, "female", PinMode::kPin100},
                                   {Attribute::kAge, "child", PinMode::kPin0}};
  const auto cfg = SteeringConfig::for_layers(4);
  const auto plan = build_steering_plan(pins, set, cfg);
  ASSERT_EQ(plan.deltas.size(), 2u);
  for (int layer : {2, 3}) {
    const auto want = oracle_delta(set, pins, layer, 8.0);
    const auto& got = *plan.delta(layer);
    for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-5);
  }
  EXPECT_EQ(plan.delta(1), nullptr);
}

TEST(Plan, SinglePinNormEqualsStrength) {
  const auto set = testsupport::random_probe_set(desk_engine(), 1);
  const std::vector<PinState> pins{{Attribute::kEducation, "high-school", PinMode::kPin100}};
  auto cfg = SteeringConfig::for_layers(4);
  cfg.strength = 5.0;
  const auto plan = build_steering_plan(pins, set, cfg);
  for (const auto& [layer, d] : plan.deltas) EXPECT_NEAR(l2(d), 5.0, 5e-6);
}

TEST(Plan, EmptyPinsGiveEmptyPlan) {
  const auto set = testsupport::random_probe_set(desk_engine(), 1);
  EXPECT_TRUE(build_steering_plan({}, set, SteeringConfig::for_layers(4)).empty());
}

TEST(Plan, ZeroNormProbeIsAnError) {
  auto set = testsupport::random_probe_set(desk_engine(), 1);
  auto& p = set.probes.at({Attribute::kGender, "male", 2, RepKind::kControl});
  std::fill(p.weights.begin(), p.weights.end(), 0.0f);
  const std::vector<PinState> pins{{Attribute::kGender, "male", PinMode::kPin100}};
  EXPECT_EQ(code_of([&] { build_steering_plan(pins, set, SteeringConfig::for_layers(4)); }),
            ErrorCode::kZeroNorm);
}

TEST(Plan, MissingProbeIsAnError) {
  auto set = testsupport::random_probe_set(desk_engine(), 1);
  set.probes.erase({Attribute::kGender, "male", 3, RepKind::kControl});
  const std::vector<PinState> pins{{Attribute::kGender, "male", PinMode::kPin100}};
  EXPECT_EQ(code_of([&] { build_steering_plan(pins, set, SteeringConfig::for_layers(4)); }),
            ErrorCode::kMissingProbe);
}

TEST(Plan, PinZeroSiblingsUsesOtherSubcategories) {
  const auto set = testsupport::random_probe_set(desk_engine(), 1);
  auto cfg = SteeringConfig::for_layers(4);
  cfg.pin_zero = PinZeroMode::kSiblings;
  const std::vector<PinState> pin0{{Attribute::kAge, "adult", PinMode::kPin0}};
  const std::vector<PinState> others{{Attribute::kAge, "child", PinMode::kPin100}};
  const auto plan = build_steering_plan(pin0, set, cfg);
  // (N/3) * (u_child + u_adolescent + u_older)
  std::vector<double> want(set.d_model, 0.0);
  for (const char* sub : {"child", "adolescent", "older-adult"}) {
    const auto d = oracle_delta(set, {{Attribute::kAge, sub, PinMode::kPin100}}, 2, 8.0 / 3.0);
    for (std::size_t i = 0; i < want.size(); ++i) want[i] += d[i];
  }
  for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR((*plan.delta(2))[i], want[i], 1e-5);
}

TEST(Plan, MatchedL2KeepsControlNormsAlongReadingDirection) {
  const auto set = testsupport::random_probe_set(desk_engine(), 2);
  auto cfg = SteeringConfig::for_layers(4);
  const std::vector<PinState> pins{{Attribute::kSocioeco, "upper", PinMode::kPin100}};
  const auto control = build_steering_plan(pins, set, cfg);
  cfg.source = VectorSource::kReadingMatchedL2;
  const auto reading = build_steering_plan(pins, set, cfg);
  for (int layer : {2, 3}) {
    const auto& c = *control.delta(layer);
    const auto& r = *reading.delta(layer);
    EXPECT_NEAR(l2(r), l2(c), 1e-6 * l2(c));
    const auto& theta = set.at(Attribute::kSocioeco, "upper", layer, RepKind::kReading).weights;
    double dot = 0;
    for (std::size_t i = 0; i < r.size(); ++i) dot += static_cast<double>(r[i]) * theta[i];
    // parallel to theta_reading
    const double tn = [&] {
      double s = 0;
      for (float w : theta) s += static_cast<double>(w) * w;
      return std::sqrt(s);
    }();
    EXPECT_NEAR(dot / (l2(r) * tn), 1.0, 1e-6);
  }
}

TEST(Plan, AddPlans) {
  model::SteeringPlan a, b;
  a.deltas[1] = {1.0f, 2.0f};
  b.deltas[1] = {0.5f, 0.5f};
  b.deltas[2] = {3.0f, 4.0f};
  const auto s = add_plans(a, b);
  EXPECT_EQ(s.deltas.at(1), (std::vector<float>{1.5f, 2.5f}));
  EXPECT_EQ(s.deltas.at(2), (std::vector<float>{3.0f, 4.0f}));
  model::SteeringPlan c;
  c.deltas[1] = {1.0f};
  EXPECT_EQ(code_of([&] { add_plans(a, c); }), ErrorCode::kInvalidArgument);
}

TEST(SelfScore, FormulaAndMonotonicity) {
  probes::Probe p;
  p.weights = {3.0f, 4.0f};
  p.bias = -1.0;
  std::vector<float> x{0.5f, -0.25f};
  // <x + N*theta/5, theta> + b = 0.5 + 5N - 1
  for (double n : {0.0, 1.0, 2.0}) {
    EXPECT_NEAR(steered_self_score(p, x, n), 1.0 / (1.0 + std::exp(-(0.5 + 5 * n - 1.0))), 1e-6);
  }
  EXPECT_LT(steered_self_score(p, x, 0.0), steered_self_score(p, x, 0.1));
}

TEST(Generation, NoPinsEqualsUnsteered) {
  const auto& e = desk_engine();
  const auto set = testsupport::random_probe_set(e, 1);
  const auto conv = single_turn(kPrompts[0]);
  const auto base = e.generate(conv, {16, 1});
  EXPECT_EQ(generate_with_pins(e, conv, {}, set, SteeringConfig::for_layers(4), {16, 1}).tokens, base.tokens);
}

TEST(Generation, StrongPinMovesAtLeastOneFixturePrompt) {
  const auto& e = desk_engine();
  const auto set = testsupport::random_probe_set(e, 1);
  const std::vector<PinState> pins{{Attribute::kGender, "female", PinMode::kPin100}};
  int moved = 0;
  for (const auto& prompt : kPrompts) {
    const auto conv = single_turn(prompt);
    const auto base = e.generate(conv, {16, 1});
    const auto steered = generate_with_pins(e, conv, pins, set, SteeringConfig::for_layers(4), {16, 1});
    moved += base.tokens != steered.tokens ? 1 : 0;
  }
  EXPECT_GE(moved, 1);
}

TEST(Sweep, RowsFollowStrengthsAndSelfScoreOracle) {
  const auto& e = desk_engine();
  const auto set = testsupport::random_probe_set(e, 1);
  const PinState pin{Attribute::kAge, "older-adult", PinMode::kPin100};
  const std::vector<double> strengths{0, 1, 2, 4, 8};
  const auto conv = single_turn("Any plans for the weekend?");
  const auto cfg = SteeringConfig::for_layers(4);
  const auto rows = strength_sweep(e, conv, pin, strengths, set, cfg, {8, 1});
  ASSERT_EQ(rows.size(), strengths.size());
  const auto tokens = e.template_for(conv).tokens;
  const auto base = e.forward_with_taps(tokens, {{3}, {tokens.size() - 1}}).trace.at(3, tokens.size() - 1);
  const auto& probe = set.at(Attribute::kAge, "older-adult", 3, RepKind::kControl);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(rows[i].strength, strengths[i]);
    EXPECT_NEAR(rows[i].self_score, steered_self_score(probe, base, strengths[i]), 1e-6);
    if (i > 0) EXPECT_GT(rows[i].self_score, rows[i - 1].self_score);
    EXPECT_EQ(rows[i].to_json()["layer_window"], nlohmann::json({2, 3}));
  }
  EXPECT_EQ(rows[0].response_text, e.generate(conv, {8, 1}).text);
  const std::vector<double> bad{1.0, INFINITY};
  EXPECT_EQ(code_of([&] { strength_sweep(e, conv, pin, bad, set, cfg, {8, 1}); }), ErrorCode::kInvalidArgument);
}
