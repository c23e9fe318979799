#include <gtest/gtest.h>

#include "helpers.hpp"
#include "usermodel/dataset/generation.hpp"
#include "usermodel/probes/probe.hpp"
#include "usermodel/steering/steering.hpp"
#include "usermodel/util/hash.hpp"

// Frozen outputs. Regenerate with USERMODEL_UPDATE_GOLDEN=1 after an
// intentional change and review the diff.

using namespace usermodel;
using testsupport::check_golden;
using testsupport::desk_engine;

namespace {

std::string join_tokens(const std::vector<model::TokenId>& ids) {
  std::string s;
  for (auto id : ids) s += (s.empty() ? "" : " ") + std::to_string(id);
  return s;
}

}  // namespace

TEST(Golden, DeskEngineGreedyOutputs) {
  std::string text;
  for (const char* prompt : {"Hello!", "What is the capital of France?", "Plan a birthday party for my son."}) {
    const auto r = desk_engine().generate(testsupport::single_turn(prompt), {24, 1});
    text += std::string(prompt) + "\t" + join_tokens(r.tokens) + "\n";
  }
  text += "fingerprint\t" + desk_engine().fingerprint() + "\n";
  const auto msg = check_golden("desk_greedy.txt", text);
  EXPECT_TRUE(msg.empty()) << msg;
}

TEST(Golden, SteeredGreedyOutputs) {
  const auto set = testsupport::random_probe_set(desk_engine(), 1);
  const std::vector<steering::PinState> pins{{Attribute::kGender, "female", steering::PinMode::kPin100}};
  std::string text;
  for (double n : {0.0, 4.0, 8.0}) {
    auto cfg = steering::SteeringConfig::for_layers(4);
    cfg.strength = n;
    const auto r = steering::generate_with_pins(desk_engine(), testsupport::single_turn("Hello!"), pins, set, cfg,
                                                {24, 1});
    text += std::to_string(static_cast<int>(n)) + "\t" + join_tokens(r.tokens) + "\n";
  }
  const auto msg = check_golden("desk_steered.txt", text);
  EXPECT_TRUE(msg.empty()) << msg;
}

TEST(Golden, ChatTemplateText) {
  model::Conversation c;
  c.messages = {{model::Role::kUser, "hi"}, {model::Role::kAssistant, "hello"}, {model::Role::kUser, "bye"}};
  const auto t = desk_engine().template_for(c, "Be brief.");
  const auto msg = check_golden("chat_template.txt", desk_engine().detokenize(t.tokens) + "\n");
  EXPECT_TRUE(msg.empty()) << msg;
}

TEST(Golden, GenerationPrompts) {
  std::string text;
  for (Attribute a : kAllAttributes) {
    for (const auto& sub : subcategories(a)) {
      const auto p = dataset::build_generation_prompt(a, sub, 0);
      text += p.template_id + "\t" + sub + "\t" + p.text + "\n";
    }
  }
  const auto msg = check_golden("generation_prompts.txt", text);
  EXPECT_TRUE(msg.empty()) << msg;
}

TEST(Golden, ProbeSetBytes) {
  const auto bytes = probes::encode_probe_set(testsupport::random_probe_set(desk_engine(), 3));
  const auto msg = check_golden("probe_set_digest.txt",
                                util::hex64(util::fnv1a(std::string_view(bytes.data(), bytes.size()))) + "\n");
  EXPECT_TRUE(msg.empty()) << msg;
}
