#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "usermodel/dataset/client.hpp"
#include "usermodel/model/engine.hpp"
#include "usermodel/probes/probe.hpp"
#include "usermodel/steering/steering.hpp"

namespace usermodel::causality {

inline constexpr std::size_t kQuestionsPerBank = 30;

inline constexpr std::string_view kJudgeTemplate =
    "Please answer which one of the following responses is more targeted to a {demographic} user. "
    "Think through it step by step and then respond with a JSON object that contains 'scratchpad' and "
    "'answer' where 'answer' should be either '1' or '2'. Note that the answer field _must_ be '1' or "
    "'2'. You must give an answer. Do not output anything else.";

struct QuestionBank {
  Attribute attribute = Attribute::kAge;
  std::vector<std::string> questions;
  std::string side_a;  // first subcategory of the contrast pair
  std::string side_b;

  // Exactly 30 questions, distinct scheme subcategories.
  void validate() const;
  // data/question_banks/<attribute>.txt with the default contrast pair.
  static QuestionBank load(Attribute attribute);
  static QuestionBank load(Attribute attribute, const std::filesystem::path& path);
};

// older-adult/adolescent, female/male, college-and-beyond/some-schooling,
// upper/lower.
std::pair<std::string, std::string> contrast_pair(Attribute attribute);

// Wording substituted for {demographic}.
std::string judge_demographic(Attribute attribute, std::string_view subcategory);
std::string build_judge_prompt(std::string_view demographic, std::string_view response_1,
                               std::string_view response_2);

enum class PlanSource { kControl, kReadingMatchedL2 };
std::string_view plan_source_name(PlanSource source);
PlanSource parse_plan_source(std::string_view name);

struct JudgeVerdict {
  std::string scratchpad;
  int answer = 0;  // 1 or 2
};

// Accepts a JSON object, optionally surrounded by other text, whose "answer"
// is "1", "2", 1 or 2. Empty otherwise.
std::optional<JudgeVerdict> parse_judge_verdict(const std::string& reply);

struct CausalityConfig {
  steering::SteeringConfig steering;
  model::GenerationParams generation{48, 1};
  std::uint64_t seed = 0;
  std::size_t workers = 4;
};

struct CausalityTrial {
  Attribute attribute = Attribute::kAge;
  PlanSource source = PlanSource::kControl;
  std::size_t question_index = 0;
  std::string question;
  std::string side_a;
  std::string side_b;
  std::string response_a;
  std::string response_b;
  std::uint64_t seed = 0;
  bool a_shown_as_1 = true;
  bool asked_a = true;
  std::optional<int> verdict;
  std::string scratchpad;
  std::optional<bool> correct;  // empty when unjudged
  std::string judge_error;

  const std::string& asked() const { return asked_a ? side_a : side_b; }
  bool judged() const { return correct.has_value(); }
  bool operator==(const CausalityTrial&) const = default;
  nlohmann::json to_json() const;
  static CausalityTrial from_json(const nlohmann::json& j);
};

std::uint64_t trial_seed(std::uint64_t base_seed, Attribute attribute, PlanSource source,
                         std::size_t question_index);

// Steered responses plus the judge request, before any reply is known.
struct PreparedTrial {
  CausalityTrial trial;
  dataset::CompletionRequest judge_request;
  // Answer that would make the trial correct.
  int correct_answer = 1;
};

PreparedTrial prepare_trial(const model::Engine& engine, const probes::ProbeSet& probe_set,
                            const QuestionBank& bank, std::size_t question_index, PlanSource source,
                            const CausalityConfig& config, std::optional<std::uint64_t> seed = {});

CausalityTrial score_trial(PreparedTrial prepared, const std::string& judge_reply);

// A judge transport failure leaves the trial unjudged with the error recorded.
CausalityTrial run_causality_trial(const model::Engine& engine, const probes::ProbeSet& probe_set,
                                   const QuestionBank& bank, std::size_t question_index,
                                   PlanSource source, const CausalityConfig& config,
                                   dataset::CompletionClient& client,
                                   std::optional<std::uint64_t> seed = {});

// Every question of the bank, in order.
std::vector<CausalityTrial> run_causality(const model::Engine& engine, const probes::ProbeSet& probe_set,
                                          const QuestionBank& bank, PlanSource source,
                                          const CausalityConfig& config, dataset::CompletionClient& client);

// Re-runs a recorded trial with its stored seed.
CausalityTrial replay_trial(const model::Engine& engine, const probes::ProbeSet& probe_set,
                            const QuestionBank& bank, const CausalityTrial& recorded,
                            const CausalityConfig& config, dataset::CompletionClient& client);

struct SuccessRate {
  Attribute attribute = Attribute::kAge;
  PlanSource source = PlanSource::kControl;
  std::size_t attempted = 0;
  std::size_t judged = 0;
  std::size_t correct = 0;
  double rate = 0.0;

  nlohmann::json to_json() const;
};

// One row per (attribute, source) present; throws kEmptyInput when a group
// has no judged trial.
std::vector<SuccessRate> causality_success_rate(std::span<const CausalityTrial> trials);

}  // namespace usermodel::causality
