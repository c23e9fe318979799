#include "usermodel/causality/causality.hpp"

#include <map>
#include <random>
#include <set>

#include "usermodel/error.hpp"
#include "usermodel/util/hash.hpp"
#include "usermodel/util/io.hpp"
#include "usermodel/util/parallel.hpp"
#include "usermodel/util/random.hpp"

namespace usermodel::causality {

std::pair<std::string, std::string> contrast_pair(Attribute attribute) {
  switch (attribute) {
    case Attribute::kAge: return {"older-adult", "adolescent"};
    case Attribute::kGender: return {"female", "male"};
    case Attribute::kEducation: return {"college-and-beyond", "some-schooling"};
    case Attribute::kSocioeco: return {"upper", "lower"};
  }
  return {};
}

void QuestionBank::validate() const {
  if (questions.size() != kQuestionsPerBank) {
    throw Error(ErrorCode::kInvalidArgument, "question bank for " + std::string(attribute_name(attribute)) +
                                                 " has " + std::to_string(questions.size()) +
                                                 " questions, expected 30");
  }
  subcategory_index(attribute, side_a);
  subcategory_index(attribute, side_b);
  if (side_a == side_b) throw Error(ErrorCode::kInvalidArgument, "contrast subcategories must differ");
}

QuestionBank QuestionBank::load(Attribute attribute) {
  return load(attribute, util::data_path("question_banks/" + std::string(attribute_name(attribute)) + ".txt"));
}

QuestionBank QuestionBank::load(Attribute attribute, const std::filesystem::path& path) {
  QuestionBank b;
  b.attribute = attribute;
  for (auto& line : util::read_lines(path)) {
    const auto first = line.find_first_not_of(" \t");
    if (first != std::string::npos) b.questions.push_back(line.substr(first));
  }
  std::tie(b.side_a, b.side_b) = contrast_pair(attribute);
  b.validate();
  return b;
}

std::string judge_demographic(Attribute attribute, std::string_view subcategory) {
  switch (attribute) {
    case Attribute::kAge:
    case Attribute::kGender:
      return subcategory_display(attribute, subcategory);
    case Attribute::kEducation:
      return subcategory_display(attribute, subcategory) + " education";
    case Attribute::kSocioeco: {
      static const char* levels[] = {"low", "middle", "high"};
      return std::string(levels[subcategory_index(attribute, subcategory)]) + " socioeconomic status";
    }
  }
  return std::string(subcategory);
}

std::string build_judge_prompt(std::string_view demographic, std::string_view response_1,
                               std::string_view response_2) {
  std::string text(kJudgeTemplate);
  const std::string key = "{demographic}";
  text.replace(text.find(key), key.size(), demographic);
  text += "\n\nResponse 1:\n";
  text += response_1;
  text += "\n\nResponse 2:\n";
  text += response_2;
  return text;
}

std::string_view plan_source_name(PlanSource source) {
  return source == PlanSource::kControl ? "control" : "reading-matched-l2";
}

PlanSource parse_plan_source(std::string_view name) {
  if (name == "control") return PlanSource::kControl;
  if (name == "reading-matched-l2" || name == "reading") return PlanSource::kReadingMatchedL2;
  throw Error(ErrorCode::kInvalidArgument, "unknown plan source '" + std::string(name) + "'");
}

namespace {

std::optional<JudgeVerdict> verdict_from(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("answer")) return std::nullopt;
  const auto& a = j["answer"];
  int answer = 0;
  if (a.is_string()) {
    const auto s = a.get<std::string>();
    if (s == "1") answer = 1;
    if (s == "2") answer = 2;
  } else if (a.is_number_integer()) {
    answer = a.get<int>();
  }
  if (answer != 1 && answer != 2) return std::nullopt;
  JudgeVerdict v;
  v.answer = answer;
  if (j.contains("scratchpad") && j["scratchpad"].is_string()) v.scratchpad = j["scratchpad"].get<std::string>();
  return v;
}

}  // namespace

std::optional<JudgeVerdict> parse_judge_verdict(const std::string& reply) {
  auto j = nlohmann::json::parse(reply, nullptr, false);
  if (!j.is_discarded()) return verdict_from(j);
  const auto b = reply.find('{');
  const auto e = reply.rfind('}');
  if (b == std::string::npos || e == std::string::npos || e < b) return std::nullopt;
  j = nlohmann::json::parse(reply.substr(b, e - b + 1), nullptr, false);
  if (j.is_discarded()) return std::nullopt;
  return verdict_from(j);
}

nlohmann::json CausalityTrial::to_json() const {
  nlohmann::json j{
      {"attribute", attribute_name(attribute)},
      {"source", plan_source_name(source)},
      {"question_index", question_index},
      {"question", question},
      {"contrast", {side_a, side_b}},
      {"seeds", {{"trial", seed}, {"a_shown_as_1", a_shown_as_1}, {"asked_a", asked_a}}},
      {"asked", asked()},
      {"responses", {{"a", response_a}, {"b", response_b}}},
      {"verdict", nullptr},
      {"scratchpad", scratchpad},
      {"correct", nullptr},
  };
  if (verdict) j["verdict"] = *verdict;
  if (correct) j["correct"] = *correct;
  if (!judge_error.empty()) j["judge_error"] = judge_error;
  return j;
}

CausalityTrial CausalityTrial::from_json(const nlohmann::json& j) {
  try {
    CausalityTrial t;
    t.attribute = parse_attribute(j.at("attribute").get<std::string>());
    t.source = parse_plan_source(j.at("source").get<std::string>());
    t.question_index = j.at("question_index").get<std::size_t>();
    t.question = j.at("question").get<std::string>();
    t.side_a = j.at("contrast").at(0).get<std::string>();
    t.side_b = j.at("contrast").at(1).get<std::string>();
    t.seed = j.at("seeds").at("trial").get<std::uint64_t>();
    t.a_shown_as_1 = j.at("seeds").at("a_shown_as_1").get<bool>();
    t.asked_a = j.at("seeds").at("asked_a").get<bool>();
    t.response_a = j.at("responses").at("a").get<std::string>();
    t.response_b = j.at("responses").at("b").get<std::string>();
    if (!j.at("verdict").is_null()) t.verdict = j["verdict"].get<int>();
    t.scratchpad = j.value("scratchpad", "");
    if (!j.at("correct").is_null()) t.correct = j["correct"].get<bool>();
    t.judge_error = j.value("judge_error", "");
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kMalformedFile, std::string("causality trial: ") + e.what());
  }
}

std::uint64_t trial_seed(std::uint64_t base_seed, Attribute attribute, PlanSource source,
                         std::size_t question_index) {
  std::uint64_t s = util::mix_seed(base_seed, static_cast<std::uint64_t>(attribute));
  s = util::mix_seed(s, static_cast<std::uint64_t>(source));
  return util::mix_seed(s, question_index);
}

PreparedTrial prepare_trial(const model::Engine& engine, const probes::ProbeSet& probe_set,
                            const QuestionBank& bank, std::size_t question_index, PlanSource source,
                            const CausalityConfig& config, std::optional<std::uint64_t> seed) {
  bank.validate();
  if (question_index >= bank.questions.size()) {
    throw Error(ErrorCode::kInvalidArgument, "question index out of range");
  }
  PreparedTrial p;
  CausalityTrial& t = p.trial;
  t.attribute = bank.attribute;
  t.source = source;
  t.question_index = question_index;
  t.question = bank.questions[question_index];
  t.side_a = bank.side_a;
  t.side_b = bank.side_b;
  t.seed = seed.value_or(trial_seed(config.seed, bank.attribute, source, question_index));
  std::mt19937_64 rng(t.seed);
  t.a_shown_as_1 = util::uniform01(rng) < 0.5;
  t.asked_a = util::uniform01(rng) < 0.5;

  steering::SteeringConfig sc = config.steering;
  sc.source = source == PlanSource::kControl ? steering::VectorSource::kControlProbe
                                             : steering::VectorSource::kReadingMatchedL2;
  model::Conversation conv;
  conv.messages.push_back({model::Role::kUser, t.question});
  auto respond = [&](const std::string& sub) {
    const steering::PinState pin{bank.attribute, sub, steering::PinMode::kPin100};
    return steering::generate_with_pins(engine, conv, std::span(&pin, 1), probe_set, sc, config.generation)
        .text;
  };
  t.response_a = respond(t.side_a);
  t.response_b = respond(t.side_b);

  const std::string& r1 = t.a_shown_as_1 ? t.response_a : t.response_b;
  const std::string& r2 = t.a_shown_as_1 ? t.response_b : t.response_a;
  p.judge_request.messages = {
      {model::Role::kUser, build_judge_prompt(judge_demographic(bank.attribute, t.asked()), r1, r2)}};
  p.judge_request.temperature = 0.0;
  p.judge_request.tag = "judge";
  p.correct_answer = (t.asked_a == t.a_shown_as_1) ? 1 : 2;
  return p;
}

CausalityTrial score_trial(PreparedTrial prepared, const std::string& judge_reply) {
  CausalityTrial t = std::move(prepared.trial);
  const auto v = parse_judge_verdict(judge_reply);
  if (!v) {
    t.judge_error = "invalid judge reply";
    return t;
  }
  t.verdict = v->answer;
  t.scratchpad = v->scratchpad;
  t.correct = v->answer == prepared.correct_answer;
  return t;
}

CausalityTrial run_causality_trial(const model::Engine& engine, const probes::ProbeSet& probe_set,
                                   const QuestionBank& bank, std::size_t question_index,
                                   PlanSource source, const CausalityConfig& config,
                                   dataset::CompletionClient& client, std::optional<std::uint64_t> seed) {
  auto prepared = prepare_trial(engine, probe_set, bank, question_index, source, config, seed);
  std::string reply;
  try {
    reply = client.complete(prepared.judge_request);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kCredential) throw;
    CausalityTrial t = std::move(prepared.trial);
    t.judge_error = std::string(error_code_name(e.code())) + ": " + e.what();
    return t;
  }
  return score_trial(std::move(prepared), reply);
}

std::vector<CausalityTrial> run_causality(const model::Engine& engine, const probes::ProbeSet& probe_set,
                                          const QuestionBank& bank, PlanSource source,
                                          const CausalityConfig& config, dataset::CompletionClient& client) {
  bank.validate();
  std::vector<CausalityTrial> out(bank.questions.size());
  util::parallel_for(out.size(), config.workers, [&](std::size_t i) {
    out[i] = run_causality_trial(engine, probe_set, bank, i, source, config, client);
  });
  return out;
}

CausalityTrial replay_trial(const model::Engine& engine, const probes::ProbeSet& probe_set,
                            const QuestionBank& bank, const CausalityTrial& recorded,
                            const CausalityConfig& config, dataset::CompletionClient& client) {
  if (recorded.attribute != bank.attribute) {
    throw Error(ErrorCode::kInvalidArgument, "recorded trial belongs to another attribute");
  }
  return run_causality_trial(engine, probe_set, bank, recorded.question_index, recorded.source, config,
                             client, recorded.seed);
}

nlohmann::json SuccessRate::to_json() const {
  return {{"attribute", attribute_name(attribute)},
          {"source", plan_source_name(source)},
          {"attempted", attempted},
          {"judged", judged},
          {"unjudged", attempted - judged},
          {"correct", correct},
          {"rate", rate}};
}

std::vector<SuccessRate> causality_success_rate(std::span<const CausalityTrial> trials) {
  std::map<std::pair<Attribute, PlanSource>, SuccessRate> groups;
  for (const auto& t : trials) {
    auto& g = groups[{t.attribute, t.source}];
    g.attribute = t.attribute;
    g.source = t.source;
    ++g.attempted;
    if (t.judged()) {
      ++g.judged;
      if (*t.correct) ++g.correct;
    }
  }
  if (groups.empty()) throw Error(ErrorCode::kEmptyInput, "no causality trials");
  std::vector<SuccessRate> out;
  for (auto& [key, g] : groups) {
    if (g.judged == 0) {
      throw Error(ErrorCode::kEmptyInput, "no judged trials for " + std::string(attribute_name(g.attribute)) +
                                              " (" + std::string(plan_source_name(g.source)) + ")");
    }
    g.rate = static_cast<double>(g.correct) / static_cast<double>(g.judged);
    out.push_back(g);
  }
  return out;
}

}  // namespace usermodel::causality
