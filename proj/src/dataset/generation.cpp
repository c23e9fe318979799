#include "usermodel/dataset/generation.hpp"

#include <algorithm>
#include <cstdio>
#include <optional>
#include <map>
#include <mutex>
#include <random>
#include <set>

#include "usermodel/util/hash.hpp"
#include "usermodel/util/io.hpp"
#include "usermodel/util/parallel.hpp"
#include "usermodel/util/random.hpp"

namespace usermodel::dataset {

namespace {

constexpr const char* kMarkerTail =
    "'### Human:', and the AI assistant's response should start with '### Assistant:'";

std::vector<GenerationTemplate> make_templates(Attribute a) {
  const std::string tail = kMarkerTail;
  const std::string head = "Generate a conversation between a human user and an AI assistant. ";
  switch (a) {
    case Attribute::kGender:
      return {
          {a, "gender-1",
           head + "This human user is a {gender}. Make sure the conversation reflects this user's gender. "
                  "Be creative on the topics of conversation. The user's response should start with " +
               tail,
           0.72},
          {a, "gender-2",
           head + "This human user is a {gender}. Be creative on the topics of conversation. Make sure the "
                  "conversation reflects this user's gender. This may be reflected by how they address "
                  "themselves or their partner. " +
               tail,
           0.28},
      };
    case Attribute::kAge:
      return {
          {a, "age-1",
           head + "This human user is a {age} who is {year_range}. Make sure the topic of the conversation "
                  "or the way that user talks reflects this user's age. You may or may not include the "
                  "user's age directly in the conversation. " +
               tail,
           0.5},
          {a, "age-2",
           head + "This human user is a {age} who is {year_range}. Make sure the topic of the conversation "
                  "or the way that user talks reflects this user's age. You may or may not include the "
                  "user's age directly in the conversation. If you include their age, make sure it's a "
                  "number but not a range. " +
               tail,
           0.5},
      };
    case Attribute::kEducation:
      return {
          {a, "education-1",
           head + "The education of this human user is {education}. Make sure the conversation directly or "
                  "indirectly reflects this user's education level. Be creative on the topics of the "
                  "conversation. " +
               tail,
           0.66},
          {a, "education-2",
           head + "The education of this human user is {education}. Make sure the conversation directly "
                  "reflects this user's education level. The user may talk about what diploma or academic "
                  "degree they have during the conversation. Be creative on the topics of the "
                  "conversation. You can also include daily topic if it can reflect the user's "
                  "education. " +
               tail,
           0.17},
          {a, "education-3",
           head + "The education of this human user is {education}. Make sure the conversation or the "
                  "user's language directly or indirectly reflects this user's education level. The user "
                  "may talk about what diploma or academic degree they have during the conversation. Be "
                  "creative on the topics of the conversation. The topic doesn't have to be academic. You "
                  "can also include daily topic if it can reflect the user's education. " +
               tail,
           0.17},
      };
    case Attribute::kSocioeco:
      return {
          {a, "socioeco-1",
           head + "The socioeconomic status of this human user is {socioeco}. Make sure the conversation "
                  "reflects this user's socioeconomic status. You may or may not include this user's "
                  "socioeconomic status directly in the conversation. " +
               tail,
           0.5},
          {a, "socioeco-2",
           head + "The socioeconomic status of this human user is {socioeco}. Make sure the conversation "
                  "implicitly or explicitly reflects this user belongs to {class_name} class but not "
                  "{other_class_name}. You may or may not include the user's socioeconomic status "
                  "explicitly in the conversation. Be creative on the topic of the conversation. " +
               tail,
           0.5},
      };
  }
  return {};
}

using Slots = std::map<std::string, std::string>;

Slots slots_for(Attribute a, std::string_view sub) {
  const std::size_t i = subcategory_index(a, sub);
  switch (a) {
    case Attribute::kGender:
      return {{"gender", std::string(sub)}};
    case Attribute::kAge: {
      static const char* names[] = {"child", "adolescent", "adult", "older adult"};
      static const char* ranges[] = {"below 12 years old", "between 13 to 17 years old",
                                     "between 18 to 64 years old", "above 65 years old"};
      return {{"age", names[i]}, {"year_range", ranges[i]}};
    }
    case Attribute::kEducation: {
      static const char* names[] = {
          "some schooling (elementary school, middle school, or pre-high school)",
          "high school education", "college and more"};
      return {{"education", names[i]}};
    }
    case Attribute::kSocioeco: {
      static const char* levels[] = {"low", "middle", "high"};
      static const char* classes[] = {"lower", "middle", "upper"};
      static const char* others[] = {"middle or upper classes", "lower or upper classes",
                                     "lower or middle classes"};
      return {{"socioeco", levels[i]}, {"class_name", classes[i]}, {"other_class_name", others[i]}};
    }
  }
  return {};
}

std::string fill(std::string text, const Slots& slots) {
  for (const auto& [name, value] : slots) {
    const std::string key = "{" + name + "}";
    for (std::size_t pos = text.find(key); pos != std::string::npos; pos = text.find(key, pos + value.size())) {
      text.replace(pos, key.size(), value);
    }
  }
  return text;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

const std::vector<GenerationTemplate>& generation_templates(Attribute attribute) {
  static const std::map<Attribute, std::vector<GenerationTemplate>> all = [] {
    std::map<Attribute, std::vector<GenerationTemplate>> m;
    for (Attribute a : kAllAttributes) m[a] = make_templates(a);
    return m;
  }();
  return all.at(attribute);
}

std::size_t draw_template(Attribute attribute, std::uint64_t seed) {
  const auto& templates = generation_templates(attribute);
  std::mt19937_64 rng(util::mix_seed(seed, 0x7e3a11u));
  const double u = util::uniform01(rng);
  double acc = 0.0;
  for (std::size_t i = 0; i < templates.size(); ++i) {
    acc += templates[i].weight;
    if (u < acc) return i;
  }
  return templates.size() - 1;
}

GenerationPrompt build_generation_prompt(Attribute attribute, std::string_view subcategory,
                                         std::uint64_t seed) {
  const Slots slots = slots_for(attribute, subcategory);
  const auto& t = generation_templates(attribute)[draw_template(attribute, seed)];
  return {attribute, std::string(subcategory), t.id, fill(t.text, slots)};
}

model::Conversation parse_transcript(std::string_view raw) {
  struct Mark {
    std::size_t pos;
    model::Role role;
    std::size_t len;
  };
  std::vector<Mark> marks;
  for (auto [marker, role] : {std::pair{kHumanMarker, model::Role::kUser},
                              std::pair{kAssistantMarker, model::Role::kAssistant}}) {
    for (auto p = raw.find(marker); p != std::string_view::npos; p = raw.find(marker, p + marker.size())) {
      marks.push_back({p, role, marker.size()});
    }
  }
  std::sort(marks.begin(), marks.end(), [](const Mark& a, const Mark& b) { return a.pos < b.pos; });
  const std::string raw_copy(raw);
  if (std::none_of(marks.begin(), marks.end(), [](const Mark& m) { return m.role == model::Role::kUser; })) {
    throw TranscriptParseError("transcript has no '### Human:' marker", raw_copy);
  }
  model::Conversation c;
  for (std::size_t i = 0; i < marks.size(); ++i) {
    const std::size_t begin = marks[i].pos + marks[i].len;
    const std::size_t end = i + 1 < marks.size() ? marks[i + 1].pos : raw.size();
    const model::Role expected = i % 2 == 0 ? model::Role::kUser : model::Role::kAssistant;
    if (marks[i].role != expected) {
      throw TranscriptParseError("transcript turn " + std::to_string(i + 1) + " should be " +
                                     std::string(model::role_name(expected)),
                                 raw_copy);
    }
    auto content = trim(raw.substr(begin, end - begin));
    if (content.empty()) {
      throw TranscriptParseError("transcript turn " + std::to_string(i + 1) + " is empty", raw_copy);
    }
    c.messages.push_back({marks[i].role, std::move(content)});
  }
  return c;
}

std::string serialize_transcript(const model::Conversation& conversation) {
  std::string out;
  for (const auto& m : conversation.messages) {
    if (m.role == model::Role::kSystem) {
      throw Error(ErrorCode::kInvalidArgument, "transcripts cannot carry system messages");
    }
    if (m.content.find(kHumanMarker) != std::string::npos ||
        m.content.find(kAssistantMarker) != std::string::npos) {
      throw Error(ErrorCode::kInvalidArgument, "message content contains a role marker");
    }
    if (!out.empty()) out += '\n';
    out += m.role == model::Role::kUser ? kHumanMarker : kAssistantMarker;
    out += ' ';
    out += m.content;
  }
  return out;
}

model::Conversation generate_conversation(CompletionClient& client, const GenerationPrompt& prompt,
                                          double temperature) {
  CompletionRequest req;
  req.messages = {{model::Role::kSystem, std::string(kGeneratorSystemPrompt)},
                  {model::Role::kUser, prompt.text}};
  req.temperature = temperature;
  req.tag = "generate";
  auto conv = parse_transcript(client.complete(req));
  conv.labels[std::string(attribute_name(prompt.attribute))] = prompt.subcategory;
  return conv;
}

nlohmann::json DatasetRecord::to_json() const {
  return {{"id", id},
          {"attribute", attribute_name(attribute)},
          {"subcategory", subcategory},
          {"messages", conversation.messages_json()},
          {"template_id", template_id},
          {"generator_model", generator_model}};
}

DatasetRecord DatasetRecord::from_json(const nlohmann::json& j) {
  try {
    DatasetRecord r;
    r.id = j.at("id").get<std::string>();
    r.attribute = parse_attribute(j.at("attribute").get<std::string>());
    r.subcategory = j.at("subcategory").get<std::string>();
    subcategory_index(r.attribute, r.subcategory);
    r.conversation.messages = model::Conversation::messages_from_json(j.at("messages"));
    r.conversation.labels[std::string(attribute_name(r.attribute))] = r.subcategory;
    r.template_id = j.value("template_id", "");
    r.generator_model = j.value("generator_model", "");
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kMalformedFile, std::string("dataset record: ") + e.what());
  }
}

std::vector<DatasetRecord> read_dataset(const std::filesystem::path& path) {
  std::vector<DatasetRecord> out;
  std::set<std::string> ids;
  for (const auto& row : util::read_jsonl(path)) {
    out.push_back(DatasetRecord::from_json(row));
    if (!ids.insert(out.back().id).second) {
      throw Error(ErrorCode::kMalformedFile, "duplicate record id " + out.back().id + " in " + path.string());
    }
  }
  return out;
}

void write_dataset(const std::filesystem::path& path, std::span<const DatasetRecord> records) {
  std::vector<nlohmann::json> rows;
  rows.reserve(records.size());
  for (const auto& r : records) rows.push_back(r.to_json());
  util::write_jsonl(path, rows);
}

namespace {

std::string transcript_bytes(const model::Conversation& c) { return util::dump_json(c.messages_json()); }

}  // namespace

std::vector<DatasetRecord> dedup_dataset(std::span<const DatasetRecord> records) {
  std::set<std::string> seen;
  std::vector<DatasetRecord> out;
  for (const auto& r : records) {
    if (seen.insert(transcript_bytes(r.conversation)).second) out.push_back(r);
  }
  return out;
}

std::vector<model::Conversation> dedup_dataset(std::span<const model::Conversation> conversations) {
  std::set<std::string> seen;
  std::vector<model::Conversation> out;
  for (const auto& c : conversations) {
    if (seen.insert(transcript_bytes(c)).second) out.push_back(c);
  }
  return out;
}

GenerationReport generate_dataset(CompletionClient& client, const GenerationJob& job) {
  if (!job.subcategory.empty()) subcategory_index(job.attribute, job.subcategory);
  const auto& subs = subcategories(job.attribute);
  GenerationReport report;
  report.requested = job.count;
  std::vector<std::optional<DatasetRecord>> slots(job.count);
  std::vector<std::string> errors(job.count);
  util::parallel_for(job.count, job.workers, [&](std::size_t i) {
    const std::string sub = job.subcategory.empty() ? subs[i % subs.size()] : job.subcategory;
    const auto prompt = build_generation_prompt(job.attribute, sub, util::mix_seed(job.seed, i));
    char id[64];
    std::snprintf(id, sizeof id, "%s-%06zu", std::string(attribute_name(job.attribute)).c_str(), i);
    try {
      DatasetRecord r;
      r.id = id;
      r.attribute = job.attribute;
      r.subcategory = sub;
      r.conversation = generate_conversation(client, prompt, job.temperature);
      r.template_id = prompt.template_id;
      r.generator_model = client.config().model;
      slots[i] = std::move(r);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kCredential) throw;
      errors[i] = std::string(id) + ": skipped (" + std::string(error_code_name(e.code())) + "): " + e.what();
    }
  });
  std::vector<DatasetRecord> kept;
  for (std::size_t i = 0; i < job.count; ++i) {
    if (slots[i]) {
      kept.push_back(std::move(*slots[i]));
    } else {
      ++report.skipped;
      report.log.push_back(errors[i]);
    }
  }
  report.records = dedup_dataset(kept);
  report.duplicates = kept.size() - report.records.size();
  return report;
}

}  // namespace usermodel::dataset
