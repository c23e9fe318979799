#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "usermodel/dataset/client.hpp"
#include "usermodel/error.hpp"
#include "usermodel/model/chat.hpp"
#include "usermodel/probes/scheme.hpp"

namespace usermodel::dataset {

inline constexpr std::string_view kGeneratorSystemPrompt =
    "You are a chatbot who will actively talk with a user and answer all the questions asked by the user.";

inline constexpr std::string_view kHumanMarker = "### Human:";
inline constexpr std::string_view kAssistantMarker = "### Assistant:";

struct GenerationTemplate {
  Attribute attribute = Attribute::kGender;
  std::string id;
  // Slots: {gender}, {age}, {year_range}, {education}, {socioeco},
  // {class_name}, {other_class_name}.
  std::string text;
  double weight = 0.0;
};

const std::vector<GenerationTemplate>& generation_templates(Attribute attribute);

// Index drawn by weight from a seeded stream.
std::size_t draw_template(Attribute attribute, std::uint64_t seed);

struct GenerationPrompt {
  Attribute attribute = Attribute::kGender;
  std::string subcategory;
  std::string template_id;
  std::string text;
};

GenerationPrompt build_generation_prompt(Attribute attribute, std::string_view subcategory,
                                         std::uint64_t seed);

class TranscriptParseError : public Error {
 public:
  TranscriptParseError(const std::string& message, std::string raw)
      : Error(ErrorCode::kParse, message), raw_(std::move(raw)) {}
  const std::string& raw() const { return raw_; }

 private:
  std::string raw_;
};

// Splits on the role markers. Text before the first marker is ignored;
// contents are whitespace-trimmed. Throws TranscriptParseError when no human
// marker exists, the first turn is not human, roles repeat, or a turn is
// empty.
model::Conversation parse_transcript(std::string_view raw);
// One "### Human: ..." / "### Assistant: ..." line per message, newline
// separated. Throws kInvalidArgument for system messages or contents that
// contain a marker.
std::string serialize_transcript(const model::Conversation& conversation);

// Sends the prompt with the generator system prompt and parses the reply.
// The assigned label is attached to the returned conversation.
model::Conversation generate_conversation(CompletionClient& client, const GenerationPrompt& prompt,
                                          double temperature = 1.0);

struct DatasetRecord {
  std::string id;
  Attribute attribute = Attribute::kGender;
  std::string subcategory;
  model::Conversation conversation;
  std::string template_id;
  std::string generator_model;

  bool operator==(const DatasetRecord&) const = default;
  nlohmann::json to_json() const;
  static DatasetRecord from_json(const nlohmann::json& j);
};

std::vector<DatasetRecord> read_dataset(const std::filesystem::path& path);
void write_dataset(const std::filesystem::path& path, std::span<const DatasetRecord> records);

// Keeps the first of each group of byte-identical transcripts; stable.
std::vector<DatasetRecord> dedup_dataset(std::span<const DatasetRecord> records);
std::vector<model::Conversation> dedup_dataset(std::span<const model::Conversation> conversations);

struct GenerationJob {
  Attribute attribute = Attribute::kGender;
  // Round-robin over the scheme when empty.
  std::string subcategory;
  std::size_t count = 0;
  std::uint64_t seed = 0;
  double temperature = 1.0;
  std::size_t workers = 4;
};

struct GenerationReport {
  std::vector<DatasetRecord> records;  // deduplicated, in job order
  std::size_t requested = 0;
  std::size_t skipped = 0;
  std::size_t duplicates = 0;
  std::vector<std::string> log;
};

// Job i uses seed mix_seed(seed, i). Failed requests and unparseable
// transcripts are skipped and logged.
GenerationReport generate_dataset(CompletionClient& client, const GenerationJob& job);

}  // namespace usermodel::dataset
