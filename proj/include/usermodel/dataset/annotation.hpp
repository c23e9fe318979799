#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "usermodel/dataset/client.hpp"
#include "usermodel/dataset/generation.hpp"

namespace usermodel::dataset {

inline constexpr std::string_view kInconclusive = "inconclusive";

struct Annotation {
  std::string id;
  // A subcategory or "inconclusive"; empty when the judge reply was unusable.
  std::optional<std::string> judged;
  std::string topic;
  std::vector<std::string> extra;
  bool flagged = false;
  std::string error;

  bool inconclusive() const { return judged && *judged == kInconclusive; }
  bool operator==(const Annotation&) const = default;
  nlohmann::json to_json() const;
  static Annotation from_json(const nlohmann::json& j);
};

std::vector<Annotation> read_annotations(const std::filesystem::path& path);
void write_annotations(const std::filesystem::path& path, std::span<const Annotation> annotations);

// Fills the versioned judge prompt (data/prompts/annotation.txt).
std::string build_annotation_prompt(const model::Conversation& conversation, Attribute attribute);

// Strict: the reply must be one JSON object with a string label (a
// subcategory, its display form, or "inconclusive"), a string topic and a
// list of strings. Anything else yields a flagged annotation.
Annotation parse_annotation_reply(std::string id, Attribute attribute, const std::string& reply);

// Temperature 0. Transport failures propagate; malformed replies are flagged.
Annotation annotate_conversation(CompletionClient& client, const DatasetRecord& record);

std::vector<Annotation> annotate_dataset(CompletionClient& client, std::span<const DatasetRecord> records,
                                         std::size_t workers = 4);

struct AttributeStats {
  Attribute attribute = Attribute::kGender;
  std::size_t conversations = 0;
  std::size_t judged = 0;  // subcategory verdicts
  std::size_t agree = 0;
  std::size_t inconclusive = 0;
  std::size_t flagged = 0;
  // agree / judged; empty when nothing was judged.
  std::optional<double> consistency;
  std::size_t topics = 0;
  // Share of usable annotations listing other attributes.
  std::optional<double> correlation;

  nlohmann::json to_json() const;
};

struct DatasetStats {
  std::vector<AttributeStats> attributes;  // scheme order, present attributes only

  nlohmann::json to_json() const;
  std::string table() const;
};

// Throws kCoverage listing every conversation id with no annotation.
DatasetStats dataset_stats(std::span<const DatasetRecord> records, std::span<const Annotation> annotations);

}  // namespace usermodel::dataset
