#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "usermodel/model/engine.hpp"
#include "usermodel/probes/user_model.hpp"

namespace usermodel::eval {

enum class BaselineMethod { kUserPrompt, kSystemPrompt, kChatbotPrompt };

std::string_view baseline_method_name(BaselineMethod method);
BaselineMethod parse_baseline_method(std::string_view name);

// Comma separated display forms in scheme order, e.g. "male, female".
std::string subcategory_options(Attribute attribute);
std::string baseline_prompt_text(BaselineMethod method, Attribute attribute);

// User prompt: appended as a user message. System prompt: appended as a
// system message. Chatbot prompt: the conversation is cut after its last
// user message and the prompt becomes the start of the assistant reply.
std::vector<model::ChatMessage> baseline_messages(const model::Conversation& conversation,
                                                  Attribute attribute, BaselineMethod method);

// Case-insensitive substring patterns read from a text file (one per line,
// '#' comments).
class RefusalPatterns {
 public:
  static RefusalPatterns load(const std::filesystem::path& path);
  // data/refusal_patterns.txt, loaded once.
  static const RefusalPatterns& standard();

  bool matches(std::string_view text) const;
  const std::vector<std::string>& patterns() const { return patterns_; }

 private:
  std::vector<std::string> patterns_;
};

bool detect_refusal(std::string_view response);

struct BaselineReading {
  enum class Outcome { kPredicted, kRefusal, kUnparseable };
  Outcome outcome = Outcome::kUnparseable;
  std::optional<std::string> subcategory;
  std::string reply;

  nlohmann::json to_json() const;
};

// Refusal first; then the longest whole-word surface form of any
// subcategory found in the reply (ties go to scheme order).
BaselineReading map_reply(Attribute attribute, std::string_view reply,
                          const RefusalPatterns& patterns = RefusalPatterns::standard());

BaselineReading prompt_baseline_read(const model::Engine& engine, const model::Conversation& conversation,
                                     Attribute attribute, BaselineMethod method,
                                     const model::GenerationParams& params = {16, 0});

using SnapshotFn = std::function<probes::UserModelSnapshot(const model::Conversation&)>;

struct CurvePoint {
  std::size_t turn = 0;
  std::string group;      // empty without a group-by key
  std::string attribute;  // attribute name or "overall"
  double accuracy = 0.0;
  std::size_t n = 0;
};

// For t = 1..max turns: every session with at least t user turns is cut to t
// turns and read; a reading counts as correct when its top equals the
// session's label (unknown is incorrect). "overall" pools every
// (session, attribute) pair. Attributes without labels are skipped.
std::vector<CurvePoint> accuracy_by_turn(std::span<const model::Conversation> sessions,
                                         const SnapshotFn& snapshot,
                                         std::span<const Attribute> attributes,
                                         std::optional<Attribute> group_by = std::nullopt);

// "turn,attribute,accuracy,n", with a group column after turn when grouped.
std::string curve_csv(std::span<const CurvePoint> points);

}  // namespace usermodel::eval
