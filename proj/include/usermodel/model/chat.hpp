#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "usermodel/model/tokenizer.hpp"

namespace usermodel::model {

enum class Role { kSystem, kUser, kAssistant };

std::string_view role_name(Role role);
Role parse_role(std::string_view name);

struct ChatMessage {
  Role role = Role::kUser;
  std::string content;

  bool operator==(const ChatMessage&) const = default;
};

struct Conversation {
  std::vector<ChatMessage> messages;
  // attribute -> subcategory ground truth, when known
  std::map<std::string, std::string> labels;

  bool operator==(const Conversation&) const = default;

  // Roles alternate user/assistant (starting with user) after an optional
  // leading system message; user and assistant contents are non-empty.
  void validate() const;

  std::size_t user_turns() const;
  std::optional<std::size_t> last_user_index() const;

  // Prefix ending with the k-th user message (1-based), without its reply.
  Conversation truncated_to_user_turns(std::size_t k) const;

  // Stable digest of roles and contents (labels excluded).
  std::string content_hash() const;

  nlohmann::json messages_json() const;
  static std::vector<ChatMessage> messages_from_json(const nlohmann::json& j);
};

inline constexpr std::string_view kDefaultSystemPrompt =
    "You are a helpful, respectful and honest assistant. Always answer as "
    "helpfully as possible, while being safe. Please ensure that your "
    "responses are socially unbiased and positive in nature. If a question "
    "does not make any sense, or is not factually coherent, explain why "
    "instead of answering something not correct. If you don't know the "
    "answer to a question, please don't share false information.";

// Token range of one message's content inside a templated prompt.
struct MessageSpan {
  std::size_t message_index = 0;
  std::size_t begin = 0;  // first content token
  std::size_t end = 0;    // one past the last content token
};

struct TemplatedPrompt {
  std::vector<TokenId> tokens;
  std::vector<MessageSpan> spans;
};

// Llama-2 chat layout:
//   <s>[INST] <<SYS>>\n{system}\n<</SYS>>\n\n{user} [/INST] {assistant} </s><s>[INST] {user} [/INST] ...
// The closing " </s>" of an assistant turn is emitted when the next user
// turn opens, so appending a message always extends the token sequence.
// A leading system message in the conversation replaces `system_prompt`.
TemplatedPrompt apply_chat_template(const Tokenizer& tokenizer,
                                    const Conversation& conversation,
                                    std::string_view system_prompt,
                                    std::size_t context_window);

// Same layout without the alternation check; system messages after the first
// position are rendered as their own instruction block. Used by the
// prompting baselines.
TemplatedPrompt render_messages(const Tokenizer& tokenizer,
                                std::span<const ChatMessage> messages,
                                std::string_view system_prompt,
                                std::size_t context_window);

}  // namespace usermodel::model
