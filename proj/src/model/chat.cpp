#include "usermodel/model/chat.hpp"

#include "usermodel/error.hpp"
#include "usermodel/util/hash.hpp"

namespace usermodel::model {

std::string_view role_name(Role role) {
  switch (role) {
    case Role::kSystem: return "system";
    case Role::kUser: return "user";
    case Role::kAssistant: return "assistant";
  }
  return "user";
}

Role parse_role(std::string_view name) {
  if (name == "system") return Role::kSystem;
  if (name == "user") return Role::kUser;
  if (name == "assistant") return Role::kAssistant;
  throw Error(ErrorCode::kInvalidArgument, "unknown role '" + std::string(name) + "'");
}

void Conversation::validate() const {
  std::size_t i = 0;
  if (!messages.empty() && messages.front().role == Role::kSystem) i = 1;
  Role expected = Role::kUser;
  for (; i < messages.size(); ++i) {
    const auto& m = messages[i];
    if (m.role != expected) {
      throw Error(ErrorCode::kInvalidArgument,
                  "conversation: message " + std::to_string(i) + " should be " +
                      std::string(role_name(expected)) + ", got " +
                      std::string(role_name(m.role)));
    }
    if (m.content.empty()) {
      throw Error(ErrorCode::kInvalidArgument,
                  "conversation: message " + std::to_string(i) + " is empty");
    }
    expected = expected == Role::kUser ? Role::kAssistant : Role::kUser;
  }
}

std::size_t Conversation::user_turns() const {
  std::size_t n = 0;
  for (const auto& m : messages) n += m.role == Role::kUser ? 1 : 0;
  return n;
}

std::optional<std::size_t> Conversation::last_user_index() const {
  for (std::size_t i = messages.size(); i > 0; --i) {
    if (messages[i - 1].role == Role::kUser) return i - 1;
  }
  return std::nullopt;
}

Conversation Conversation::truncated_to_user_turns(std::size_t k) const {
  Conversation out;
  out.labels = labels;
  std::size_t seen = 0;
  for (const auto& m : messages) {
    if (m.role == Role::kUser) {
      if (seen == k) break;
      ++seen;
    } else if (m.role == Role::kAssistant && seen == k) {
      break;
    }
    out.messages.push_back(m);
  }
  return out;
}

std::string Conversation::content_hash() const {
  util::Fnv1a h;
  for (const auto& m : messages) {
    h.update(role_name(m.role));
    h.update(std::string_view("\x1f", 1));
    h.update(m.content);
    h.update(std::string_view("\x1e", 1));
  }
  return h.hex();
}

nlohmann::json Conversation::messages_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& m : messages) {
    arr.push_back({{"role", role_name(m.role)}, {"content", m.content}});
  }
  return arr;
}

std::vector<ChatMessage> Conversation::messages_from_json(const nlohmann::json& j) {
  std::vector<ChatMessage> out;
  for (const auto& m : j) {
    out.push_back({parse_role(m.at("role").get<std::string>()), m.at("content").get<std::string>()});
  }
  return out;
}

namespace {

class PromptBuilder {
 public:
  explicit PromptBuilder(const Tokenizer& tok) : tok_(tok) {}

  void text(std::string_view piece) {
    auto ids = tok_.encode(piece);
    out_.tokens.insert(out_.tokens.end(), ids.begin(), ids.end());
  }

  void content(std::size_t index, std::string_view body) {
    const std::size_t begin = out_.tokens.size();
    text(body);
    out_.spans.push_back({index, begin, out_.tokens.size()});
  }

  TemplatedPrompt finish(std::size_t context_window) {
    if (out_.tokens.size() > context_window) {
      throw Error(ErrorCode::kContextOverflow,
                  "prompt needs " + std::to_string(out_.tokens.size()) +
                      " tokens but the context budget is " + std::to_string(context_window));
    }
    return std::move(out_);
  }

 private:
  const Tokenizer& tok_;
  TemplatedPrompt out_;
};

std::string system_block(std::string_view system) {
  return "<<SYS>>\n" + std::string(system) + "\n<</SYS>>\n\n";
}

TemplatedPrompt render(const Tokenizer& tokenizer, std::span<const ChatMessage> messages,
                       std::string_view system_prompt, std::size_t context_window) {
  PromptBuilder b(tokenizer);
  std::size_t first = 0;
  std::string_view system = system_prompt;
  if (!messages.empty() && messages.front().role == Role::kSystem) {
    system = messages.front().content;
    first = 1;
  }
  b.text("<s>[INST] ");
  if (!system.empty()) b.text(system_block(system));

  std::optional<Role> prev;
  for (std::size_t i = first; i < messages.size(); ++i) {
    const auto& m = messages[i];
    switch (m.role) {
      case Role::kUser:
        if (prev == Role::kAssistant) {
          b.text(" </s><s>[INST] ");
        } else if (prev == Role::kUser || prev == Role::kSystem) {
          b.text(" [INST] ");
        }
        b.content(i, m.content);
        b.text(" [/INST]");
        break;
      case Role::kAssistant:
        if (!prev) b.text(" [/INST]");
        b.text(" ");
        b.content(i, m.content);
        break;
      case Role::kSystem:
        if (prev == Role::kAssistant) {
          b.text(" </s><s>[INST] ");
        } else if (prev) {
          b.text(" [INST] ");
        }
        b.text("<<SYS>>\n");
        b.content(i, m.content);
        b.text("\n<</SYS>> [/INST]");
        break;
    }
    prev = m.role;
  }
  return b.finish(context_window);
}

}  // namespace

TemplatedPrompt apply_chat_template(const Tokenizer& tokenizer,
                                    const Conversation& conversation,
                                    std::string_view system_prompt,
                                    std::size_t context_window) {
  conversation.validate();
  return render(tokenizer, conversation.messages, system_prompt, context_window);
}

TemplatedPrompt render_messages(const Tokenizer& tokenizer,
                                std::span<const ChatMessage> messages,
                                std::string_view system_prompt,
                                std::size_t context_window) {
  return render(tokenizer, messages, system_prompt, context_window);
}

}  // namespace usermodel::model
