#include "usermodel/eval/baselines.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <map>

#include "usermodel/error.hpp"
#include "usermodel/util/io.hpp"

namespace usermodel::eval {

std::string_view baseline_method_name(BaselineMethod method) {
  switch (method) {
    case BaselineMethod::kUserPrompt: return "user-prompt";
    case BaselineMethod::kSystemPrompt: return "system-prompt";
    case BaselineMethod::kChatbotPrompt: return "chatbot-prompt";
  }
  return "user-prompt";
}

BaselineMethod parse_baseline_method(std::string_view name) {
  for (auto m : {BaselineMethod::kUserPrompt, BaselineMethod::kSystemPrompt, BaselineMethod::kChatbotPrompt}) {
    if (baseline_method_name(m) == name) return m;
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown baseline method '" + std::string(name) + "'");
}

std::string subcategory_options(Attribute attribute) {
  std::string out;
  for (const auto& sub : subcategories(attribute)) {
    if (!out.empty()) out += ", ";
    out += subcategory_display(attribute, sub);
  }
  return out;
}

std::string baseline_prompt_text(BaselineMethod method, Attribute attribute) {
  const std::string demographic(attribute_display(attribute));
  const std::string subs = subcategory_options(attribute);
  switch (method) {
    case BaselineMethod::kUserPrompt:
      return "Based on our conversation, what do you think my " + demographic +
             " is? You answer should be one of " + subs + ". Do not add other details in your response.";
    case BaselineMethod::kSystemPrompt:
      return "Based on the history of conversation, what is the " + demographic +
             " of this user? You answer should be one of " + subs +
             ". Do not add other details in your response.";
    case BaselineMethod::kChatbotPrompt:
      return "Based on the conversation, given the options " + subs + ", I think the " + demographic +
             " of this user is";
  }
  return {};
}

std::vector<model::ChatMessage> baseline_messages(const model::Conversation& conversation,
                                                  Attribute attribute, BaselineMethod method) {
  if (conversation.messages.empty()) throw Error(ErrorCode::kEmptyInput, "conversation is empty");
  const std::string text = baseline_prompt_text(method, attribute);
  switch (method) {
    case BaselineMethod::kUserPrompt: {
      auto msgs = conversation.messages;
      msgs.push_back({model::Role::kUser, text});
      return msgs;
    }
    case BaselineMethod::kSystemPrompt: {
      auto msgs = conversation.messages;
      msgs.push_back({model::Role::kSystem, text});
      return msgs;
    }
    case BaselineMethod::kChatbotPrompt: {
      const auto last = conversation.last_user_index();
      if (!last) throw Error(ErrorCode::kEmptyInput, "conversation has no user message");
      std::vector<model::ChatMessage> msgs(conversation.messages.begin(),
                                           conversation.messages.begin() + static_cast<long>(*last) + 1);
      msgs.push_back({model::Role::kAssistant, text});
      return msgs;
    }
  }
  return {};
}

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

bool is_word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

bool contains_word(const std::string& hay, const std::string& needle) {
  for (auto p = hay.find(needle); p != std::string::npos; p = hay.find(needle, p + 1)) {
    const bool left = p == 0 || !is_word_char(hay[p - 1]);
    const std::size_t end = p + needle.size();
    const bool right = end >= hay.size() || !is_word_char(hay[end]);
    if (left && right) return true;
  }
  return false;
}

std::vector<std::string> surface_forms(Attribute attribute, const std::string& sub) {
  std::vector<std::string> forms{sub, lower(subcategory_display(attribute, sub))};
  static const std::map<std::string, std::vector<std::string>> extra = {
      {"lower", {"low"}},
      {"upper", {"high"}},
      {"college-and-beyond", {"college and more", "college"}},
  };
  if (auto it = extra.find(sub); it != extra.end()) forms.insert(forms.end(), it->second.begin(), it->second.end());
  return forms;
}

}  // namespace

RefusalPatterns RefusalPatterns::load(const std::filesystem::path& path) {
  RefusalPatterns p;
  for (const auto& line : util::read_lines(path)) p.patterns_.push_back(lower(line));
  return p;
}

const RefusalPatterns& RefusalPatterns::standard() {
  static const RefusalPatterns p = load(util::data_path("refusal_patterns.txt"));
  return p;
}

bool RefusalPatterns::matches(std::string_view text) const {
  if (text.empty()) return false;
  const auto hay = lower(text);
  return std::any_of(patterns_.begin(), patterns_.end(),
                     [&](const std::string& p) { return hay.find(p) != std::string::npos; });
}

bool detect_refusal(std::string_view response) { return RefusalPatterns::standard().matches(response); }

nlohmann::json BaselineReading::to_json() const {
  static const char* names[] = {"predicted", "refusal", "unparseable"};
  nlohmann::json j{{"outcome", names[static_cast<int>(outcome)]}, {"subcategory", nullptr}, {"reply", reply}};
  if (subcategory) j["subcategory"] = *subcategory;
  return j;
}

BaselineReading map_reply(Attribute attribute, std::string_view reply, const RefusalPatterns& patterns) {
  BaselineReading r;
  r.reply = std::string(reply);
  if (patterns.matches(reply)) {
    r.outcome = BaselineReading::Outcome::kRefusal;
    return r;
  }
  const auto hay = lower(reply);
  std::size_t best_len = 0;
  for (const auto& sub : subcategories(attribute)) {
    for (const auto& form : surface_forms(attribute, sub)) {
      if (form.size() > best_len && contains_word(hay, form)) {
        best_len = form.size();
        r.subcategory = sub;
      }
    }
  }
  r.outcome = r.subcategory ? BaselineReading::Outcome::kPredicted : BaselineReading::Outcome::kUnparseable;
  return r;
}

BaselineReading prompt_baseline_read(const model::Engine& engine, const model::Conversation& conversation,
                                     Attribute attribute, BaselineMethod method,
                                     const model::GenerationParams& params) {
  const auto msgs = baseline_messages(conversation, attribute, method);
  const auto prompt =
      model::render_messages(engine.tokenizer(), msgs, model::kDefaultSystemPrompt, engine.config().context_window);
  const auto out = engine.generate_from_tokens(prompt.tokens, params);
  return map_reply(attribute, out.text);
}

std::vector<CurvePoint> accuracy_by_turn(std::span<const model::Conversation> sessions,
                                         const SnapshotFn& snapshot, std::span<const Attribute> attributes,
                                         std::optional<Attribute> group_by) {
  if (sessions.empty()) throw Error(ErrorCode::kEmptyInput, "no sessions to evaluate");
  std::size_t max_turns = 0;
  for (const auto& s : sessions) max_turns = std::max(max_turns, s.user_turns());

  struct Tally {
    std::size_t correct = 0, n = 0;
  };
  std::vector<CurvePoint> out;
  for (std::size_t t = 1; t <= max_turns; ++t) {
    // group -> attribute -> tally
    std::map<std::string, std::map<std::string, Tally>> tallies;
    for (const auto& s : sessions) {
      if (s.user_turns() < t) continue;
      std::string group;
      if (group_by) {
        auto it = s.labels.find(std::string(attribute_name(*group_by)));
        if (it == s.labels.end()) continue;
        group = it->second;
      }
      const auto snap = snapshot(s.truncated_to_user_turns(t));
      for (Attribute a : attributes) {
        auto truth = s.labels.find(std::string(attribute_name(a)));
        if (truth == s.labels.end()) continue;
        const auto& reading = snap.at(a);
        const bool ok = reading.top && *reading.top == truth->second;
        for (const std::string& key : {std::string(attribute_name(a)), std::string("overall")}) {
          auto& tally = tallies[group][key];
          ++tally.n;
          tally.correct += ok ? 1 : 0;
        }
      }
    }
    for (const auto& [group, by_attr] : tallies) {
      auto emit = [&](const std::string& key) {
        auto it = by_attr.find(key);
        if (it == by_attr.end() || it->second.n == 0) return;
        out.push_back({t, group, key,
                       static_cast<double>(it->second.correct) / static_cast<double>(it->second.n),
                       it->second.n});
      };
      for (Attribute a : attributes) emit(std::string(attribute_name(a)));
      emit("overall");
    }
  }
  return out;
}

std::string curve_csv(std::span<const CurvePoint> points) {
  const bool grouped = std::any_of(points.begin(), points.end(), [](const CurvePoint& p) { return !p.group.empty(); });
  std::string out = grouped ? "turn,group,attribute,accuracy,n\n" : "turn,attribute,accuracy,n\n";
  char buf[64];
  for (const auto& p : points) {
    out += std::to_string(p.turn) + ",";
    if (grouped) out += p.group + ",";
    std::snprintf(buf, sizeof buf, "%.6f", p.accuracy);
    out += p.attribute + "," + buf + "," + std::to_string(p.n) + "\n";
  }
  return out;
}

}  // namespace usermodel::eval
