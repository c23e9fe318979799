#include "usermodel/dataset/annotation.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <map>
#include <set>

#include "usermodel/error.hpp"
#include "usermodel/util/io.hpp"
#include "usermodel/util/parallel.hpp"

namespace usermodel::dataset {

nlohmann::json Annotation::to_json() const {
  nlohmann::json j{{"id", id}, {"judged", nullptr}, {"topic", topic}, {"extra", extra}};
  if (judged) j["judged"] = *judged;
  if (flagged) {
    j["flagged"] = true;
    j["error"] = error;
  }
  return j;
}

Annotation Annotation::from_json(const nlohmann::json& j) {
  try {
    Annotation a;
    a.id = j.at("id").get<std::string>();
    if (!j.at("judged").is_null()) a.judged = j["judged"].get<std::string>();
    a.topic = j.value("topic", "");
    a.extra = j.value("extra", std::vector<std::string>{});
    a.flagged = j.value("flagged", false);
    a.error = j.value("error", "");
    return a;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kMalformedFile, std::string("annotation record: ") + e.what());
  }
}

std::vector<Annotation> read_annotations(const std::filesystem::path& path) {
  std::vector<Annotation> out;
  for (const auto& row : util::read_jsonl(path)) out.push_back(Annotation::from_json(row));
  return out;
}

void write_annotations(const std::filesystem::path& path, std::span<const Annotation> annotations) {
  std::vector<nlohmann::json> rows;
  for (const auto& a : annotations) rows.push_back(a.to_json());
  util::write_jsonl(path, rows);
}

namespace {

std::string normalize_label(std::string s) {
  std::string out;
  bool pending_dash = false;
  for (unsigned char ch : s) {
    if (std::isspace(ch) || ch == '_' || ch == '-') {
      pending_dash = !out.empty();
      continue;
    }
    if (pending_dash) out += '-';
    pending_dash = false;
    out += static_cast<char>(std::tolower(ch));
  }
  return out;
}

std::string normalize_topic(const std::string& s) {
  std::string out;
  for (unsigned char ch : s) {
    if (std::isspace(ch)) {
      if (!out.empty() && out.back() != ' ') out += ' ';
    } else {
      out += static_cast<char>(std::tolower(ch));
    }
  }
  while (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

void replace_all(std::string& text, const std::string& key, const std::string& value) {
  for (auto pos = text.find(key); pos != std::string::npos; pos = text.find(key, pos + value.size())) {
    text.replace(pos, key.size(), value);
  }
}

}  // namespace

std::string build_annotation_prompt(const model::Conversation& conversation, Attribute attribute) {
  static const std::string tmpl = util::read_text(util::data_path("prompts/annotation.txt"));
  std::string options;
  for (const auto& sub : subcategories(attribute)) {
    if (!options.empty()) options += ", ";
    options += sub;
  }
  std::string text = tmpl;
  while (!text.empty() && (text.back() == '\n' || text.back() == ' ')) text.pop_back();
  replace_all(text, "{transcript}", serialize_transcript(conversation));
  replace_all(text, "{options}", options);
  replace_all(text, "{attribute}", std::string(attribute_display(attribute)));
  return text;
}

Annotation parse_annotation_reply(std::string id, Attribute attribute, const std::string& reply) {
  Annotation a;
  a.id = std::move(id);
  auto flag = [&](std::string why) {
    a.flagged = true;
    a.error = std::move(why);
    a.judged.reset();
    return a;
  };
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(reply);
  } catch (const nlohmann::json::exception&) {
    return flag("judge reply is not JSON");
  }
  if (!j.is_object()) return flag("judge reply is not a JSON object");
  if (!j.contains("label") || !j["label"].is_string()) return flag("judge reply has no string 'label'");
  if (!j.contains("topic") || !j["topic"].is_string()) return flag("judge reply has no string 'topic'");
  if (!j.contains("extra_attributes") || !j["extra_attributes"].is_array()) {
    return flag("judge reply has no list 'extra_attributes'");
  }
  for (const auto& e : j["extra_attributes"]) {
    if (!e.is_string()) return flag("extra_attributes must be strings");
    a.extra.push_back(e.get<std::string>());
  }
  const auto label = normalize_label(j["label"].get<std::string>());
  if (label == kInconclusive) {
    a.judged = std::string(kInconclusive);
  } else {
    for (const auto& sub : subcategories(attribute)) {
      if (label == sub || label == normalize_label(subcategory_display(attribute, sub))) a.judged = sub;
    }
    if (!a.judged) return flag("label '" + j["label"].get<std::string>() + "' is outside the scheme");
  }
  a.topic = normalize_topic(j["topic"].get<std::string>());
  return a;
}

Annotation annotate_conversation(CompletionClient& client, const DatasetRecord& record) {
  CompletionRequest req;
  req.messages = {{model::Role::kUser, build_annotation_prompt(record.conversation, record.attribute)}};
  req.temperature = 0.0;
  req.tag = "annotate";
  return parse_annotation_reply(record.id, record.attribute, client.complete(req));
}

std::vector<Annotation> annotate_dataset(CompletionClient& client, std::span<const DatasetRecord> records,
                                         std::size_t workers) {
  std::vector<Annotation> out(records.size());
  util::parallel_for(records.size(), workers,
                     [&](std::size_t i) { out[i] = annotate_conversation(client, records[i]); });
  return out;
}

nlohmann::json AttributeStats::to_json() const {
  nlohmann::json j{{"attribute", attribute_name(attribute)},
                   {"conversations", conversations},
                   {"judged", judged},
                   {"agree", agree},
                   {"inconclusive", inconclusive},
                   {"flagged", flagged},
                   {"consistency", nullptr},
                   {"topics", topics},
                   {"correlation", nullptr}};
  if (consistency) j["consistency"] = *consistency;
  if (correlation) j["correlation"] = *correlation;
  return j;
}

nlohmann::json DatasetStats::to_json() const {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& a : attributes) j.push_back(a.to_json());
  return j;
}

std::string DatasetStats::table() const {
  std::string out = "attribute  convos  consistency  topics  correlation\n";
  char line[160];
  auto pct = [](const std::optional<double>& v) {
    if (!v) return std::string("n/a");
    char b[16];
    std::snprintf(b, sizeof b, "%.1f%%", *v * 100.0);
    return std::string(b);
  };
  for (const auto& a : attributes) {
    std::snprintf(line, sizeof line, "%-10s %6zu  %11s  %6zu  %11s\n",
                  std::string(attribute_name(a.attribute)).c_str(), a.conversations,
                  pct(a.consistency).c_str(), a.topics, pct(a.correlation).c_str());
    out += line;
  }
  return out;
}

DatasetStats dataset_stats(std::span<const DatasetRecord> records, std::span<const Annotation> annotations) {
  std::map<std::string, const Annotation*> by_id;
  for (const auto& a : annotations) by_id[a.id] = &a;
  std::vector<std::string> missing;
  for (const auto& r : records) {
    if (!by_id.count(r.id)) missing.push_back(r.id);
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& id : missing) list += (list.empty() ? "" : ", ") + id;
    throw Error(ErrorCode::kCoverage, "annotations missing for: " + list);
  }
  DatasetStats stats;
  for (Attribute attr : kAllAttributes) {
    AttributeStats s;
    s.attribute = attr;
    std::set<std::string> topics;
    std::size_t usable = 0, with_extra = 0;
    for (const auto& r : records) {
      if (r.attribute != attr) continue;
      ++s.conversations;
      const Annotation& a = *by_id.at(r.id);
      if (a.flagged || !a.judged) {
        ++s.flagged;
        continue;
      }
      ++usable;
      if (!a.extra.empty()) ++with_extra;
      if (!a.topic.empty()) topics.insert(a.topic);
      if (a.inconclusive()) {
        ++s.inconclusive;
      } else {
        ++s.judged;
        if (*a.judged == r.subcategory) ++s.agree;
      }
    }
    if (s.conversations == 0) continue;
    if (s.judged > 0) s.consistency = static_cast<double>(s.agree) / static_cast<double>(s.judged);
    if (usable > 0) s.correlation = static_cast<double>(with_extra) / static_cast<double>(usable);
    s.topics = topics.size();
    stats.attributes.push_back(s);
  }
  return stats;
}

}  // namespace usermodel::dataset
