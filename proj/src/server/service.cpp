#include "usermodel/server/service.hpp"

#include <fstream>
#include <random>

#include "usermodel/error.hpp"
#include "usermodel/util/hash.hpp"
#include "usermodel/util/io.hpp"

namespace usermodel::server {

std::string_view ui_condition_name(UiCondition c) {
  switch (c) {
    case UiCondition::kBaseline: return "baseline";
    case UiCondition::kReadOnly: return "read-only";
    case UiCondition::kReadAndControl: return "read-and-control";
  }
  return "baseline";
}

UiCondition parse_ui_condition(std::string_view name) {
  for (auto c : {UiCondition::kBaseline, UiCondition::kReadOnly, UiCondition::kReadAndControl}) {
    if (ui_condition_name(c) == name) return c;
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown ui_condition '" + std::string(name) + "'");
}

nlohmann::json pins_json(const std::vector<steering::PinState>& pins) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& p : pins) j.push_back(p.to_json());
  return j;
}

InferenceQueue::InferenceQueue(std::size_t width) : width_(std::max<std::size_t>(1, width)) {}

void InferenceQueue::acquire() {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [&] { return busy_ < width_; });
  ++busy_;
}

void InferenceQueue::release() {
  {
    std::lock_guard lock(mu_);
    --busy_;
  }
  cv_.notify_one();
}

struct SessionService::Session {
  std::mutex mu;
  std::string id;
  UiCondition condition = UiCondition::kReadOnly;
  model::Conversation conversation;
  std::vector<steering::PinState> pins;
  probes::UserModelSnapshot snapshot;
};

SessionService::SessionService(const model::Engine& engine, std::shared_ptr<const probes::ProbeSet> probe_set,
                               ServiceConfig config)
    : engine_(engine),
      probe_set_(std::move(probe_set)),
      config_(std::move(config)),
      queue_(config_.inference_width) {
  config_.steering.validate(engine_.n_layers());
  id_seed_ = config_.id_seed ? *config_.id_seed : std::random_device{}() ^ (std::uint64_t{std::random_device{}()} << 32);
  if (probe_set_ && probe_set_->model_fingerprint != engine_.fingerprint()) {
    throw Error(ErrorCode::kFingerprintMismatch, "probe set was trained on model " + probe_set_->model_fingerprint +
                                                     " but the engine is " + engine_.fingerprint());
  }
}

SessionService::~SessionService() = default;

void SessionService::require_probes() const {
  if (!probe_set_) throw Error(ErrorCode::kServiceUnavailable, "probes are not loaded");
}

std::shared_ptr<SessionService::Session> SessionService::find(const std::string& id) const {
  std::lock_guard lock(sessions_mu_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw Error(ErrorCode::kSessionNotFound, "no session '" + id + "'");
  return it->second;
}

probes::UserModelSnapshot SessionService::snapshot_for(const model::Conversation& conversation) {
  return queue_.run([&] {
    return probes::read_user_model(engine_, conversation, *probe_set_, config_.unknown_threshold);
  });
}

std::string SessionService::generate_reply(const model::Conversation& conversation,
                                           const std::vector<steering::PinState>& pins) {
  return queue_.run([&] {
    return steering::generate_with_pins(engine_, conversation, pins, *probe_set_, config_.steering,
                                        config_.generation)
        .text;
  });
}

void SessionService::persist(const Session& s, nlohmann::json event) {
  if (!config_.persist_dir) return;
  event["session_id"] = s.id;
  event["pins"] = pins_json(s.pins);
  std::filesystem::create_directories(*config_.persist_dir);
  std::ofstream out(*config_.persist_dir / (s.id + ".jsonl"), std::ios::app | std::ios::binary);
  out << util::to_jsonl_line(event);
}

SessionCreated SessionService::create_session(UiCondition condition) {
  require_probes();
  auto s = std::make_shared<Session>();
  s->condition = condition;
  s->snapshot = probes::UserModelSnapshot::all_unknown();
  {
    std::lock_guard lock(sessions_mu_);
    do {
      s->id = "s" + util::hex64(util::mix_seed(id_seed_, next_id_++));
    } while (sessions_.count(s->id));
    sessions_[s->id] = s;
  }
  persist(*s, {{"event", "create"}, {"ui_condition", ui_condition_name(condition)}});
  SessionCreated out{s->id, std::nullopt};
  if (condition != UiCondition::kBaseline) out.snapshot = s->snapshot;
  return out;
}

TurnResult SessionService::chat(const std::string& session_id, const std::string& text) {
  require_probes();
  if (text.empty()) throw Error(ErrorCode::kInvalidArgument, "text must not be empty");
  auto s = find(session_id);
  std::lock_guard lock(s->mu);
  model::Conversation next = s->conversation;
  next.messages.push_back({model::Role::kUser, text});
  next.validate();
  const auto reply = generate_reply(next, s->pins);
  next.messages.push_back({model::Role::kAssistant, reply});
  auto snapshot = snapshot_for(next);
  s->conversation = std::move(next);
  s->snapshot = std::move(snapshot);
  persist(*s, {{"event", "chat"}, {"text", text}, {"reply", reply}});
  TurnResult out{reply, std::nullopt, false};
  if (s->condition != UiCondition::kBaseline) out.snapshot = s->snapshot;
  return out;
}

UserModelView SessionService::user_model(const std::string& session_id) {
  auto s = find(session_id);
  std::lock_guard lock(s->mu);
  UserModelView v;
  if (s->condition != UiCondition::kBaseline) v.snapshot = s->snapshot;
  v.pins = s->pins;
  return v;
}

std::vector<steering::PinState> SessionService::set_pin(const std::string& session_id,
                                                        const steering::PinState& pin) {
  auto s = find(session_id);
  std::lock_guard lock(s->mu);
  if (s->condition != UiCondition::kReadAndControl) {
    throw Error(ErrorCode::kForbidden, "pins are only available in the read-and-control condition");
  }
  require_probes();
  steering::upsert_pin(s->pins, pin);
  persist(*s, {{"event", "pin"}, {"pin", pin.to_json()}});
  return s->pins;
}

std::vector<steering::PinState> SessionService::clear_pin(const std::string& session_id, Attribute attribute) {
  auto s = find(session_id);
  std::lock_guard lock(s->mu);
  if (s->condition != UiCondition::kReadAndControl) {
    throw Error(ErrorCode::kForbidden, "pins are only available in the read-and-control condition");
  }
  steering::remove_pin(s->pins, attribute);
  persist(*s, {{"event", "unpin"}, {"attribute", attribute_name(attribute)}});
  return s->pins;
}

TurnResult SessionService::regenerate(const std::string& session_id) {
  require_probes();
  auto s = find(session_id);
  std::lock_guard lock(s->mu);
  if (s->conversation.messages.empty() || s->conversation.messages.back().role != model::Role::kAssistant) {
    throw Error(ErrorCode::kNothingToRegenerate, "session has no assistant reply to regenerate");
  }
  model::Conversation prefix = s->conversation;
  const std::string old = prefix.messages.back().content;
  prefix.messages.pop_back();
  const auto reply = generate_reply(prefix, s->pins);
  prefix.messages.push_back({model::Role::kAssistant, reply});
  auto snapshot = snapshot_for(prefix);
  s->conversation = std::move(prefix);
  s->snapshot = std::move(snapshot);
  const bool changed = reply != old;
  persist(*s, {{"event", "regenerate"}, {"reply", reply}, {"answer_changed", changed}});
  TurnResult out{reply, std::nullopt, changed};
  if (s->condition != UiCondition::kBaseline) out.snapshot = s->snapshot;
  return out;
}

model::Conversation SessionService::conversation(const std::string& session_id) {
  auto s = find(session_id);
  std::lock_guard lock(s->mu);
  return s->conversation;
}

std::size_t SessionService::session_count() const {
  std::lock_guard lock(sessions_mu_);
  return sessions_.size();
}

}  // namespace usermodel::server
