#pragma once

#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "usermodel/model/engine.hpp"
#include "usermodel/probes/user_model.hpp"
#include "usermodel/steering/steering.hpp"

namespace usermodel::server {

enum class UiCondition { kBaseline, kReadOnly, kReadAndControl };

std::string_view ui_condition_name(UiCondition c);
UiCondition parse_ui_condition(std::string_view name);

struct ServiceConfig {
  model::GenerationParams generation{64, 1};
  steering::SteeringConfig steering;
  double unknown_threshold = probes::kDefaultUnknownThreshold;
  // Concurrent engine calls allowed.
  std::size_t inference_width = 1;
  // One JSONL event log per session when set.
  std::optional<std::filesystem::path> persist_dir;
  // Session ids are derived from this seed; random when empty.
  std::optional<std::uint64_t> id_seed;
};

struct SessionCreated {
  std::string session_id;
  std::optional<probes::UserModelSnapshot> snapshot;  // empty for baseline
};

struct TurnResult {
  std::string reply;
  std::optional<probes::UserModelSnapshot> snapshot;
  bool answer_changed = false;
};

struct UserModelView {
  std::optional<probes::UserModelSnapshot> snapshot;
  std::vector<steering::PinState> pins;
};

// Bounded gate around engine calls.
class InferenceQueue {
 public:
  explicit InferenceQueue(std::size_t width);
  template <typename Fn>
  auto run(Fn&& fn) {
    acquire();
    struct Release {
      InferenceQueue* q;
      ~Release() { q->release(); }
    } release{this};
    return fn();
  }

 private:
  void acquire();
  void release();
  std::mutex mu_;
  std::condition_variable cv_;
  std::size_t width_;
  std::size_t busy_ = 0;
};

// Transport-independent session logic. Every method is thread-safe; calls on
// one session are serialized by that session's lock.
class SessionService {
 public:
  SessionService(const model::Engine& engine, std::shared_ptr<const probes::ProbeSet> probe_set,
                 ServiceConfig config);
  ~SessionService();

  // kServiceUnavailable without probes.
  SessionCreated create_session(UiCondition condition);
  // kSessionNotFound, kInvalidArgument for empty text, kContextOverflow.
  TurnResult chat(const std::string& session_id, const std::string& text);
  UserModelView user_model(const std::string& session_id);
  // kForbidden outside read-and-control.
  std::vector<steering::PinState> set_pin(const std::string& session_id, const steering::PinState& pin);
  std::vector<steering::PinState> clear_pin(const std::string& session_id, Attribute attribute);
  // kNothingToRegenerate without an assistant reply.
  TurnResult regenerate(const std::string& session_id);

  model::Conversation conversation(const std::string& session_id);
  std::size_t session_count() const;
  bool probes_loaded() const { return probe_set_ != nullptr; }
  const model::Engine& engine() const { return engine_; }

 private:
  struct Session;
  std::shared_ptr<Session> find(const std::string& id) const;
  probes::UserModelSnapshot snapshot_for(const model::Conversation& conversation);
  std::string generate_reply(const model::Conversation& conversation,
                             const std::vector<steering::PinState>& pins);
  void persist(const Session& s, nlohmann::json event);
  void require_probes() const;

  const model::Engine& engine_;
  std::shared_ptr<const probes::ProbeSet> probe_set_;
  ServiceConfig config_;
  InferenceQueue queue_;
  mutable std::mutex sessions_mu_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::uint64_t id_seed_ = 0;
  std::uint64_t next_id_ = 0;
};

nlohmann::json pins_json(const std::vector<steering::PinState>& pins);

}  // namespace usermodel::server
