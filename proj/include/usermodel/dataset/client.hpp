#pragma once

#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "usermodel/model/chat.hpp"

namespace usermodel::dataset {

inline constexpr const char* kCredentialEnvVar = "USERMODEL_API_KEY";

struct ClientConfig {
  std::string endpoint = "https://api.openai.com/v1/chat/completions";
  std::string model = "gpt-4";
  // Name of the environment variable holding the bearer token.
  std::string credential_env = kCredentialEnvVar;
  int max_tokens = 1024;
  int max_retries = 3;
  double backoff_seconds = 1.0;
  std::size_t max_concurrent = 4;
  std::size_t requests_per_minute = 60;
  double timeout_seconds = 120.0;

  nlohmann::json to_json() const;
  static ClientConfig from_json(const nlohmann::json& j);
  static ClientConfig from_json(const nlohmann::json& j, ClientConfig base);
};

struct CompletionRequest {
  std::vector<model::ChatMessage> messages;
  double temperature = 0.0;
  // Routing hint for fixture replay; never sent over the wire.
  std::string tag;
};

// {model, messages, temperature, max_tokens}
nlohmann::json wire_body(const ClientConfig& config, const CompletionRequest& request);
// Stable hex digest of the wire body.
std::string request_key(const ClientConfig& config, const CompletionRequest& request);
// choices[0].message.content; throws kParse.
std::string parse_wire_reply(const std::string& body);

class CompletionClient {
 public:
  virtual ~CompletionClient() = default;
  virtual std::string complete(const CompletionRequest& request) = 0;
  virtual const ClientConfig& config() const = 0;
  virtual bool is_live() const = 0;
};

struct FixtureRule {
  enum class Kind { kKey, kTag, kContains, kDefault };
  Kind kind = Kind::kDefault;
  std::string match;
  std::string reply;

  nlohmann::json to_json() const;
  static FixtureRule from_json(const nlohmann::json& j);
};

// Replays recorded replies. Lookup order: request key, tag, first "contains"
// rule whose text occurs in any message, default. Misses throw kFixtureMiss.
// Never opens a connection.
class FixtureClient final : public CompletionClient {
 public:
  FixtureClient();
  explicit FixtureClient(ClientConfig config);
  // A .jsonl file, or a directory whose *.jsonl files are read in name order.
  static std::unique_ptr<FixtureClient> load(const std::filesystem::path& path);
  static std::unique_ptr<FixtureClient> load(const std::filesystem::path& path, ClientConfig config);

  void add(FixtureRule rule);
  std::string complete(const CompletionRequest& request) override;
  const ClientConfig& config() const override { return config_; }
  bool is_live() const override { return false; }
  std::size_t calls() const;

 private:
  ClientConfig config_;
  std::map<std::string, std::string> by_key_;
  std::map<std::string, std::string> by_tag_;
  std::vector<std::pair<std::string, std::string>> contains_;
  std::optional<std::string> default_;
  mutable std::mutex mu_;
  std::size_t calls_ = 0;
};

// Sliding one-minute window plus a cap on requests in flight.
class RequestBudget {
 public:
  RequestBudget(std::size_t max_concurrent, std::size_t per_minute);
  void acquire();
  void release();

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  std::size_t max_concurrent_;
  std::size_t per_minute_;
  std::size_t in_flight_ = 0;
  std::deque<std::chrono::steady_clock::time_point> started_;
};

// POSTs to the configured endpoint with bearer auth. Transport failures,
// 429 and 5xx are retried with exponential backoff; other statuses fail at
// once with kNetwork.
class LiveClient final : public CompletionClient {
 public:
  // Throws kCredential when the credential variable is unset or empty.
  explicit LiveClient(ClientConfig config, std::optional<std::filesystem::path> record_to = {});

  std::string complete(const CompletionRequest& request) override;
  const ClientConfig& config() const override { return config_; }
  bool is_live() const override { return true; }

 private:
  std::string post_once(const std::string& body, int& status) const;

  ClientConfig config_;
  std::string credential_;
  std::string scheme_host_port_;
  std::string path_;
  std::optional<std::filesystem::path> record_to_;
  RequestBudget budget_;
  std::mutex record_mu_;
};

// Fixture replay when `fixture` is set, live otherwise.
std::unique_ptr<CompletionClient> make_client(const ClientConfig& config,
                                              const std::optional<std::filesystem::path>& fixture,
                                              const std::optional<std::filesystem::path>& record_to = {});

}  // namespace usermodel::dataset
