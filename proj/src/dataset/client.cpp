#include "usermodel/dataset/client.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <regex>
#include <thread>

#include <httplib.h>

#include "usermodel/error.hpp"
#include "usermodel/util/hash.hpp"
#include "usermodel/util/io.hpp"

namespace usermodel::dataset {

nlohmann::json ClientConfig::to_json() const {
  return {{"endpoint", endpoint},
          {"model", model},
          {"credential_env", credential_env},
          {"max_tokens", max_tokens},
          {"max_retries", max_retries},
          {"backoff_seconds", backoff_seconds},
          {"max_concurrent", max_concurrent},
          {"requests_per_minute", requests_per_minute},
          {"timeout_seconds", timeout_seconds}};
}

ClientConfig ClientConfig::from_json(const nlohmann::json& j) { return from_json(j, ClientConfig{}); }

ClientConfig ClientConfig::from_json(const nlohmann::json& j, ClientConfig c) {
  c.endpoint = j.value("endpoint", c.endpoint);
  c.model = j.value("model", c.model);
  c.credential_env = j.value("credential_env", c.credential_env);
  c.max_tokens = j.value("max_tokens", c.max_tokens);
  c.max_retries = j.value("max_retries", c.max_retries);
  c.backoff_seconds = j.value("backoff_seconds", c.backoff_seconds);
  c.max_concurrent = j.value("max_concurrent", c.max_concurrent);
  c.requests_per_minute = j.value("requests_per_minute", c.requests_per_minute);
  c.timeout_seconds = j.value("timeout_seconds", c.timeout_seconds);
  if (c.max_concurrent == 0 || c.requests_per_minute == 0 || c.max_retries < 0 || c.max_tokens <= 0) {
    throw Error(ErrorCode::kInvalidConfig, "client limits must be positive");
  }
  return c;
}

nlohmann::json wire_body(const ClientConfig& config, const CompletionRequest& request) {
  nlohmann::json messages = nlohmann::json::array();
  for (const auto& m : request.messages) {
    messages.push_back({{"role", model::role_name(m.role)}, {"content", m.content}});
  }
  return {{"model", config.model},
          {"messages", std::move(messages)},
          {"temperature", request.temperature},
          {"max_tokens", config.max_tokens}};
}

std::string request_key(const ClientConfig& config, const CompletionRequest& request) {
  return util::hex64(util::fnv1a(util::dump_json(wire_body(config, request))));
}

std::string parse_wire_reply(const std::string& body) {
  try {
    const auto j = nlohmann::json::parse(body);
    return j.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("completion reply is not in the expected shape: ") + e.what());
  }
}

// ---- fixtures ----

namespace {

std::string_view kind_name(FixtureRule::Kind k) {
  switch (k) {
    case FixtureRule::Kind::kKey: return "key";
    case FixtureRule::Kind::kTag: return "tag";
    case FixtureRule::Kind::kContains: return "contains";
    case FixtureRule::Kind::kDefault: return "default";
  }
  return "default";
}

}  // namespace

nlohmann::json FixtureRule::to_json() const {
  nlohmann::json j;
  if (kind == Kind::kDefault) {
    j["default"] = true;
  } else {
    j[std::string(kind_name(kind))] = match;
  }
  j["reply"] = reply;
  return j;
}

FixtureRule FixtureRule::from_json(const nlohmann::json& j) {
  FixtureRule r;
  if (!j.is_object() || !j.contains("reply") || !j["reply"].is_string()) {
    throw Error(ErrorCode::kMalformedFile, "fixture rule needs a string 'reply'");
  }
  r.reply = j["reply"].get<std::string>();
  int kinds = 0;
  for (auto k : {Kind::kKey, Kind::kTag, Kind::kContains}) {
    const std::string name(kind_name(k));
    if (j.contains(name)) {
      r.kind = k;
      r.match = j[name].get<std::string>();
      ++kinds;
    }
  }
  if (j.value("default", false)) {
    r.kind = Kind::kDefault;
    ++kinds;
  }
  if (kinds != 1) {
    throw Error(ErrorCode::kMalformedFile, "fixture rule needs exactly one of key, tag, contains, default");
  }
  return r;
}

FixtureClient::FixtureClient() : FixtureClient(ClientConfig{}) {}

FixtureClient::FixtureClient(ClientConfig config) : config_(std::move(config)) {}

std::unique_ptr<FixtureClient> FixtureClient::load(const std::filesystem::path& path) {
  return load(path, ClientConfig{});
}

std::unique_ptr<FixtureClient> FixtureClient::load(const std::filesystem::path& path, ClientConfig config) {
  auto client = std::make_unique<FixtureClient>(std::move(config));
  std::vector<std::filesystem::path> files;
  if (std::filesystem::is_directory(path)) {
    for (const auto& e : std::filesystem::directory_iterator(path)) {
      if (e.is_regular_file() && e.path().extension() == ".jsonl") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
  } else if (std::filesystem::is_regular_file(path)) {
    files.push_back(path);
  } else {
    throw Error(ErrorCode::kIo, "fixture path " + path.string() + " does not exist");
  }
  for (const auto& f : files) {
    for (const auto& row : util::read_jsonl(f)) client->add(FixtureRule::from_json(row));
  }
  return client;
}

void FixtureClient::add(FixtureRule rule) {
  std::lock_guard lock(mu_);
  switch (rule.kind) {
    case FixtureRule::Kind::kKey: by_key_[rule.match] = std::move(rule.reply); break;
    case FixtureRule::Kind::kTag: by_tag_[rule.match] = std::move(rule.reply); break;
    case FixtureRule::Kind::kContains: contains_.emplace_back(rule.match, std::move(rule.reply)); break;
    case FixtureRule::Kind::kDefault: default_ = std::move(rule.reply); break;
  }
}

std::string FixtureClient::complete(const CompletionRequest& request) {
  const auto key = request_key(config_, request);
  std::lock_guard lock(mu_);
  ++calls_;
  if (auto it = by_key_.find(key); it != by_key_.end()) return it->second;
  if (!request.tag.empty()) {
    if (auto it = by_tag_.find(request.tag); it != by_tag_.end()) return it->second;
  }
  for (const auto& [needle, reply] : contains_) {
    for (const auto& m : request.messages) {
      if (m.content.find(needle) != std::string::npos) return reply;
    }
  }
  if (default_) return *default_;
  throw Error(ErrorCode::kFixtureMiss,
              "no fixture reply for request " + key + (request.tag.empty() ? "" : " (tag " + request.tag + ")"));
}

std::size_t FixtureClient::calls() const {
  std::lock_guard lock(mu_);
  return calls_;
}

// ---- live ----

RequestBudget::RequestBudget(std::size_t max_concurrent, std::size_t per_minute)
    : max_concurrent_(std::max<std::size_t>(1, max_concurrent)),
      per_minute_(std::max<std::size_t>(1, per_minute)) {}

void RequestBudget::acquire() {
  using clock = std::chrono::steady_clock;
  std::unique_lock lock(mu_);
  for (;;) {
    const auto now = clock::now();
    while (!started_.empty() && now - started_.front() >= std::chrono::minutes(1)) started_.pop_front();
    if (in_flight_ < max_concurrent_ && started_.size() < per_minute_) {
      ++in_flight_;
      started_.push_back(now);
      return;
    }
    if (started_.size() >= per_minute_) {
      cv_.wait_until(lock, started_.front() + std::chrono::minutes(1));
    } else {
      cv_.wait(lock);
    }
  }
}

void RequestBudget::release() {
  {
    std::lock_guard lock(mu_);
    --in_flight_;
  }
  cv_.notify_one();
}

LiveClient::LiveClient(ClientConfig config, std::optional<std::filesystem::path> record_to)
    : config_(std::move(config)),
      record_to_(std::move(record_to)),
      budget_(config_.max_concurrent, config_.requests_per_minute) {
  const char* key = std::getenv(config_.credential_env.c_str());
  if (key == nullptr || *key == '\0') {
    throw Error(ErrorCode::kCredential, "environment variable " + config_.credential_env +
                                            " is not set; pass --fixture for offline replay");
  }
  credential_ = key;
  static const std::regex url(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(config_.endpoint, m, url)) {
    throw Error(ErrorCode::kInvalidConfig, "endpoint '" + config_.endpoint + "' is not an http(s) url");
  }
  scheme_host_port_ = m[1].str();
  path_ = m[2].matched ? m[2].str() : "/";
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
  if (scheme_host_port_.rfind("https://", 0) == 0) {
    throw Error(ErrorCode::kInvalidConfig, "this build has no TLS support; use an http endpoint");
  }
#endif
}

std::string LiveClient::post_once(const std::string& body, int& status) const {
  httplib::Client cli(scheme_host_port_);
  const auto timeout = std::chrono::duration<double>(config_.timeout_seconds);
  cli.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
  cli.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
  httplib::Headers headers{{"Authorization", "Bearer " + credential_}};
  auto res = cli.Post(path_, headers, body, "application/json");
  if (!res) {
    status = 0;
    return httplib::to_string(res.error());
  }
  status = res->status;
  return res->body;
}

std::string LiveClient::complete(const CompletionRequest& request) {
  const std::string body = util::dump_json(wire_body(config_, request));
  std::string last_error;
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 0) {
      const double wait = config_.backoff_seconds * std::pow(2.0, attempt - 1);
      std::this_thread::sleep_for(std::chrono::duration<double>(wait));
    }
    int status = 0;
    budget_.acquire();
    std::string reply;
    try {
      reply = post_once(body, status);
    } catch (...) {
      budget_.release();
      throw;
    }
    budget_.release();
    if (status == 200) {
      auto content = parse_wire_reply(reply);
      if (record_to_) {
        std::lock_guard lock(record_mu_);
        FixtureRule rule{FixtureRule::Kind::kKey, request_key(config_, request), content};
        std::ofstream out(*record_to_, std::ios::app | std::ios::binary);
        out << util::to_jsonl_line(rule.to_json());
      }
      return content;
    }
    last_error = status == 0 ? "transport error: " + reply : "HTTP " + std::to_string(status);
    const bool retryable = status == 0 || status == 429 || status >= 500;
    if (!retryable) break;
  }
  throw Error(ErrorCode::kNetwork, "completion request failed: " + last_error);
}

std::unique_ptr<CompletionClient> make_client(const ClientConfig& config,
                                              const std::optional<std::filesystem::path>& fixture,
                                              const std::optional<std::filesystem::path>& record_to) {
  if (fixture) return FixtureClient::load(*fixture, config);
  return std::make_unique<LiveClient>(config, record_to);
}

}  // namespace usermodel::dataset
