#include <gtest/gtest.h>

#include <fstream>
#include <set>
#include <thread>

#include <httplib.h>

#include "helpers.hpp"
#include "usermodel/server/http.hpp"
#include "usermodel/server/service.hpp"
#include "usermodel/util/io.hpp"

using namespace usermodel;
using namespace usermodel::server;
using steering::PinMode;
using steering::PinState;
using testsupport::desk_engine;

namespace {

std::shared_ptr<const probes::ProbeSet> shared_probes() {
  static const auto set = std::make_shared<const probes::ProbeSet>(testsupport::random_probe_set(desk_engine(), 31));
  return set;
}

ServiceConfig small_config() {
  ServiceConfig c;
  c.generation = {12, 1};
  c.steering = steering::SteeringConfig::for_layers(4);
  c.id_seed = 5;
  return c;
}

template <typename Fn>
ErrorCode code_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::kInvalidArgument;
}

}  // namespace

TEST(Service, ConditionsControlVisibility) {
  SessionService svc(desk_engine(), shared_probes(), small_config());
  const auto base = svc.create_session(UiCondition::kBaseline);
  EXPECT_FALSE(base.snapshot.has_value());
  const auto ro = svc.create_session(UiCondition::kReadOnly);
  ASSERT_TRUE(ro.snapshot.has_value());
  for (const auto& r : ro.snapshot->attributes) EXPECT_TRUE(r.unknown());
  EXPECT_NE(base.session_id, ro.session_id);
  EXPECT_FALSE(svc.chat(base.session_id, "hello").snapshot.has_value());
  EXPECT_TRUE(svc.chat(ro.session_id, "hello").snapshot.has_value());
  EXPECT_FALSE(svc.user_model(base.session_id).snapshot.has_value());
  EXPECT_EQ(svc.session_count(), 2u);
  for (auto c : {UiCondition::kBaseline, UiCondition::kReadOnly, UiCondition::kReadAndControl}) {
    EXPECT_EQ(parse_ui_condition(ui_condition_name(c)), c);
  }
}

TEST(Service, ChatMatchesDirectGenerationAndSnapshot) {
  SessionService svc(desk_engine(), shared_probes(), small_config());
  const auto id = svc.create_session(UiCondition::kReadOnly).session_id;
  const auto turn = svc.chat(id, "Where should I travel?");
  const auto conv = svc.conversation(id);
  ASSERT_EQ(conv.messages.size(), 2u);
  EXPECT_EQ(conv.messages[1].content, turn.reply);
  auto prompt = conv;
  prompt.messages.pop_back();
  EXPECT_EQ(desk_engine().generate(prompt, {12, 1}).text, turn.reply);
  EXPECT_EQ(turn.snapshot->to_json(), probes::read_user_model(desk_engine(), conv, *shared_probes()).to_json());
}

TEST(Service, SessionsAreIsolated) {
  SessionService svc(desk_engine(), shared_probes(), small_config());
  const auto a = svc.create_session(UiCondition::kReadAndControl).session_id;
  const auto b = svc.create_session(UiCondition::kReadAndControl).session_id;
  svc.set_pin(a, {Attribute::kGender, "female", PinMode::kPin100});
  svc.chat(a, "first in a");
  EXPECT_TRUE(svc.user_model(b).pins.empty());
  EXPECT_TRUE(svc.conversation(b).messages.empty());
  EXPECT_EQ(svc.conversation(a).messages.size(), 2u);
}

TEST(Service, ErrorsMapToCodes) {
  SessionService svc(desk_engine(), shared_probes(), small_config());
  const auto ro = svc.create_session(UiCondition::kReadOnly).session_id;
  EXPECT_EQ(code_of([&] { svc.set_pin(ro, {Attribute::kAge, "adult", PinMode::kPin100}); }), ErrorCode::kForbidden);
  EXPECT_EQ(code_of([&] { svc.clear_pin(ro, Attribute::kAge); }), ErrorCode::kForbidden);
  EXPECT_EQ(code_of([&] { svc.regenerate(ro); }), ErrorCode::kNothingToRegenerate);
  EXPECT_EQ(code_of([&] { svc.chat("nope", "x"); }), ErrorCode::kSessionNotFound);
  EXPECT_EQ(code_of([&] { svc.chat(ro, ""); }), ErrorCode::kInvalidArgument);
  SessionService bare(desk_engine(), nullptr, small_config());
  EXPECT_FALSE(bare.probes_loaded());
  EXPECT_EQ(code_of([&] { bare.create_session(UiCondition::kReadOnly); }), ErrorCode::kServiceUnavailable);
}

TEST(Service, RegenerateWithUnchangedPinsKeepsAnswer) {
  SessionService svc(desk_engine(), shared_probes(), small_config());
  const auto id = svc.create_session(UiCondition::kReadAndControl).session_id;
  const auto first = svc.chat(id, "Suggest a gift.");
  const auto again = svc.regenerate(id);
  EXPECT_FALSE(again.answer_changed);
  EXPECT_EQ(again.reply, first.reply);
  EXPECT_EQ(svc.conversation(id).messages.size(), 2u);
  // a pinned regeneration equals generate_with_pins on the same prefix
  const std::vector<PinState> pins{{Attribute::kAge, "child", PinMode::kPin100}};
  svc.set_pin(id, pins[0]);
  const auto steered = svc.regenerate(id);
  const auto direct = steering::generate_with_pins(desk_engine(), testsupport::single_turn("Suggest a gift."), pins,
                                                   *shared_probes(), small_config().steering, {12, 1});
  EXPECT_EQ(steered.reply, direct.text);
  EXPECT_EQ(steered.answer_changed, steered.reply != first.reply);
}

TEST(Service, PersistsEventLog) {
  testsupport::TempDir dir("persist");
  auto cfg = small_config();
  cfg.persist_dir = dir.path();
  SessionService svc(desk_engine(), shared_probes(), cfg);
  const auto id = svc.create_session(UiCondition::kReadAndControl).session_id;
  svc.chat(id, "hi");
  svc.set_pin(id, {Attribute::kGender, "male", PinMode::kPin0});
  svc.clear_pin(id, Attribute::kGender);
  const auto events = util::read_jsonl(dir / (id + ".jsonl"));
  ASSERT_EQ(events.size(), 4u);
  EXPECT_EQ(events[0]["event"], "create");
  EXPECT_EQ(events[1]["event"], "chat");
  EXPECT_EQ(events[2]["pin"]["mode"], "pin-0");
  EXPECT_EQ(events[3]["event"], "unpin");
}

TEST(Service, IdsFollowSeed) {
  SessionService a(desk_engine(), shared_probes(), small_config());
  SessionService b(desk_engine(), shared_probes(), small_config());
  EXPECT_EQ(a.create_session(UiCondition::kBaseline).session_id, b.create_session(UiCondition::kBaseline).session_id);
}

TEST(Service, ConcurrentSessionsMatchSerialRuns) {
  auto cfg = small_config();
  cfg.inference_width = 2;
  SessionService svc(desk_engine(), shared_probes(), cfg);
  std::vector<std::string> ids, replies(6);
  for (int i = 0; i < 6; ++i) ids.push_back(svc.create_session(UiCondition::kReadOnly).session_id);
  std::vector<std::thread> threads;
  for (int i = 0; i < 6; ++i) {
    threads.emplace_back([&, i] { replies[i] = svc.chat(ids[i], "topic " + std::to_string(i)).reply; });
  }
  for (auto& t : threads) t.join();
  for (int i = 0; i < 6; ++i) {
    EXPECT_EQ(replies[i], desk_engine().generate(testsupport::single_turn("topic " + std::to_string(i)), {12, 1}).text);
  }
}

TEST(Http, StatusMapping) {
  EXPECT_EQ(http_status(ErrorCode::kSessionNotFound), 404);
  EXPECT_EQ(http_status(ErrorCode::kForbidden), 403);
  EXPECT_EQ(http_status(ErrorCode::kNothingToRegenerate), 409);
  EXPECT_EQ(http_status(ErrorCode::kServiceUnavailable), 503);
  EXPECT_EQ(http_status(ErrorCode::kParse), 400);
  EXPECT_EQ(error_body(ErrorCode::kForbidden, "m")["error_code"], error_code_name(ErrorCode::kForbidden));
}

TEST(Http, RestRoundTripOverLoopback) {
  SessionService svc(desk_engine(), shared_probes(), small_config());
  HttpServer server(svc);
  const int port = server.start("127.0.0.1", 0);
  ASSERT_GT(port, 0);
  httplib::Client cli("127.0.0.1", port);
  auto post = [&](const std::string& path, const nlohmann::json& body) {
    return cli.Post(path, body.dump(), "application/json");
  };

  auto health = cli.Get("/api/health");
  ASSERT_TRUE(health);
  EXPECT_EQ(nlohmann::json::parse(health->body)["status"], "ok");

  auto created = post("/api/session", {{"ui_condition", "read-and-control"}});
  ASSERT_TRUE(created);
  ASSERT_EQ(created->status, 200);
  const std::string id = nlohmann::json::parse(created->body)["session_id"];
  const std::string base = "/api/session/" + id;

  auto chat = post(base + "/chat", {{"text", "Tell me about rivers."}});
  ASSERT_EQ(chat->status, 200);
  const auto chat_json = nlohmann::json::parse(chat->body);
  EXPECT_TRUE(chat_json.contains("snapshot"));
  EXPECT_EQ(chat_json["reply"], svc.conversation(id).messages[1].content);

  auto pin = cli.Put(base + "/pin", R"({"attribute":"gender","subcategory":"female","mode":"pin-100"})",
                     "application/json");
  ASSERT_EQ(pin->status, 200);
  EXPECT_EQ(nlohmann::json::parse(pin->body)["pins"].size(), 1u);
  auto bad_pin = cli.Put(base + "/pin", R"({"attribute":"gender","subcategory":"robot"})", "application/json");
  EXPECT_EQ(bad_pin->status, 400);

  auto um = cli.Get(base + "/usermodel");
  ASSERT_EQ(um->status, 200);
  EXPECT_EQ(nlohmann::json::parse(um->body)["pins"][0]["subcategory"], "female");

  auto regen = post(base + "/regenerate", nlohmann::json::object());
  ASSERT_EQ(regen->status, 200);
  EXPECT_TRUE(nlohmann::json::parse(regen->body).contains("answer_changed"));

  auto unpin = cli.Delete(base + "/pin/gender");
  ASSERT_EQ(unpin->status, 200);
  EXPECT_TRUE(nlohmann::json::parse(unpin->body)["pins"].empty());

  auto missing = post("/api/session/unknown/chat", {{"text", "x"}});
  EXPECT_EQ(missing->status, 404);
  EXPECT_EQ(nlohmann::json::parse(missing->body)["error_code"], error_code_name(ErrorCode::kSessionNotFound));

  const std::string ro = nlohmann::json::parse(post("/api/session", {{"ui_condition", "read-only"}})->body)["session_id"];
  auto forbidden = cli.Put("/api/session/" + ro + "/pin", R"({"attribute":"age","subcategory":"child"})",
                           "application/json");
  EXPECT_EQ(forbidden->status, 403);
  auto conflict = post("/api/session/" + ro + "/regenerate", nlohmann::json::object());
  EXPECT_EQ(conflict->status, 409);
  auto garbage = cli.Post(base + "/chat", "{not json", "application/json");
  EXPECT_EQ(garbage->status, 400);
  server.stop();
}

TEST(Http, NoProbesIsServiceUnavailable) {
  SessionService svc(desk_engine(), nullptr, small_config());
  HttpServer server(svc);
  const int port = server.start("127.0.0.1", 0);
  httplib::Client cli("127.0.0.1", port);
  auto health = cli.Get("/api/health");
  ASSERT_TRUE(health);
  EXPECT_EQ(nlohmann::json::parse(health->body)["status"], "no-probes");
  auto created = cli.Post("/api/session", "{}", "application/json");
  ASSERT_TRUE(created);
  EXPECT_EQ(created->status, 503);
}
