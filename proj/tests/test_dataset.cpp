#include <gtest/gtest.h>

#include <map>

#include "helpers.hpp"
#include "usermodel/dataset/annotation.hpp"
#include "usermodel/dataset/generation.hpp"
#include "usermodel/util/hash.hpp"

using namespace usermodel;
using namespace usermodel::dataset;
using model::Role;

namespace {

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

DatasetRecord record(std::string id, Attribute a, std::string sub, std::string user_text) {
  DatasetRecord r;
  r.id = std::move(id);
  r.attribute = a;
  r.subcategory = std::move(sub);
  r.conversation.messages = {{Role::kUser, std::move(user_text)}, {Role::kAssistant, "ok"}};
  return r;
}

Annotation verdict(std::string id, std::optional<std::string> judged, std::string topic = "t",
                   std::vector<std::string> extra = {}) {
  Annotation a;
  a.id = std::move(id);
  a.judged = std::move(judged);
  a.topic = std::move(topic);
  a.extra = std::move(extra);
  a.flagged = !a.judged;
  return a;
}

}  // namespace

TEST(Templates, WeightsSumToOneAndMatchTable) {
  const std::map<Attribute, std::vector<double>> want{{Attribute::kGender, {0.72, 0.28}},
                                                      {Attribute::kAge, {0.5, 0.5}},
                                                      {Attribute::kEducation, {0.66, 0.17, 0.17}},
                                                      {Attribute::kSocioeco, {0.5, 0.5}}};
  for (const auto& [a, weights] : want) {
    const auto& t = generation_templates(a);
    ASSERT_EQ(t.size(), weights.size());
    double sum = 0;
    for (std::size_t i = 0; i < t.size(); ++i) {
      EXPECT_DOUBLE_EQ(t[i].weight, weights[i]);
      EXPECT_EQ(t[i].id, std::string(attribute_name(a)) + "-" + std::to_string(i + 1));
      sum += t[i].weight;
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(Templates, DrawFrequenciesFollowWeights) {
  std::vector<int> hits(3, 0);
  const int n = 20000;
  for (int s = 0; s < n; ++s) hits[draw_template(Attribute::kEducation, static_cast<std::uint64_t>(s))]++;
  // 4 sigma of a binomial at p = 0.66, n = 20000 is about 0.013.
  EXPECT_NEAR(hits[0] / double(n), 0.66, 0.015);
  EXPECT_NEAR(hits[1] / double(n), 0.17, 0.012);
  EXPECT_NEAR(hits[2] / double(n), 0.17, 0.012);
  EXPECT_EQ(draw_template(Attribute::kGender, 77), draw_template(Attribute::kGender, 77));
}

TEST(Templates, SlotsAreFilled) {
  for (Attribute a : kAllAttributes) {
    for (const auto& sub : subcategories(a)) {
      for (std::uint64_t seed = 0; seed < 8; ++seed) {
        const auto p = build_generation_prompt(a, sub, seed);
        EXPECT_EQ(p.text.find('{'), std::string::npos) << p.text;
        EXPECT_EQ(p.subcategory, sub);
      }
    }
  }
  const auto older = build_generation_prompt(Attribute::kAge, "older-adult", 0);
  EXPECT_NE(older.text.find("older adult"), std::string::npos);
  const auto upper = build_generation_prompt(Attribute::kSocioeco, "upper", 0);
  EXPECT_NE(upper.text.find("high"), std::string::npos);
}

TEST(Transcript, ParseIgnoresPreambleAndTrims) {
  const auto c = parse_transcript("Sure!\n### Human:  hi there \n### Assistant: hello\n\n### Human: bye");
  ASSERT_EQ(c.messages.size(), 3u);
  EXPECT_EQ(c.messages[0], (model::ChatMessage{Role::kUser, "hi there"}));
  EXPECT_EQ(c.messages[1], (model::ChatMessage{Role::kAssistant, "hello"}));
  EXPECT_EQ(c.messages[2].content, "bye");
}

TEST(Transcript, ParseErrorsKeepRawText) {
  for (const std::string raw : {"no markers at all", "### Assistant: first", "### Human: a\n### Human: b",
                                "### Human:   \n### Assistant: x"}) {
    try {
      parse_transcript(raw);
      FAIL() << raw;
    } catch (const TranscriptParseError& e) {
      EXPECT_EQ(e.code(), ErrorCode::kParse);
      EXPECT_EQ(e.raw(), raw);
    }
  }
}

TEST(Transcript, SerializeRoundTripsAndRejectsMarkers) {
  model::Conversation c;
  c.messages = {{Role::kUser, "a\nmultiline question"}, {Role::kAssistant, "answer"}};
  const auto text = serialize_transcript(c);
  EXPECT_EQ(text, "### Human: a\nmultiline question\n### Assistant: answer");
  EXPECT_EQ(parse_transcript(text).messages, c.messages);
  c.messages[1].content = "see ### Human: this";
  EXPECT_EQ(code_of([&] { serialize_transcript(c); }), ErrorCode::kInvalidArgument);
  model::Conversation sys;
  sys.messages = {{Role::kSystem, "s"}, {Role::kUser, "u"}};
  EXPECT_EQ(code_of([&] { serialize_transcript(sys); }), ErrorCode::kInvalidArgument);
}

TEST(Records, JsonRoundTripAndDuplicateIds) {
  testsupport::TempDir dir("records");
  auto recs = testsupport::synthetic_dataset(Attribute::kAge, 2, 5);
  write_dataset(dir / "d.jsonl", recs);
  EXPECT_EQ(read_dataset(dir / "d.jsonl"), recs);
  recs.push_back(recs.front());
  write_dataset(dir / "dup.jsonl", recs);
  EXPECT_EQ(code_of([&] { read_dataset(dir / "dup.jsonl"); }), ErrorCode::kMalformedFile);
  auto bad = recs.front().to_json();
  bad["subcategory"] = "ancient";
  EXPECT_EQ(code_of([&] { DatasetRecord::from_json(bad); }), ErrorCode::kInvalidArgument);
}

TEST(Dedup, KeepsFirstOfIdenticalTranscripts) {
  std::vector<DatasetRecord> recs{record("a", Attribute::kGender, "male", "x"),
                                  record("b", Attribute::kGender, "female", "y"),
                                  record("c", Attribute::kGender, "female", "x"),
                                  record("d", Attribute::kGender, "male", "y ")};
  const auto out = dedup_dataset(recs);
  ASSERT_EQ(out.size(), 3u);
  EXPECT_EQ(out[0].id, "a");
  EXPECT_EQ(out[1].id, "b");
  EXPECT_EQ(out[2].id, "d");
}

TEST(Generation, FixtureReplayProducesLabeledRecords) {
  GenerationJob job;
  job.attribute = Attribute::kAge;
  job.count = 12;
  job.seed = 3;
  FixtureClient client;
  for (auto& r : testsupport::generation_fixture(job)) client.add(r);
  const auto report = generate_dataset(client, job);
  EXPECT_EQ(report.requested, 12u);
  EXPECT_EQ(report.skipped, 0u);
  EXPECT_EQ(report.records.size() + report.duplicates, 12u);
  EXPECT_EQ(client.calls(), 12u);
  for (const auto& r : report.records) {
    const std::size_t i = std::stoul(r.id.substr(4));
    EXPECT_EQ(r.id.substr(0, 4), "age-");
    EXPECT_EQ(r.subcategory, subcategories(Attribute::kAge)[i % 4]);
    EXPECT_EQ(r.conversation.labels.at("age"), r.subcategory);
    EXPECT_EQ(r.generator_model, "gpt-4");
    EXPECT_NO_THROW(r.conversation.validate());
  }
  // same job, same bytes
  FixtureClient again;
  for (auto& r : testsupport::generation_fixture(job)) again.add(r);
  EXPECT_EQ(generate_dataset(again, job).records, report.records);
}

TEST(Generation, BadRepliesAreSkippedAndLogged) {
  GenerationJob job;
  job.attribute = Attribute::kGender;
  job.subcategory = "female";
  job.count = 3;
  FixtureClient client;
  client.add({FixtureRule::Kind::kTag, "generate", "I'd rather not."});
  const auto report = generate_dataset(client, job);
  EXPECT_TRUE(report.records.empty());
  EXPECT_EQ(report.skipped, 3u);
  ASSERT_EQ(report.log.size(), 3u);
  EXPECT_NE(report.log[0].find("gender-000000"), std::string::npos);
  job.subcategory = "nonbinary";
  EXPECT_EQ(code_of([&] { generate_dataset(client, job); }), ErrorCode::kInvalidArgument);
}

TEST(Annotation, PromptListsOptionsAndTranscript) {
  const auto r = record("x", Attribute::kEducation, "high-school", "hello");
  const auto p = build_annotation_prompt(r.conversation, Attribute::kEducation);
  EXPECT_NE(p.find("some-schooling, high-school, college-and-beyond"), std::string::npos);
  EXPECT_NE(p.find("### Human: hello\n### Assistant: ok"), std::string::npos);
  EXPECT_EQ(p.find("{transcript}"), std::string::npos);
}

TEST(Annotation, ReplyParsing) {
  auto a = parse_annotation_reply("1", Attribute::kAge, R"({"label":"Older Adult","topic":" Garden  Care ","extra_attributes":["gender"]})");
  EXPECT_FALSE(a.flagged);
  EXPECT_EQ(a.judged, "older-adult");
  EXPECT_EQ(a.topic, "garden care");
  EXPECT_EQ(a.extra, std::vector<std::string>{"gender"});
  a = parse_annotation_reply("2", Attribute::kAge, R"({"label":"Inconclusive","topic":"x","extra_attributes":[]})");
  EXPECT_TRUE(a.inconclusive());
  a = parse_annotation_reply("3", Attribute::kSocioeco, R"({"label":"upper_class","topic":"x","extra_attributes":[]})");
  EXPECT_TRUE(a.flagged);
  for (const std::string bad : {"not json", "[1]", R"({"topic":"x","extra_attributes":[]})",
                                R"({"label":"adult","topic":3,"extra_attributes":[]})",
                                R"({"label":"adult","topic":"x","extra_attributes":[1]})"}) {
    a = parse_annotation_reply("4", Attribute::kAge, bad);
    EXPECT_TRUE(a.flagged) << bad;
    EXPECT_FALSE(a.judged.has_value());
    EXPECT_FALSE(a.error.empty());
  }
}

TEST(Annotation, DatasetUsesTagAndZeroTemperature) {
  FixtureClient client;
  client.add({FixtureRule::Kind::kTag, "annotate", R"({"label":"male","topic":"cars","extra_attributes":[]})"});
  const std::vector<DatasetRecord> recs{record("g1", Attribute::kGender, "male", "a"),
                                        record("g2", Attribute::kGender, "female", "b")};
  const auto ann = annotate_dataset(client, recs, 2);
  ASSERT_EQ(ann.size(), 2u);
  EXPECT_EQ(ann[1].id, "g2");
  EXPECT_EQ(ann[1].judged, "male");
  testsupport::TempDir dir("ann");
  write_annotations(dir / "a.jsonl", ann);
  EXPECT_EQ(read_annotations(dir / "a.jsonl"), ann);
}

TEST(Stats, ConsistencyTopicsAndCorrelation) {
  const std::vector<DatasetRecord> recs{
      record("a1", Attribute::kAge, "child", "1"),    record("a2", Attribute::kAge, "adult", "2"),
      record("a3", Attribute::kAge, "adult", "3"),    record("a4", Attribute::kAge, "older-adult", "4"),
      record("a5", Attribute::kAge, "child", "5"),    record("g1", Attribute::kGender, "male", "6")};
  const std::vector<Annotation> ann{verdict("a1", "child", "toys", {"gender"}),
                                    verdict("a2", "adult", "work"),
                                    verdict("a3", "child", "toys"),
                                    verdict("a4", std::string(kInconclusive), "garden"),
                                    verdict("a5", std::nullopt),
                                    verdict("g1", std::nullopt)};
  const auto stats = dataset_stats(recs, ann);
  ASSERT_EQ(stats.attributes.size(), 2u);
  const auto& age = stats.attributes[0];
  EXPECT_EQ(age.conversations, 5u);
  EXPECT_EQ(age.judged, 3u);
  EXPECT_EQ(age.agree, 2u);
  EXPECT_EQ(age.inconclusive, 1u);
  EXPECT_EQ(age.flagged, 1u);
  EXPECT_DOUBLE_EQ(*age.consistency, 2.0 / 3.0);
  EXPECT_EQ(age.topics, 3u);
  EXPECT_DOUBLE_EQ(*age.correlation, 0.25);
  const auto& gender = stats.attributes[1];
  EXPECT_FALSE(gender.consistency.has_value());
  EXPECT_TRUE(stats.to_json()[1]["consistency"].is_null());
  EXPECT_NE(stats.table().find("age"), std::string::npos);
}

TEST(Stats, MissingAnnotationsListEveryId) {
  const std::vector<DatasetRecord> recs{record("a1", Attribute::kAge, "child", "1"),
                                        record("a2", Attribute::kAge, "adult", "2"),
                                        record("a3", Attribute::kAge, "adult", "3")};
  const std::vector<Annotation> ann{verdict("a2", "adult")};
  try {
    dataset_stats(recs, ann);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kCoverage);
    EXPECT_NE(std::string(e.what()).find("a1, a3"), std::string::npos);
  }
}
