#include <gtest/gtest.h>

#include <atomic>
#include <fstream>
#include <set>
#include <stdexcept>

#include "helpers.hpp"
#include "usermodel/error.hpp"
#include "usermodel/util/container.hpp"
#include "usermodel/util/hash.hpp"
#include "usermodel/util/io.hpp"
#include "usermodel/util/parallel.hpp"
#include "usermodel/util/random.hpp"

using namespace usermodel;

TEST(Hash, Fnv1aPublishedVectors) {
  EXPECT_EQ(util::fnv1a(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(util::fnv1a("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(util::fnv1a("foobar"), 0x85944171f73967e8ULL);
}

TEST(Hash, IncrementalEqualsOneShot) {
  util::Fnv1a h;
  h.update("foo").update("bar");
  EXPECT_EQ(h.digest(), util::fnv1a("foobar"));
  EXPECT_EQ(h.hex(), "85944171f73967e8");
  EXPECT_EQ(util::hex64(1), "0000000000000001");
}

TEST(Hash, MixSeedIsSplitMix64) {
  // First SplitMix64 output for state 0.
  EXPECT_EQ(util::mix_seed(0, 0), 0xe220a8397b1dcdafULL);
  std::set<std::uint64_t> seen;
  for (std::uint64_t s = 0; s < 20; ++s) {
    for (std::uint64_t i = 0; i < 50; ++i) seen.insert(util::mix_seed(s, i));
  }
  EXPECT_EQ(seen.size(), 1000u);
}

TEST(Random, Uniform01InUnitInterval) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 10000; ++i) {
    const double u = util::uniform01(rng);
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
}

TEST(Random, NormalMoments) {
  std::mt19937_64 rng(4);
  double s = 0, s2 = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double x = util::normal(rng);
    s += x;
    s2 += x * x;
  }
  EXPECT_NEAR(s / n, 0.0, 0.01);
  EXPECT_NEAR(s2 / n, 1.0, 0.02);
}

TEST(Random, ShuffleIsSeededPermutation) {
  std::vector<int> a(100), b;
  for (int i = 0; i < 100; ++i) a[static_cast<std::size_t>(i)] = i;
  b = a;
  std::mt19937_64 r1(9), r2(9);
  util::shuffle(a.begin(), a.end(), r1);
  util::shuffle(b.begin(), b.end(), r2);
  EXPECT_EQ(a, b);
  auto sorted = a;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 100; ++i) EXPECT_EQ(sorted[static_cast<std::size_t>(i)], i);
}

TEST(Container, RoundTripInMemoryAndOnDisk) {
  testsupport::TempDir dir("container");
  const std::vector<float> payload{1.5f, -2.0f, 0.0f, 3.25f};
  const nlohmann::json header{{"format", "x"}, {"n", 4}};
  const auto bytes = util::encode_container(header, payload);
  ASSERT_GE(bytes.size(), 16u);
  EXPECT_EQ(std::string(bytes.data(), 8), "UMCONT01");
  auto c = util::decode_container(bytes);
  EXPECT_EQ(c.payload, payload);
  EXPECT_EQ(c.header["format"], "x");

  util::write_container(dir / "a.bin", header, payload);
  auto d = util::read_container(dir / "a.bin");
  EXPECT_EQ(d.payload, payload);
  EXPECT_EQ(util::read_text(dir / "a.bin").size(), bytes.size());
}

TEST(Container, RejectsCorruption) {
  const std::vector<float> payload{1.0f, 2.0f};
  auto bytes = util::encode_container({{"k", 1}}, payload);
  auto expect_malformed = [](std::vector<char> b) {
    try {
      util::decode_container(b);
      FAIL() << "accepted a corrupt container";
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kMalformedFile);
    }
  };
  auto truncated = bytes;
  truncated.pop_back();
  expect_malformed(truncated);
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  expect_malformed(bad_magic);
  expect_malformed(std::vector<char>(bytes.begin(), bytes.begin() + 10));
}

TEST(Io, JsonlRoundTripSkipsBlankLines) {
  testsupport::TempDir dir("io");
  util::write_jsonl(dir / "x.jsonl", {{{"a", 1}}, {{"b", "two"}}});
  {
    std::ofstream out(dir / "x.jsonl", std::ios::app);
    out << "\n   \n";
  }
  auto rows = util::read_jsonl(dir / "x.jsonl");
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[1]["b"], "two");
}

TEST(Io, MalformedJsonlLineIsReported) {
  testsupport::TempDir dir("io");
  util::write_text(dir / "bad.jsonl", "{\"a\":1}\n{oops\n");
  try {
    util::read_jsonl(dir / "bad.jsonl");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kMalformedFile);
  }
}

TEST(Io, ReadLinesDropsCommentsAndBlanks) {
  testsupport::TempDir dir("io");
  util::write_text(dir / "l.txt", "# header\nfirst  \n\nsecond\n");
  EXPECT_EQ(util::read_lines(dir / "l.txt"), (std::vector<std::string>{"first", "second"}));
}

TEST(Io, DumpJsonReplacesInvalidUtf8) {
  const std::string s = util::dump_json(nlohmann::json(std::string("a\xff" "b")));
  EXPECT_EQ(s, "\"a\xef\xbf\xbd" "b\"");
}

TEST(Io, MissingFileIsIoError) {
  try {
    util::read_text("/nonexistent/definitely/not/here");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kIo);
  }
}

TEST(Io, DataPathFindsShippedAssets) {
  EXPECT_TRUE(std::filesystem::exists(util::data_path("question_banks/age.txt")));
  EXPECT_TRUE(std::filesystem::exists(util::data_path("refusal_patterns.txt")));
}

TEST(Parallel, VisitsEveryIndexOnce) {
  std::vector<std::atomic<int>> hits(1000);
  util::parallel_for(hits.size(), 8, [&](std::size_t i) { hits[i]++; });
  for (auto& h : hits) EXPECT_EQ(h.load(), 1);
}

TEST(Parallel, RethrowsLowestFailingIndex) {
  try {
    util::parallel_for(200, 6, [](std::size_t i) {
      if (i % 50 == 17) throw std::runtime_error("fail " + std::to_string(i));
    });
    FAIL();
  } catch (const std::runtime_error& e) {
    EXPECT_STREQ(e.what(), "fail 17");
  }
}

TEST(Errors, CodeNamesAreDistinct) {
  std::set<std::string_view> names;
  for (int c = 0; c <= static_cast<int>(ErrorCode::kServiceUnavailable); ++c) {
    names.insert(error_code_name(static_cast<ErrorCode>(c)));
  }
  EXPECT_EQ(names.size(), static_cast<std::size_t>(ErrorCode::kServiceUnavailable) + 1);
}
