#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "usermodel/causality/causality.hpp"
#include "usermodel/dataset/client.hpp"
#include "usermodel/dataset/generation.hpp"
#include "usermodel/model/engine.hpp"
#include "usermodel/probes/probe.hpp"

namespace testsupport {

namespace um = usermodel;

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "t");
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

// The default desk model (seed 0). Built once per process.
const um::model::Engine& desk_engine();

std::vector<float> gaussian_vector(std::mt19937_64& rng, std::size_t n, double scale = 1.0);

// Every (attribute, subcategory, layer, kind) probe with seeded Gaussian
// weights; the selected layer is the last one.
um::probes::ProbeSet random_probe_set(const um::model::Engine& engine, std::uint64_t seed);

um::model::Conversation single_turn(const std::string& text);

// Key-matched replies for every request generate_dataset will send.
// Transcripts depend only on the request key, so identical requests get
// identical replies.
std::vector<um::dataset::FixtureRule> generation_fixture(const um::dataset::GenerationJob& job,
                                                         const um::dataset::ClientConfig& config = {});
std::string synthetic_transcript(const std::string& salt, std::size_t turns);

// Judge rules keyed on each trial's request.
// mode: "correct", "wrong", or "first-k" (the first k questions correct).
std::vector<um::dataset::FixtureRule> judge_fixture(const um::model::Engine& engine,
                                                    const um::probes::ProbeSet& set,
                                                    const um::causality::QuestionBank& bank,
                                                    um::causality::PlanSource source,
                                                    const um::causality::CausalityConfig& config,
                                                    const std::string& mode, std::size_t k = 0,
                                                    const um::dataset::ClientConfig& client = {});

void write_rules(const std::filesystem::path& path, const std::vector<um::dataset::FixtureRule>& rules);

// Labeled records with a deterministic, label-dependent vocabulary.
std::vector<um::dataset::DatasetRecord> synthetic_dataset(um::Attribute attribute, std::size_t per_subcategory,
                                                          std::uint64_t seed);

// Straightforward double-precision forward pass over the engine's weights.
// Returns logits (positions x vocab) and, when non-null, block outputs
// (layer -> positions x d).
std::vector<double> reference_forward(const um::model::Engine& engine, const std::vector<um::model::TokenId>& tokens,
                                      std::vector<std::vector<double>>* block_outputs = nullptr);

std::filesystem::path golden_dir();
// Compares against tests/golden/<name>; rewrites it when
// USERMODEL_UPDATE_GOLDEN=1. Returns an empty string on match, else a message.
std::string check_golden(const std::string& name, const std::string& actual);

}  // namespace testsupport
