#include "helpers.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>

#include "usermodel/probes/scheme.hpp"
#include "usermodel/util/hash.hpp"
#include "usermodel/util/io.hpp"
#include "usermodel/util/random.hpp"

namespace testsupport {

using namespace usermodel;

TempDir::TempDir(const std::string& tag) {
  static std::mt19937_64 rng(std::random_device{}());
  for (;;) {
    path_ = std::filesystem::temp_directory_path() / ("usermodel-" + tag + "-" + util::hex64(rng()));
    if (std::filesystem::create_directories(path_)) break;
  }
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

const model::Engine& desk_engine() {
  static const model::Engine engine = model::Engine::from_config(model::ModelConfig{});
  return engine;
}

std::vector<float> gaussian_vector(std::mt19937_64& rng, std::size_t n, double scale) {
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(util::normal(rng) * scale);
  return v;
}

probes::ProbeSet random_probe_set(const model::Engine& engine, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  probes::ProbeSet set;
  set.model_fingerprint = engine.fingerprint();
  set.d_model = engine.d_model();
  const double scale = 1.0 / std::sqrt(static_cast<double>(engine.d_model()));
  for (auto kind : {repr::RepKind::kReading, repr::RepKind::kControl}) {
    for (Attribute a : kAllAttributes) {
      for (const auto& sub : subcategories(a)) {
        for (int l = 0; l < engine.n_layers(); ++l) {
          probes::Probe p;
          p.attribute = a;
          p.subcategory = sub;
          p.layer = l;
          p.kind = kind;
          p.weights = gaussian_vector(rng, engine.d_model(), scale);
          p.bias = util::normal(rng) * 0.1;
          p.val_accuracy = 0.5;
          set.add(std::move(p));
        }
      }
      set.selected_layer[{a, kind}] = engine.n_layers() - 1;
    }
  }
  return set;
}

model::Conversation single_turn(const std::string& text) {
  model::Conversation c;
  c.messages.push_back({model::Role::kUser, text});
  return c;
}

namespace {

const std::vector<std::string> kWords = {
    "garden", "budget", "weekend", "homework", "recipe", "travel", "guitar", "office",
    "pension", "school", "rent", "soccer", "museum", "coffee", "library", "bus",
    "vacation", "loan", "painting", "exam", "grandkids", "salary", "bicycle", "stocks"};

std::string words(std::mt19937_64& rng, std::size_t n) {
  std::string s;
  for (std::size_t i = 0; i < n; ++i) {
    if (i) s += ' ';
    s += kWords[util::uniform_index(rng, kWords.size())];
  }
  return s;
}

}  // namespace

std::string synthetic_transcript(const std::string& salt, std::size_t turns) {
  std::mt19937_64 rng(util::fnv1a(salt));
  std::string out = "Sure, here is the conversation.\n\n";
  for (std::size_t t = 0; t < turns; ++t) {
    out += std::string(dataset::kHumanMarker) + " Question about " + words(rng, 4) + "?\n";
    out += std::string(dataset::kAssistantMarker) + " Here is help with " + words(rng, 5) + ".\n";
  }
  return out;
}

std::vector<dataset::FixtureRule> generation_fixture(const dataset::GenerationJob& job,
                                                     const dataset::ClientConfig& config) {
  std::vector<dataset::FixtureRule> rules;
  const auto& subs = subcategories(job.attribute);
  for (std::size_t i = 0; i < job.count; ++i) {
    const std::string sub = job.subcategory.empty() ? subs[i % subs.size()] : job.subcategory;
    const auto prompt = dataset::build_generation_prompt(job.attribute, sub, util::mix_seed(job.seed, i));
    dataset::CompletionRequest req;
    req.messages = {{model::Role::kSystem, std::string(dataset::kGeneratorSystemPrompt)},
                    {model::Role::kUser, prompt.text}};
    req.temperature = job.temperature;
    const auto key = dataset::request_key(config, req);
    rules.push_back({dataset::FixtureRule::Kind::kKey, key, synthetic_transcript(key, 2 + i % 3)});
  }
  return rules;
}

std::vector<dataset::FixtureRule> judge_fixture(const model::Engine& engine, const probes::ProbeSet& set,
                                                const causality::QuestionBank& bank,
                                                causality::PlanSource source,
                                                const causality::CausalityConfig& config,
                                                const std::string& mode, std::size_t k,
                                                const dataset::ClientConfig& client) {
  std::vector<dataset::FixtureRule> rules;
  for (std::size_t i = 0; i < bank.questions.size(); ++i) {
    const auto p = causality::prepare_trial(engine, set, bank, i, source, config);
    bool correct = mode == "correct" || (mode == "first-k" && i < k);
    const int answer = correct ? p.correct_answer : 3 - p.correct_answer;
    nlohmann::json reply{{"scratchpad", "compared both replies"}, {"answer", std::to_string(answer)}};
    rules.push_back({dataset::FixtureRule::Kind::kKey, dataset::request_key(client, p.judge_request),
                     reply.dump()});
  }
  return rules;
}

void write_rules(const std::filesystem::path& path, const std::vector<dataset::FixtureRule>& rules) {
  std::vector<nlohmann::json> rows;
  for (const auto& r : rules) rows.push_back(r.to_json());
  util::write_jsonl(path, rows);
}

std::vector<dataset::DatasetRecord> synthetic_dataset(Attribute attribute, std::size_t per_subcategory,
                                                      std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<dataset::DatasetRecord> out;
  const auto& subs = subcategories(attribute);
  std::size_t id = 0;
  for (std::size_t n = 0; n < per_subcategory; ++n) {
    for (const auto& sub : subs) {
      dataset::DatasetRecord r;
      char buf[64];
      std::snprintf(buf, sizeof buf, "%s-%06zu", std::string(attribute_name(attribute)).c_str(), id++);
      r.id = buf;
      r.attribute = attribute;
      r.subcategory = sub;
      r.template_id = std::string(attribute_name(attribute)) + "-1";
      r.generator_model = "gpt-4";
      const std::string marker = subcategory_display(attribute, sub);
      r.conversation.messages = {
          {model::Role::kUser, "As " + marker + ", I wonder about " + words(rng, 3) + ". " + marker + "!"},
          {model::Role::kAssistant, "Good question about " + words(rng, 3) + "."},
          {model::Role::kUser, "Being " + marker + " matters for " + words(rng, 2) + "."}};
      r.conversation.labels[std::string(attribute_name(attribute))] = sub;
      out.push_back(std::move(r));
    }
  }
  return out;
}

namespace {

void ref_rmsnorm(const std::vector<double>& x, const std::vector<float>& gain, std::vector<double>& out) {
  double ms = 0;
  for (double v : x) ms += v * v;
  ms /= static_cast<double>(x.size());
  const double inv = 1.0 / std::sqrt(ms + 1e-5);
  out.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * inv * gain[i];
}

std::vector<double> ref_matvec(const std::vector<float>& w, const std::vector<double>& x, std::size_t rows) {
  const std::size_t cols = x.size();
  std::vector<double> y(rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = 0;
    for (std::size_t c = 0; c < cols; ++c) acc += static_cast<double>(w[r * cols + c]) * x[c];
    y[r] = acc;
  }
  return y;
}

}  // namespace

std::vector<double> reference_forward(const model::Engine& engine, const std::vector<model::TokenId>& tokens,
                                      std::vector<std::vector<double>>* block_outputs) {
  const auto& cfg = engine.config();
  const auto& W = engine.weights();
  const std::size_t d = cfg.d_model, n = tokens.size(), V = cfg.vocab_size, H = cfg.n_heads, hd = cfg.head_dim();
  std::vector<std::vector<double>> x(n, std::vector<double>(d));
  for (std::size_t p = 0; p < n; ++p) {
    for (std::size_t i = 0; i < d; ++i) {
      x[p][i] = static_cast<double>(W.tok_embeddings[static_cast<std::size_t>(tokens[p]) * d + i]) +
                static_cast<double>(W.pos_embeddings[p * d + i]);
    }
  }
  if (block_outputs) block_outputs->assign(cfg.n_layers, std::vector<double>(n * d));
  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    const auto& L = W.layers[l];
    std::vector<std::vector<double>> q(n), k(n), v(n);
    std::vector<double> h;
    for (std::size_t p = 0; p < n; ++p) {
      ref_rmsnorm(x[p], L.attn_norm, h);
      q[p] = ref_matvec(L.wq, h, d);
      k[p] = ref_matvec(L.wk, h, d);
      v[p] = ref_matvec(L.wv, h, d);
    }
    for (std::size_t p = 0; p < n; ++p) {
      std::vector<double> attn(d, 0.0);
      for (std::size_t head = 0; head < H; ++head) {
        std::vector<double> s(p + 1);
        double mx = -1e300;
        for (std::size_t j = 0; j <= p; ++j) {
          double acc = 0;
          for (std::size_t i = 0; i < hd; ++i) acc += q[p][head * hd + i] * k[j][head * hd + i];
          s[j] = acc / std::sqrt(static_cast<double>(hd));
          mx = std::max(mx, s[j]);
        }
        double tot = 0;
        for (auto& e : s) tot += (e = std::exp(e - mx));
        for (std::size_t j = 0; j <= p; ++j) {
          for (std::size_t i = 0; i < hd; ++i) attn[head * hd + i] += s[j] / tot * v[j][head * hd + i];
        }
      }
      const auto o = ref_matvec(L.wo, attn, d);
      for (std::size_t i = 0; i < d; ++i) x[p][i] += o[i];
      ref_rmsnorm(x[p], L.mlp_norm, h);
      auto g = ref_matvec(L.w_gate, h, cfg.d_ff());
      const auto u = ref_matvec(L.w_up, h, cfg.d_ff());
      for (std::size_t i = 0; i < g.size(); ++i) g[i] = g[i] / (1.0 + std::exp(-g[i])) * u[i];
      const auto dn = ref_matvec(L.w_down, g, d);
      for (std::size_t i = 0; i < d; ++i) x[p][i] += dn[i];
      if (block_outputs) std::copy(x[p].begin(), x[p].end(), (*block_outputs)[l].begin() + static_cast<long>(p * d));
    }
  }
  std::vector<double> logits(n * V);
  std::vector<double> h;
  for (std::size_t p = 0; p < n; ++p) {
    ref_rmsnorm(x[p], W.final_norm, h);
    const auto row = ref_matvec(W.output, h, V);
    std::copy(row.begin(), row.end(), logits.begin() + static_cast<long>(p * V));
  }
  return logits;
}

std::filesystem::path golden_dir() { return USERMODEL_GOLDEN_DIR; }

std::string check_golden(const std::string& name, const std::string& actual) {
  const auto path = golden_dir() / name;
  const char* update = std::getenv("USERMODEL_UPDATE_GOLDEN");
  if (update != nullptr && std::string(update) == "1") {
    util::write_text(path, actual);
    return {};
  }
  if (!std::filesystem::exists(path)) return "golden file " + path.string() + " is missing";
  const auto expected = util::read_text(path);
  if (expected == actual) return {};
  std::size_t i = 0;
  while (i < expected.size() && i < actual.size() && expected[i] == actual[i]) ++i;
  return "golden " + name + " differs at byte " + std::to_string(i);
}

}  // namespace testsupport
