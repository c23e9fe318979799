#include "usermodel/cli/cli.hpp"

#include <algorithm>
#include <atomic>
#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>

#include <CLI11.hpp>

#include "usermodel/causality/causality.hpp"
#include "usermodel/dataset/annotation.hpp"
#include "usermodel/dataset/generation.hpp"
#include "usermodel/error.hpp"
#include "usermodel/eval/baselines.hpp"
#include "usermodel/model/engine.hpp"
#include "usermodel/probes/comments.hpp"
#include "usermodel/probes/user_model.hpp"
#include "usermodel/repr/representation.hpp"
#include "usermodel/server/http.hpp"
#include "usermodel/steering/steering.hpp"
#include "usermodel/util/hash.hpp"
#include "usermodel/util/io.hpp"

namespace usermodel::cli {

nlohmann::json EffectiveConfig::to_json() const {
  auto opt = [](const std::optional<std::string>& v) -> nlohmann::json {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  };
  nlohmann::json client_json = client.to_json();
  client_json["credential"] = credential_present ? nlohmann::json("****") : nlohmann::json(nullptr);
  return {{"seed", seed},
          {"out", opt(out)},
          {"fixture", opt(fixture)},
          {"model_config", opt(model_config)},
          {"probes", opt(probes)},
          {"port", port},
          {"host", host},
          {"workers", workers},
          {"client", client_json},
          {"steering",
           {{"layer_window", layer_window ? nlohmann::json{layer_window->first, layer_window->second}
                                          : nlohmann::json("top-half")},
            {"strength", strength},
            {"source", steering_source},
            {"pin_zero", pin_zero}}},
          {"generation", {{"max_new_tokens", max_new_tokens}}},
          {"train",
           {{"l2_strength", train.l2_strength},
            {"max_epochs", train.max_epochs},
            {"learning_rate", train.learning_rate},
            {"convergence_tol", train.convergence_tol},
            {"train_fraction", train.train_fraction}}}};
}

EffectiveConfig resolve_config(const FlagValues& flags, const std::optional<nlohmann::json>& file,
                               const EnvLookup& env) {
  EffectiveConfig c;
  const auto cred = env(c.client.credential_env);
  if (file) {
    const auto& f = *file;
    if (!f.is_object()) throw Error(ErrorCode::kInvalidConfig, "config file must hold a JSON object");
    try {
      if (f.contains("seed")) c.seed = f["seed"].get<std::uint64_t>();
      for (auto [key, slot] : {std::pair{"out", &c.out}, std::pair{"fixture", &c.fixture},
                               std::pair{"model_config", &c.model_config}, std::pair{"probes", &c.probes}}) {
        if (f.contains(key) && !f[key].is_null()) *slot = f[key].get<std::string>();
      }
      c.port = f.value("port", c.port);
      c.host = f.value("host", c.host);
      c.workers = f.value("workers", c.workers);
      if (f.contains("client")) c.client = dataset::ClientConfig::from_json(f["client"], c.client);
      if (f.contains("steering")) {
        const auto& s = f["steering"];
        if (s.contains("layer_window")) {
          c.layer_window = {s["layer_window"].at(0).get<int>(), s["layer_window"].at(1).get<int>()};
        }
        c.strength = s.value("strength", c.strength);
        c.steering_source = s.value("source", c.steering_source);
        c.pin_zero = s.value("pin_zero", c.pin_zero);
      }
      if (f.contains("generation")) c.max_new_tokens = f["generation"].value("max_new_tokens", c.max_new_tokens);
      if (f.contains("train")) {
        const auto& t = f["train"];
        c.train.l2_strength = t.value("l2_strength", c.train.l2_strength);
        c.train.max_epochs = t.value("max_epochs", c.train.max_epochs);
        c.train.learning_rate = t.value("learning_rate", c.train.learning_rate);
        c.train.convergence_tol = t.value("convergence_tol", c.train.convergence_tol);
        c.train.train_fraction = t.value("train_fraction", c.train.train_fraction);
      }
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kInvalidConfig, std::string("config file: ") + e.what());
    }
  }
  if (flags.seed) c.seed = *flags.seed;
  if (flags.out) c.out = flags.out;
  if (flags.fixture) c.fixture = flags.fixture;
  if (flags.model_config) c.model_config = flags.model_config;
  if (flags.probes) c.probes = flags.probes;
  if (flags.port) c.port = *flags.port;
  // The credential variable named by the file wins over the default name.
  const auto named = env(c.client.credential_env);
  c.credential_present = (named && !named->empty()) || (c.client.credential_env == dataset::kCredentialEnvVar &&
                                                         cred && !cred->empty());
  c.train.seed = c.seed;
  c.train.validate();
  return c;
}

EnvLookup process_env() {
  return [](const std::string& name) -> std::optional<std::string> {
    const char* v = std::getenv(name.c_str());
    if (v == nullptr) return std::nullopt;
    return std::string(v);
  };
}

namespace {

struct Context {
  EffectiveConfig cfg;
  std::ostream& out;
  std::ostream& err;
};

std::string out_path(const Context& ctx, const std::string& fallback) { return ctx.cfg.out.value_or(fallback); }

model::Engine load_engine(const Context& ctx) {
  model::ModelConfig mc;
  if (ctx.cfg.model_config) mc = model::ModelConfig::load(*ctx.cfg.model_config);
  return model::Engine::from_config(mc);
}

probes::ProbeSet load_probes(const Context& ctx, const model::Engine& engine) {
  if (!ctx.cfg.probes) throw Error(ErrorCode::kInvalidArgument, "--probes is required");
  return probes::load_probe_set(*ctx.cfg.probes, engine.fingerprint());
}

steering::SteeringConfig steering_config(const Context& ctx, const model::Engine& engine) {
  auto s = steering::SteeringConfig::for_layers(engine.n_layers());
  if (ctx.cfg.layer_window) {
    s.window_first = ctx.cfg.layer_window->first;
    s.window_last = ctx.cfg.layer_window->second;
  }
  s.strength = ctx.cfg.strength;
  if (ctx.cfg.steering_source == "control-probe") {
    s.source = steering::VectorSource::kControlProbe;
  } else if (ctx.cfg.steering_source == "reading-probe-matched-l2") {
    s.source = steering::VectorSource::kReadingMatchedL2;
  } else {
    throw Error(ErrorCode::kInvalidConfig, "unknown steering source '" + ctx.cfg.steering_source + "'");
  }
  if (ctx.cfg.pin_zero == "negate") {
    s.pin_zero = steering::PinZeroMode::kNegate;
  } else if (ctx.cfg.pin_zero == "siblings") {
    s.pin_zero = steering::PinZeroMode::kSiblings;
  } else {
    throw Error(ErrorCode::kInvalidConfig, "unknown pin_zero mode '" + ctx.cfg.pin_zero + "'");
  }
  s.validate(engine.n_layers());
  return s;
}

std::unique_ptr<dataset::CompletionClient> client_for(const Context& ctx,
                                                      const std::optional<std::string>& record) {
  std::optional<std::filesystem::path> fixture;
  if (ctx.cfg.fixture) fixture = *ctx.cfg.fixture;
  std::optional<std::filesystem::path> rec;
  if (record) rec = *record;
  return dataset::make_client(ctx.cfg.client, fixture, rec);
}

std::string seed_tag(const Context& ctx) { return "seed=" + std::to_string(ctx.cfg.seed); }

std::string fmt(double v, const char* f = "%.4f") {
  char b[32];
  std::snprintf(b, sizeof b, f, v);
  return b;
}

std::vector<Attribute> parse_attributes(const std::vector<std::string>& names) {
  std::vector<Attribute> out;
  if (names.empty()) return {kAllAttributes.begin(), kAllAttributes.end()};
  for (const auto& n : names) out.push_back(parse_attribute(n));
  return out;
}

// Conversations with labels: dataset records or {id, messages, labels}.
std::vector<model::Conversation> read_sessions(const std::string& path) {
  std::vector<model::Conversation> out;
  for (const auto& row : util::read_jsonl(path)) {
    if (row.contains("labels")) {
      model::Conversation c;
      c.messages = model::Conversation::messages_from_json(row.at("messages"));
      for (const auto& [k, v] : row["labels"].items()) {
        const auto attr = parse_attribute(k);
        subcategory_index(attr, v.get<std::string>());
        c.labels[k] = v.get<std::string>();
      }
      out.push_back(std::move(c));
    } else {
      out.push_back(dataset::DatasetRecord::from_json(row).conversation);
    }
  }
  return out;
}

// ---- subcommands ----

struct GenDataArgs {
  std::string attribute;
  std::string subcategory;
  std::size_t count = 10;
  double temperature = 1.0;
  std::optional<std::string> record;
};

int cmd_gen_data(Context& ctx, const GenDataArgs& a) {
  dataset::GenerationJob job;
  job.attribute = parse_attribute(a.attribute);
  job.subcategory = a.subcategory;
  job.count = a.count;
  job.seed = ctx.cfg.seed;
  job.temperature = a.temperature;
  job.workers = ctx.cfg.workers;
  auto client = client_for(ctx, a.record);
  const auto report = dataset::generate_dataset(*client, job);
  for (const auto& line : report.log) ctx.err << line << "\n";
  const auto path = out_path(ctx, "dataset.jsonl");
  dataset::write_dataset(path, report.records);
  ctx.out << "gen-data: attribute=" << a.attribute << " wrote " << report.records.size()
          << " conversations to " << path << " (skipped " << report.skipped << ", duplicates "
          << report.duplicates << ") " << seed_tag(ctx) << "\n";
  return kExitOk;
}

struct AnnotateArgs {
  std::string data;
  std::optional<std::string> record;
};

int cmd_annotate(Context& ctx, const AnnotateArgs& a) {
  const auto records = dataset::read_dataset(a.data);
  auto client = client_for(ctx, a.record);
  const auto annotations = dataset::annotate_dataset(*client, records, ctx.cfg.workers);
  std::size_t flagged = 0;
  for (const auto& an : annotations) {
    if (an.flagged) {
      ++flagged;
      ctx.err << an.id << ": flagged: " << an.error << "\n";
    }
  }
  const auto path = out_path(ctx, "annotations.jsonl");
  dataset::write_annotations(path, annotations);
  ctx.out << "annotate: wrote " << annotations.size() << " annotations to " << path << " (" << flagged
          << " flagged) " << seed_tag(ctx) << "\n";
  return kExitOk;
}

struct StatsArgs {
  std::string data;
  std::string annotations;
};

int cmd_stats(Context& ctx, const StatsArgs& a) {
  const auto records = dataset::read_dataset(a.data);
  const auto annotations = dataset::read_annotations(a.annotations);
  const auto stats = dataset::dataset_stats(records, annotations);
  ctx.out << stats.table();
  if (ctx.cfg.out) util::write_text(*ctx.cfg.out, util::dump_json(stats.to_json(), 2) + "\n");
  ctx.out << "stats: " << records.size() << " conversations over " << stats.attributes.size() << " attributes "
          << seed_tag(ctx) << "\n";
  return kExitOk;
}

struct TrainArgs {
  std::string data;
  std::optional<std::string> cache;
  std::string kind = "both";
  std::optional<std::string> csv;
};

std::vector<probes::AttributeData> collect_samples(const model::Engine& engine,
                                                   const std::vector<dataset::DatasetRecord>& records,
                                                   repr::RepKind kind, repr::ActivationCache* cache) {
  std::map<Attribute, probes::AttributeData> by_attr;
  for (const auto& r : records) {
    auto& d = by_attr[r.attribute];
    d.attribute = r.attribute;
    auto rep = cache ? cache->get_or_extract(engine, r.conversation, kind, r.attribute)
                     : (kind == repr::RepKind::kReading ? repr::extract_reading_rep(engine, r.conversation, r.attribute)
                                                        : repr::extract_control_rep(engine, r.conversation));
    rep.source_conversation_id = r.id;
    rep.label = r.subcategory;
    d.samples.push_back({r.id, r.subcategory, std::move(rep)});
  }
  std::vector<probes::AttributeData> out;
  for (auto& [attr, d] : by_attr) out.push_back(std::move(d));
  return out;
}

int cmd_train_probes(Context& ctx, const TrainArgs& a) {
  std::vector<repr::RepKind> kinds;
  if (a.kind == "both") {
    kinds = {repr::RepKind::kReading, repr::RepKind::kControl};
  } else {
    kinds = {repr::parse_rep_kind(a.kind)};
  }
  const auto engine = load_engine(ctx);
  const auto records = dataset::read_dataset(a.data);
  if (records.empty()) throw Error(ErrorCode::kEmptyInput, "dataset " + a.data + " is empty");
  std::unique_ptr<repr::ActivationCache> cache;
  if (a.cache) cache = std::make_unique<repr::ActivationCache>(*a.cache);

  probes::ProbeSet set;
  set.model_fingerprint = engine.fingerprint();
  std::vector<probes::LayerAccuracy> table;
  for (auto kind : kinds) {
    const auto data = collect_samples(engine, records, kind, cache.get());
    auto result = probes::train_probe_suite(data, kind, ctx.cfg.train, engine.fingerprint());
    set.merge(result.set);
    table.insert(table.end(), result.table.begin(), result.table.end());
  }
  const auto path = out_path(ctx, "probes.bin");
  probes::save_probe_set(set, path);
  std::string csv = "kind,attribute,layer,subcategory,accuracy\n";
  for (const auto& row : table) {
    const auto& subs = subcategories(row.attribute);
    const std::string prefix = std::string(repr::rep_kind_name(row.kind)) + "," +
                               std::string(attribute_name(row.attribute)) + "," + std::to_string(row.layer) + ",";
    for (std::size_t i = 0; i < subs.size(); ++i) csv += prefix + subs[i] + "," + fmt(row.per_subcategory[i], "%.6f") + "\n";
    csv += prefix + "mean," + fmt(row.mean_accuracy, "%.6f") + "\n";
  }
  const auto csv_path = a.csv.value_or(path + ".accuracy.csv");
  util::write_text(csv_path, csv);
  ctx.out << probes::format_accuracy_table(table);
  std::string selected;
  for (const auto& [key, layer] : set.selected_layer) {
    selected += " " + std::string(attribute_name(key.first)) + "/" + std::string(repr::rep_kind_name(key.second)) +
                "=L" + std::to_string(layer);
  }
  ctx.out << "train-probes: " << set.probes.size() << " probes from " << records.size() << " conversations to "
          << path << "; selected" << selected << "; table " << csv_path;
  if (cache) ctx.out << "; cache hits " << cache->hits() << " misses " << cache->misses();
  ctx.out << " " << seed_tag(ctx) << "\n";
  return kExitOk;
}

struct EvalArgs {
  std::string data;
  bool baselines = false;
  std::optional<std::string> comments;
  std::size_t comments_k = probes::kDefaultCommentsPerUser;
};

std::string argmax_top(const probes::ProbeSet& set, Attribute attr, repr::RepKind kind,
                       const std::vector<float>& x, int layer) {
  const auto probes_for = set.attribute_probes(attr, layer, kind);
  const auto reading = probes::reading_from_vector(attr, probes_for, x, 0.0);
  return *reading.top;
}

int cmd_eval_probes(Context& ctx, const EvalArgs& a) {
  const auto engine = load_engine(ctx);
  const auto set = load_probes(ctx, engine);
  nlohmann::json report = nlohmann::json::object();
  report["held_out"] = nlohmann::json::array();
  std::string summary;

  if (!a.data.empty()) {
    const auto records = dataset::read_dataset(a.data);
    std::map<std::string, const dataset::DatasetRecord*> by_id;
    for (const auto& r : records) by_id[r.id] = &r;
    for (const auto& [attr, ids] : set.validation_ids) {
      std::vector<std::string> truth;
      std::map<std::string, std::vector<std::string>> preds;
      for (const auto& id : ids) {
        auto it = by_id.find(id);
        if (it == by_id.end()) throw Error(ErrorCode::kCoverage, "held-out id " + id + " is not in " + a.data);
        const auto& rec = *it->second;
        truth.push_back(rec.subcategory);
        for (auto kind : {repr::RepKind::kReading, repr::RepKind::kControl}) {
          const auto layer = set.selected(attr, kind);
          if (!layer) continue;
          const auto rep = kind == repr::RepKind::kReading ? repr::extract_reading_rep(engine, rec.conversation, attr)
                                                           : repr::extract_control_rep(engine, rec.conversation);
          preds[std::string(repr::rep_kind_name(kind)) + "-probe"].push_back(
              argmax_top(set, attr, kind, rep.vectors.at(*layer), *layer));
        }
        if (a.baselines) {
          for (auto m : {eval::BaselineMethod::kUserPrompt, eval::BaselineMethod::kSystemPrompt,
                         eval::BaselineMethod::kChatbotPrompt}) {
            const auto r = eval::prompt_baseline_read(engine, rec.conversation, attr, m);
            preds[std::string(eval::baseline_method_name(m))].push_back(
                r.subcategory.value_or(r.outcome == eval::BaselineReading::Outcome::kRefusal ? "<refusal>"
                                                                                             : "<unparseable>"));
          }
        }
      }
      for (const auto& [method, p] : preds) {
        const double acc = probes::balanced_accuracy(p, truth);
        report["held_out"].push_back({{"attribute", attribute_name(attr)},
                                      {"method", method},
                                      {"balanced_accuracy", acc},
                                      {"n", truth.size()}});
        ctx.out << attribute_name(attr) << " " << method << " balanced_accuracy=" << fmt(acc) << " n="
                << truth.size() << "\n";
      }
    }
    summary += " held-out rows " + std::to_string(report["held_out"].size());
  }

  if (a.comments) {
    // {id, labels:{attribute: subcategory}, comments:[...]}
    std::map<Attribute, std::pair<std::vector<std::string>, std::vector<std::string>>> acc;
    std::uint64_t index = 0;
    for (const auto& row : util::read_jsonl(*a.comments)) {
      const auto comments = row.at("comments").get<std::vector<std::string>>();
      auto conv = probes::ingest_comment_corpus(comments, a.comments_k, util::mix_seed(ctx.cfg.seed, index++));
      for (const auto& [k, v] : row.at("labels").items()) {
        const auto attr = parse_attribute(k);
        const auto layer = set.selected(attr, repr::RepKind::kReading);
        if (!layer) continue;
        const auto rep = repr::extract_reading_rep(engine, conv, attr);
        acc[attr].first.push_back(argmax_top(set, attr, repr::RepKind::kReading, rep.vectors.at(*layer), *layer));
        acc[attr].second.push_back(v.get<std::string>());
      }
    }
    report["comments"] = nlohmann::json::array();
    for (const auto& [attr, pt] : acc) {
      const double b = probes::balanced_accuracy(pt.first, pt.second);
      report["comments"].push_back(
          {{"attribute", attribute_name(attr)}, {"balanced_accuracy", b}, {"n", pt.second.size()}});
      ctx.out << attribute_name(attr) << " comments balanced_accuracy=" << fmt(b) << " n=" << pt.second.size() << "\n";
    }
    summary += " comment rows " + std::to_string(report["comments"].size());
  }
  if (a.data.empty() && !a.comments) throw Error(ErrorCode::kInvalidArgument, "give --data and/or --comments");
  const auto path = out_path(ctx, "eval.json");
  util::write_text(path, util::dump_json(report, 2) + "\n");
  ctx.out << "eval-probes:" << summary << " written to " << path << " " << seed_tag(ctx) << "\n";
  return kExitOk;
}

struct CausalityArgs {
  std::vector<std::string> attributes;
  std::string source = "both";
  std::optional<std::string> record;
  std::optional<std::string> bank_dir;
};

int cmd_causality(Context& ctx, const CausalityArgs& a) {
  const auto engine = load_engine(ctx);
  const auto set = load_probes(ctx, engine);
  std::vector<causality::PlanSource> sources;
  if (a.source == "both") {
    sources = {causality::PlanSource::kControl, causality::PlanSource::kReadingMatchedL2};
  } else {
    sources = {causality::parse_plan_source(a.source)};
  }
  causality::CausalityConfig cc;
  cc.steering = steering_config(ctx, engine);
  cc.generation.max_new_tokens = ctx.cfg.max_new_tokens;
  cc.seed = ctx.cfg.seed;
  cc.workers = ctx.cfg.workers;
  auto client = client_for(ctx, a.record);

  std::vector<causality::CausalityTrial> trials;
  for (Attribute attr : parse_attributes(a.attributes)) {
    const auto bank = a.bank_dir ? causality::QuestionBank::load(
                                       attr, std::filesystem::path(*a.bank_dir) /
                                                 (std::string(attribute_name(attr)) + ".txt"))
                                 : causality::QuestionBank::load(attr);
    for (auto src : sources) {
      auto t = causality::run_causality(engine, set, bank, src, cc, *client);
      trials.insert(trials.end(), t.begin(), t.end());
    }
  }
  std::vector<nlohmann::json> rows;
  for (const auto& t : trials) rows.push_back(t.to_json());
  const auto path = out_path(ctx, "causality.jsonl");
  util::write_jsonl(path, rows);
  const auto rates = causality::causality_success_rate(trials);
  nlohmann::json rates_json = nlohmann::json::array();
  std::string summary;
  for (const auto& r : rates) {
    rates_json.push_back(r.to_json());
    ctx.out << attribute_name(r.attribute) << " " << causality::plan_source_name(r.source)
            << " success_rate=" << fmt(r.rate, "%.2f") << " correct=" << r.correct << " judged=" << r.judged
            << " unjudged=" << (r.attempted - r.judged) << "\n";
    summary += " " + std::string(attribute_name(r.attribute)) + "/" + std::string(causality::plan_source_name(r.source)) +
               "=" + fmt(r.rate, "%.2f");
  }
  util::write_text(path + ".rates.json", util::dump_json(rates_json, 2) + "\n");
  ctx.out << "causality:" << summary << "; " << trials.size() << " trials to " << path << " " << seed_tag(ctx) << "\n";
  return kExitOk;
}

struct SweepArgs {
  std::string attribute;
  std::string subcategory;
  std::string mode = "pin-100";
  std::vector<std::string> prompts;
  std::optional<std::string> prompts_file;
  std::size_t limit = 10;
  std::vector<double> strengths{0, 1, 2, 4, 8};
};

int cmd_sweep(Context& ctx, const SweepArgs& a) {
  const auto engine = load_engine(ctx);
  const auto set = load_probes(ctx, engine);
  const auto attr = parse_attribute(a.attribute);
  const steering::PinState pin{attr, a.subcategory, steering::parse_pin_mode(a.mode)};
  steering::validate_pins(std::span(&pin, 1));
  std::vector<std::string> prompts = a.prompts;
  if (a.prompts_file) {
    for (auto& l : util::read_lines(*a.prompts_file)) prompts.push_back(l);
  }
  if (prompts.empty()) {
    const auto bank = causality::QuestionBank::load(attr);
    prompts.assign(bank.questions.begin(), bank.questions.begin() + static_cast<long>(std::min(a.limit, bank.questions.size())));
  }
  const auto sc = steering_config(ctx, engine);
  model::GenerationParams params{ctx.cfg.max_new_tokens, 1};
  std::vector<nlohmann::json> rows;
  for (const auto& prompt : prompts) {
    model::Conversation conv;
    conv.messages.push_back({model::Role::kUser, prompt});
    for (const auto& row : steering::strength_sweep(engine, conv, pin, a.strengths, set, sc, params)) {
      auto j = row.to_json();
      j["prompt"] = prompt;
      j["pin"] = pin.to_json();
      rows.push_back(std::move(j));
    }
  }
  const auto path = out_path(ctx, "sweep.jsonl");
  util::write_jsonl(path, rows);
  ctx.out << "sweep: " << prompts.size() << " prompts x " << a.strengths.size() << " strengths, "
          << attribute_name(attr) << "/" << a.subcategory << " " << a.mode << ", layers " << sc.window_first << "-"
          << sc.window_last << " to " << path << " " << seed_tag(ctx) << "\n";
  return kExitOk;
}

struct LensArgs {
  std::string prompt;
};

int cmd_logit_lens(Context& ctx, const LensArgs& a) {
  const auto engine = load_engine(ctx);
  model::Conversation conv;
  conv.messages.push_back({model::Role::kUser, a.prompt});
  const auto entries = engine.logit_lens(conv);
  nlohmann::json j = nlohmann::json::array();
  for (const auto& e : entries) {
    j.push_back({{"layer", e.layer}, {"token", e.token}, {"text", e.text}});
    ctx.out << "layer " << e.layer << ": " << util::dump_json(e.text) << " (" << e.token << ")\n";
  }
  if (ctx.cfg.out) util::write_text(*ctx.cfg.out, util::dump_json(j, 2) + "\n");
  ctx.out << "logit-lens: " << entries.size() << " layers" << (ctx.cfg.out ? " to " + *ctx.cfg.out : std::string())
          << " " << seed_tag(ctx) << "\n";
  return kExitOk;
}

struct CurveArgs {
  std::string data;
  std::vector<std::string> attributes;
  std::optional<std::string> group_by;
  double threshold = probes::kDefaultUnknownThreshold;
};

int cmd_accuracy_curve(Context& ctx, const CurveArgs& a) {
  const auto engine = load_engine(ctx);
  const auto set = load_probes(ctx, engine);
  const auto sessions = read_sessions(a.data);
  const auto attrs = parse_attributes(a.attributes);
  std::optional<Attribute> group;
  if (a.group_by) group = parse_attribute(*a.group_by);
  const auto points = eval::accuracy_by_turn(
      sessions, [&](const model::Conversation& c) { return probes::read_user_model(engine, c, set, a.threshold); },
      attrs, group);
  const auto path = out_path(ctx, "accuracy_curve.csv");
  util::write_text(path, eval::curve_csv(points));
  std::size_t turns = 0;
  for (const auto& p : points) turns = std::max(turns, p.turn);
  ctx.out << "accuracy-curve: " << sessions.size() << " sessions, " << turns << " turns, " << points.size()
          << " points to " << path << " " << seed_tag(ctx) << "\n";
  return kExitOk;
}

struct ServeArgs {
  std::optional<std::string> static_dir;
  std::optional<std::string> persist;
};

std::atomic<server::HttpServer*> g_server{nullptr};

extern "C" void handle_stop_signal(int) {
  if (auto* s = g_server.load()) s->stop();
}

int cmd_serve(Context& ctx, const ServeArgs& a) {
  const auto engine = load_engine(ctx);
  std::shared_ptr<const probes::ProbeSet> set;
  if (ctx.cfg.probes) set = std::make_shared<probes::ProbeSet>(load_probes(ctx, engine));
  server::ServiceConfig sc;
  sc.steering = steering_config(ctx, engine);
  sc.generation.max_new_tokens = ctx.cfg.max_new_tokens;
  if (a.persist) sc.persist_dir = *a.persist;
  server::SessionService service(engine, set, sc);
  server::HttpServer http(service, a.static_dir.value_or(""));
  g_server = &http;
  std::signal(SIGINT, handle_stop_signal);
  std::signal(SIGTERM, handle_stop_signal);
  ctx.out << "serve: listening on " << ctx.cfg.host << ":" << ctx.cfg.port << " model " << engine.fingerprint()
          << (set ? "" : " (no probes loaded)") << " " << seed_tag(ctx) << std::endl;
  http.serve(ctx.cfg.host, ctx.cfg.port);
  g_server = nullptr;
  return kExitOk;
}

void add_common(CLI::App* sub, FlagValues& f, bool& print_config) {
  sub->add_option("--config", f.config, "JSON config file");
  sub->add_option("--out", f.out, "Output artifact path");
  sub->add_option("--seed", f.seed, "Seed (default 0)");
  sub->add_option("--fixture", f.fixture, "Replay external-service replies from a fixture file or directory");
  sub->add_option("--model-config", f.model_config, "Model configuration JSON");
  sub->add_option("--probes", f.probes, "Probe file");
  sub->add_option("--port", f.port, "Server port");
  sub->add_flag("--print-config", print_config, "Print the effective configuration and exit");
}

}  // namespace

int run(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"usermodel: probe, steer and inspect a chat model's model of its user", "usermodel"};
  app.require_subcommand(1);
  FlagValues flags;
  bool print_config = false;

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate labeled synthetic conversations");
  gen_cmd->add_option("--attribute", gen.attribute, "age | gender | education | socioeco")->required();
  gen_cmd->add_option("--subcategory", gen.subcategory, "Fixed subcategory (round-robin when omitted)");
  gen_cmd->add_option("--count", gen.count, "Conversations to request");
  gen_cmd->add_option("--temperature", gen.temperature, "Generator temperature");
  gen_cmd->add_option("--record", gen.record, "Append live replies to this fixture file");

  AnnotateArgs ann;
  auto* ann_cmd = app.add_subcommand("annotate", "Judge generated conversations");
  ann_cmd->add_option("--data", ann.data, "Dataset JSONL")->required();
  ann_cmd->add_option("--record", ann.record, "Append live replies to this fixture file");

  StatsArgs st;
  auto* st_cmd = app.add_subcommand("stats", "Dataset statistics");
  st_cmd->add_option("--data", st.data, "Dataset JSONL")->required();
  st_cmd->add_option("--annotations", st.annotations, "Annotation JSONL")->required();

  TrainArgs tr;
  auto* tr_cmd = app.add_subcommand("train-probes", "Train reading and/or control probes");
  tr_cmd->add_option("--data", tr.data, "Dataset JSONL")->required();
  tr_cmd->add_option("--cache", tr.cache, "Activation cache directory");
  tr_cmd->add_option("--kind", tr.kind, "reading | control | both")
      ->check(CLI::IsMember({"reading", "control", "both"}));
  tr_cmd->add_option("--csv", tr.csv, "Accuracy-by-layer CSV (default <out>.accuracy.csv)");

  EvalArgs ev;
  auto* ev_cmd = app.add_subcommand("eval-probes", "Held-out and comment-corpus evaluation");
  ev_cmd->add_option("--data", ev.data, "Dataset JSONL holding the held-out ids");
  ev_cmd->add_flag("--baselines", ev.baselines, "Also run the three prompting baselines");
  ev_cmd->add_option("--comments", ev.comments, "Comment corpus JSONL {id, labels, comments}");
  ev_cmd->add_option("--comments-per-user", ev.comments_k, "Comments sampled per user");

  CausalityArgs ca;
  auto* ca_cmd = app.add_subcommand("causality", "Steered response pairs judged by an external model");
  ca_cmd->add_option("--attribute", ca.attributes, "Attribute(s); all when omitted");
  ca_cmd->add_option("--source", ca.source, "control | reading-matched-l2 | both")
      ->check(CLI::IsMember({"control", "reading-matched-l2", "both"}));
  ca_cmd->add_option("--record", ca.record, "Append live judge replies to this fixture file");
  ca_cmd->add_option("--bank-dir", ca.bank_dir, "Directory of <attribute>.txt question banks");

  SweepArgs sw;
  auto* sw_cmd = app.add_subcommand("sweep", "Steering strength sweep");
  sw_cmd->add_option("--attribute", sw.attribute, "Attribute")->required();
  sw_cmd->add_option("--subcategory", sw.subcategory, "Pinned subcategory")->required();
  sw_cmd->add_option("--mode", sw.mode, "pin-100 | pin-0")->check(CLI::IsMember({"pin-100", "pin-0"}));
  sw_cmd->add_option("--prompt", sw.prompts, "Prompt (repeatable)");
  sw_cmd->add_option("--prompts", sw.prompts_file, "File with one prompt per line");
  sw_cmd->add_option("--limit", sw.limit, "Question-bank prompts used when no prompt is given");
  sw_cmd->add_option("--strengths", sw.strengths, "Strength values")->delimiter(',');

  LensArgs ll;
  auto* ll_cmd = app.add_subcommand("logit-lens", "Per-layer next-token predictions");
  ll_cmd->add_option("--prompt", ll.prompt, "User message")->required();

  CurveArgs cu;
  auto* cu_cmd = app.add_subcommand("accuracy-curve", "User-model accuracy by conversation turn");
  cu_cmd->add_option("--data", cu.data, "Labeled sessions JSONL")->required();
  cu_cmd->add_option("--attribute", cu.attributes, "Attributes to score; all when omitted");
  cu_cmd->add_option("--group-by", cu.group_by, "Split the curve by this attribute's label");
  cu_cmd->add_option("--threshold", cu.threshold, "Unknown threshold");

  ServeArgs sv;
  auto* sv_cmd = app.add_subcommand("serve", "REST service for the dashboard");
  sv_cmd->add_option("--static", sv.static_dir, "Directory of static assets to serve");
  sv_cmd->add_option("--persist", sv.persist, "Directory for per-session JSONL logs");

  for (auto* sub : app.get_subcommands({})) add_common(sub, flags, print_config);

  std::vector<std::string> args(argv.begin() + (argv.empty() ? 0 : 1), argv.end());
  if (std::find(args.begin(), args.end(), "--print-config") != args.end()) {
    for (auto* sub : app.get_subcommands({})) {
      for (auto* opt : sub->get_options()) opt->required(false);
    }
  }
  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n" << app.help();
    return kExitUsage;
  }

  try {
    std::optional<nlohmann::json> file;
    if (flags.config) {
      file = nlohmann::json::parse(util::read_text(*flags.config), nullptr, false);
      if (file->is_discarded()) throw Error(ErrorCode::kInvalidConfig, "config file " + *flags.config + " is not JSON");
    }
    Context ctx{resolve_config(flags, file, process_env()), out, err};
    if (print_config) {
      out << util::dump_json(ctx.cfg.to_json(), 2) << "\n";
      return kExitOk;
    }
    if (*gen_cmd) return cmd_gen_data(ctx, gen);
    if (*ann_cmd) return cmd_annotate(ctx, ann);
    if (*st_cmd) return cmd_stats(ctx, st);
    if (*tr_cmd) return cmd_train_probes(ctx, tr);
    if (*ev_cmd) return cmd_eval_probes(ctx, ev);
    if (*ca_cmd) return cmd_causality(ctx, ca);
    if (*sw_cmd) return cmd_sweep(ctx, sw);
    if (*ll_cmd) return cmd_logit_lens(ctx, ll);
    if (*cu_cmd) return cmd_accuracy_curve(ctx, cu);
    if (*sv_cmd) return cmd_serve(ctx, sv);
  } catch (const Error& e) {
    err << "error: " << error_code_name(e.code()) << ": " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  err << "usage error: no subcommand\n";
  return kExitUsage;
}

}  // namespace usermodel::cli
