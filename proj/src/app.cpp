#include "refdial/app.hpp"

#include <algorithm>
#include <iostream>
#include <map>
#include <set>

#include <CLI11.hpp>

#include "refdial/error.hpp"
#include "refdial/scripted_backend.hpp"
#include "refdial/util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace refdial {

namespace {

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

BackendSpec backend_spec_from_json(const json& j, const fs::path& base) {
  BackendSpec spec;
  const std::string type = j.value("type", "openai");
  if (type == "scripted") {
    spec.kind = BackendSpec::Kind::Scripted;
    if (!j.contains("script")) throw Error(ErrorCode::ConfigError, "scripted backend needs \"script\"");
    spec.script = resolve(base, j.at("script").get<std::string>());
    spec.http.image_tokens = j.value("image_tokens", spec.http.image_tokens);
  } else if (type == "openai") {
    spec.kind = BackendSpec::Kind::OpenAi;
    spec.http = backend_config_from_json(j);
  } else {
    throw Error(ErrorCode::ConfigError, "unknown backend type '" + type + "'");
  }
  return spec;
}

bool file_exists(const fs::path& p) {
  std::error_code ec;
  return fs::is_regular_file(p, ec);
}

int missing(std::ostream& err, const std::string& what, const fs::path& path) {
  err << "error: missing " << what << ": " << path.string() << "\n";
  return kExitMissingPrerequisite;
}

int exit_code_for(const Error& e) {
  if (is_backend_failure(e.code())) return kExitBackend;
  if (e.code() == ErrorCode::ManifestNotFound) return kExitMissingPrerequisite;
  if (e.code() == ErrorCode::UnresolvableType) return kExitClassification;
  return kExitError;
}

// Runs a command body, turning escaped exceptions into exit codes.
template <typename Fn>
int guarded(std::ostream& err, Fn&& body) {
  try {
    return body();
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitError;
  }
}

std::map<std::string, std::string> system_prompts(const RunConfig& cfg, const Corpus& corpus) {
  std::map<std::string, std::string> prompts = default_system_prompts(corpus.domains);
  if (cfg.system_prompts) {
    try {
      prompts = json::parse(read_text_file(*cfg.system_prompts)).get<std::map<std::string, std::string>>();
    } catch (const json::exception& e) {
      throw Error(ErrorCode::ConfigError, cfg.system_prompts->string() + ": " + e.what());
    }
  }
  return prompts;
}

}  // namespace

RunConfig run_config_from_json(const json& j, const fs::path& base) {
  if (!j.is_object()) throw Error(ErrorCode::ConfigError, "run config must be a JSON object");
  RunConfig cfg;
  try {
    if (!j.contains("manifest")) throw Error(ErrorCode::ConfigError, "run config needs \"manifest\"");
    cfg.manifest = resolve(base, j.at("manifest").get<std::string>());
    cfg.taxonomy = resolve(base, j.value("taxonomy", "taxonomy.json"));
    cfg.types = resolve(base, j.value("types", "types.json"));
    cfg.dialogue_dir = resolve(base, j.value("dialogue_dir", "dialogues"));
    cfg.results = resolve(base, j.value("results", "results.jsonl"));
    cfg.report = resolve(base, j.value("report", "report.md"));
    if (j.contains("pricing")) cfg.pricing = resolve(base, j.at("pricing").get<std::string>());
    if (j.contains("system_prompts")) cfg.system_prompts = resolve(base, j.at("system_prompts").get<std::string>());
    cfg.classification_template = j.value("classification_template", cfg.classification_template);

    if (auto s = j.find("strategy"); s != j.end()) {
      cfg.strategy.kind = parse_strategy_kind(s->value("kind", "rd"));
      cfg.strategy.frame_budget = s->value("frame_budget", cfg.strategy.frame_budget);
      cfg.strategy.with_timestamps = s->value("with_timestamps", cfg.strategy.with_timestamps);
      cfg.strategy.separator_enabled = s->value("separator", cfg.strategy.separator_enabled);
      const std::string fallback = s->value("fallback", "zero-shot");
      if (fallback == "zero-shot") {
        cfg.fallback = MissingDialogueFallback::ZeroShot;
      } else if (fallback == "domain") {
        cfg.fallback = MissingDialogueFallback::DomainLevel;
      } else {
        throw Error(ErrorCode::ConfigError, "unknown fallback '" + fallback + "' (expected zero-shot or domain)");
      }
    }
    if (cfg.strategy.frame_budget < 1) throw Error(ErrorCode::ConfigError, "frame_budget must be >= 1");

    if (!j.contains("solver")) throw Error(ErrorCode::ConfigError, "run config needs a \"solver\" backend");
    cfg.solver = backend_spec_from_json(j.at("solver"), base);
    cfg.classifier = j.contains("classifier") ? backend_spec_from_json(j.at("classifier"), base) : cfg.solver;

    const int concurrency = j.value("concurrency", 1);
    if (concurrency < 1) throw Error(ErrorCode::ConfigError, "concurrency must be >= 1");
    cfg.concurrency = static_cast<std::size_t>(concurrency);

    if (auto r = j.find("report_options"); r != j.end()) {
      cfg.report_format = parse_report_format(r->value("format", "markdown"));
      cfg.cache_model = parse_cache_model(r->value("cache_model", "prefix"));
      if (auto inputs = r->find("inputs"); inputs != r->end()) {
        for (const json& in : *inputs) {
          cfg.report_inputs.push_back({in.at("method").get<std::string>(), resolve(base, in.at("results").get<std::string>())});
        }
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigError, std::string("run config: ") + e.what());
  }
  return cfg;
}

RunConfig load_run_config(const fs::path& path) {
  if (!file_exists(path)) throw Error(ErrorCode::ConfigError, "run config not found: " + path.string());
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ConfigError, path.string() + ": " + e.what());
  }
  return run_config_from_json(j, path.parent_path());
}

std::unique_ptr<ChatBackend> make_backend(const BackendSpec& spec) {
  if (spec.kind == BackendSpec::Kind::Scripted) return ScriptedBackend::from_file(spec.script, spec.http.image_tokens);
  return std::make_unique<OpenAiBackend>(spec.http);
}

int cmd_classify(const RunConfig& cfg, ChatBackend& classifier, std::ostream& out, std::ostream& err) {
  return guarded(err, [&]() -> int {
    if (!file_exists(cfg.manifest)) return missing(err, "manifest", cfg.manifest);
    if (!file_exists(cfg.taxonomy)) return missing(err, "taxonomy", cfg.taxonomy);
    const Corpus corpus = load_manifest(cfg.manifest);
    const Taxonomy taxonomy = Taxonomy::load(cfg.taxonomy);
    ClassificationCache cache = ClassificationCache::load(cfg.types);

    std::vector<const Example*> all;
    for (const Example& e : corpus.support) all.push_back(&e);
    for (const Example& e : corpus.test) all.push_back(&e);

    enum class Source { Manifest, Cache, Backend };
    struct Outcome {
      std::optional<std::string> label;
      Source source = Source::Manifest;
      std::optional<Error> error;
    };
    std::vector<Outcome> outcomes(all.size());
    parallel_for(all.size(), cfg.concurrency, [&](std::size_t i) {
      const Example& e = *all[i];
      Outcome& o = outcomes[i];
      if (e.question_type) {
        if (auto label = taxonomy.match(*e.question_type)) {
          o.label = *label;
          return;
        }
      }
      if (auto cached = cache.get(e.id); cached && taxonomy.contains(*cached)) {
        o.label = *cached;
        o.source = Source::Cache;
        return;
      }
      o.source = Source::Backend;
      try {
        o.label = classify_question(e, taxonomy, classifier, cfg.classification_template).qtype;
      } catch (const Error& ex) {
        o.error = ex;
      }
    });

    std::size_t counts[3] = {0, 0, 0};
    for (std::size_t i = 0; i < all.size(); ++i) {
      if (outcomes[i].label) {
        cache.put(all[i]->id, *outcomes[i].label);
        ++counts[static_cast<int>(outcomes[i].source)];
      }
    }
    cache.save(cfg.types);

    for (std::size_t i = 0; i < all.size(); ++i) {
      if (const auto& e = outcomes[i].error) {
        err << "error: classification failed for " << all[i]->id << ": " << e->what() << "\n";
        return exit_code_for(*e);
      }
    }
    out << "classified " << all.size() << " questions (" << counts[0] << " from manifest, " << counts[1]
        << " cached, " << counts[2] << " via backend) -> " << cfg.types.string() << "\n";
    return kExitOk;
  });
}

namespace {

struct Group {
  std::string domain;
  std::string qtype;
  std::vector<TypedExample> examples;
};

// Support examples grouped by (domain, type) in manifest order. Returns nullopt
// and reports when a support example has no recorded type.
std::optional<std::vector<Group>> group_support(const Corpus& corpus, const ClassificationCache& types, std::ostream& err) {
  std::vector<Group> groups;
  std::map<std::pair<std::string, std::string>, std::size_t> index;
  for (const Example& e : corpus.support) {
    auto qtype = types.get(e.id);
    if (!qtype) {
      err << "error: no question type recorded for support example " << e.id << "; run classify first\n";
      return std::nullopt;
    }
    auto [it, inserted] = index.try_emplace({e.domain, *qtype}, groups.size());
    if (inserted) groups.push_back({e.domain, *qtype, {}});
    groups[it->second].examples.push_back({e, *qtype});
  }
  return groups;
}

}  // namespace

int cmd_build_dialogues(const RunConfig& cfg, ChatBackend& solver, std::ostream& out, std::ostream& err) {
  return guarded(err, [&]() -> int {
    if (!file_exists(cfg.manifest)) return missing(err, "manifest", cfg.manifest);
    if (!file_exists(cfg.types)) return missing(err, "classification sidecar (run classify first)", cfg.types);
    const Corpus corpus = load_manifest(cfg.manifest);
    const ClassificationCache types = ClassificationCache::load(cfg.types);
    auto groups = group_support(corpus, types, err);
    if (!groups) return kExitMissingPrerequisite;
    const auto prompts = system_prompts(cfg, corpus);
    fs::create_directories(cfg.dialogue_dir);

    struct Outcome {
      std::string line;
      std::optional<Error> error;
    };
    std::vector<Outcome> outcomes(groups->size());
    parallel_for(groups->size(), cfg.concurrency, [&](std::size_t i) {
      const Group& g = (*groups)[i];
      const std::string name = dialogue_filename(g.domain, g.qtype);
      Outcome& o = outcomes[i];
      if (!cfg.force && file_exists(cfg.dialogue_dir / name)) {
        o.line = name + ": skipped (exists)";
        return;
      }
      try {
        DialogueBuildOptions options;
        options.frames = cfg.strategy.frame_policy();
        options.system_prompt = system_prompt_for(g.domain, prompts);
        options.fps = corpus.fps;
        const ReflectiveDialogue rd = build_dialogue(g.domain, g.qtype, g.examples, solver, options);
        store_dialogue(rd, cfg.dialogue_dir);
        const auto messages = to_messages(rd.turns);
        o.line = name + ": turns=" + std::to_string(rd.turns.size()) + " sources=" +
                 std::to_string(rd.source_ids.size()) + " est_tokens=" +
                 std::to_string(estimate_tokens(std::span<const Message>(messages), cfg.solver.http.image_tokens));
      } catch (const Error& e) {
        o.error = e;
      }
    });

    int code = kExitOk;
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
      if (outcomes[i].error) {
        err << "error: " << (*groups)[i].domain << " / " << (*groups)[i].qtype << ": " << outcomes[i].error->what() << "\n";
        if (code == kExitOk) code = exit_code_for(*outcomes[i].error);
      } else {
        out << outcomes[i].line << "\n";
      }
    }
    return code;
  });
}

int cmd_infer(const RunConfig& cfg, ChatBackend& solver, std::ostream& out, std::ostream& err) {
  return guarded(err, [&]() -> int {
    if (!file_exists(cfg.manifest)) return missing(err, "manifest", cfg.manifest);
    const Corpus corpus = load_manifest(cfg.manifest);
    const bool rd = cfg.strategy.kind == StrategyKind::Rd;
    std::error_code ec;
    if (rd && !file_exists(cfg.types)) return missing(err, "classification sidecar (run classify first)", cfg.types);
    if (rd && !fs::is_directory(cfg.dialogue_dir, ec)) {
      return missing(err, "dialogue directory (run build-dialogues first)", cfg.dialogue_dir);
    }
    const ClassificationCache types = ClassificationCache::load(cfg.types);

    std::vector<Example> test = corpus.test;
    for (Example& e : test) {
      if (auto t = types.get(e.id)) e.question_type = *t;
    }

    const DialogueStore store(cfg.dialogue_dir);
    InferenceContext ctx;
    ctx.strategy = cfg.strategy;
    ctx.dialogues = &store;
    for (const Example& e : corpus.support) ctx.support.push_back({e, types.get(e.id).value_or("")});
    ctx.system_prompts = system_prompts(cfg, corpus);
    ctx.fps = corpus.fps;
    ctx.fallback = cfg.fallback;
    ctx.image_tokens = cfg.solver.http.image_tokens;

    const auto records = run_inference(test, ctx, solver, cfg.concurrency);
    write_text_file_atomic(cfg.results, records_to_jsonl(records));

    std::size_t unparsed = 0;
    for (const PredictionRecord& r : records) {
      if (!r.predicted) ++unparsed;
      if (!r.note.empty()) err << "warning: " << r.example_id << ": " << r.note << "\n";
    }
    out << "wrote " << records.size() << " predictions (" << unparsed << " unparsed, strategy "
        << to_string(cfg.strategy.kind) << ") -> " << cfg.results.string() << "\n";
    return kExitOk;
  });
}

int cmd_report(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  return guarded(err, [&]() -> int {
    if (!file_exists(cfg.manifest)) return missing(err, "manifest", cfg.manifest);
    std::vector<ReportInput> inputs = cfg.report_inputs;
    if (inputs.empty()) inputs.push_back({std::string(to_string(cfg.strategy.kind)), cfg.results});
    for (const ReportInput& in : inputs) {
      if (!file_exists(in.results)) return missing(err, "results (run infer first)", in.results);
    }
    PricingConfig pricing;
    if (cfg.pricing) {
      if (!file_exists(*cfg.pricing)) return missing(err, "pricing", *cfg.pricing);
      pricing = load_pricing(*cfg.pricing);
    }

    const Corpus corpus = load_manifest(cfg.manifest);
    std::map<std::string, Choice> truth;
    for (const Example& e : corpus.test) {
      if (e.answer) truth[e.id] = *e.answer;
    }

    std::vector<MethodReport> rows;
    for (const ReportInput& in : inputs) {
      const auto records = records_from_jsonl(read_text_file(in.results));
      rows.push_back({in.method, evaluate(records, truth, pricing, cfg.cache_model, corpus.domains)});
    }
    const std::string rendered = render_report(rows, cfg.report_format);
    write_text_file_atomic(cfg.report, rendered);
    out << rendered;
    return kExitOk;
  });
}

int run_cli(std::span<const std::string> args, std::ostream& out, std::ostream& err, const BackendFactory& factory) {
  CLI::App app{"Reflective-dialogue video QA harness", "refdial"};
  app.require_subcommand(1);

  std::string config_path;
  std::string strategy;
  std::optional<bool> timestamps;
  bool force = false;
  int concurrency = 0;
  app.add_option("--config", config_path, "Run configuration (JSON)")->required();
  app.add_option("--strategy", strategy, "zero-shot | icl | rd");
  app.add_flag("--timestamps,!--no-timestamps", timestamps, "Prefix frames with timestamps");
  app.add_flag("--force", force, "Rebuild dialogues that already exist");
  app.add_option("--concurrency", concurrency, "Parallel backend requests")->check(CLI::PositiveNumber);

  auto* classify = app.add_subcommand("classify", "Assign question types to support and test questions");
  auto* build = app.add_subcommand("build-dialogues", "Construct one reflective dialogue per (domain, type)");
  auto* infer = app.add_subcommand("infer", "Answer the test questions");
  auto* report = app.add_subcommand("report", "Score predictions and render the report");
  for (auto* sub : {classify, build, infer, report}) sub->fallthrough();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  return guarded(err, [&]() -> int {
    RunConfig cfg = load_run_config(config_path);
    if (!strategy.empty()) cfg.strategy.kind = parse_strategy_kind(strategy);
    if (timestamps) cfg.strategy.with_timestamps = *timestamps;
    if (force) cfg.force = true;
    if (concurrency > 0) cfg.concurrency = static_cast<std::size_t>(concurrency);

    if (report->parsed()) return cmd_report(cfg, out, err);
    if (classify->parsed()) {
      auto backend = factory(cfg.classifier);
      return cmd_classify(cfg, *backend, out, err);
    }
    auto backend = factory(cfg.solver);
    if (build->parsed()) return cmd_build_dialogues(cfg, *backend, out, err);
    return cmd_infer(cfg, *backend, out, err);
  });
}

}  // namespace refdial
