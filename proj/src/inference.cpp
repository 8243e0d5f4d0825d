#include "refdial/inference.hpp"

#include <sstream>

#include "refdial/error.hpp"
#include "refdial/util.hpp"

using nlohmann::json;
using nlohmann::ordered_json;

namespace refdial {

std::string_view to_string(StrategyKind kind) noexcept {
  switch (kind) {
    case StrategyKind::ZeroShot: return "zero-shot";
    case StrategyKind::Icl: return "icl";
    case StrategyKind::Rd: return "rd";
  }
  return "unknown";
}

StrategyKind parse_strategy_kind(std::string_view s) {
  if (s == "zero-shot" || s == "zeroshot" || s == "zero_shot") return StrategyKind::ZeroShot;
  if (s == "icl") return StrategyKind::Icl;
  if (s == "rd") return StrategyKind::Rd;
  throw Error(ErrorCode::ConfigError, "unknown strategy '" + std::string(s) + "' (expected zero-shot, icl or rd)");
}

std::string default_domain_prompt(const std::string& domain) {
  static const std::map<std::string, std::string> kSubjects = {
      {"surgery", "surgical procedures"},
      {"industry", "industrial assembly and maintenance tasks"},
      {"xsports", "extreme sports"},
      {"animal", "animal behavior"},
  };
  auto it = kSubjects.find(domain);
  const std::string subject = it != kSubjects.end() ? it->second : domain + " activities";
  return "You are an expert analyzing egocentric video frames from " + subject + ".";
}

std::map<std::string, std::string> default_system_prompts(std::span<const std::string> domains) {
  std::map<std::string, std::string> out;
  for (const std::string& d : domains) out[d] = default_domain_prompt(d);
  return out;
}

std::string system_prompt_for(const std::string& domain, const std::map<std::string, std::string>& prompts) {
  auto it = prompts.find(domain);
  if (it == prompts.end()) throw Error(ErrorCode::MissingSystemPrompt, domain);
  return it->second + "\n" + std::string(kAnswerInstruction);
}

namespace {

std::optional<double> fps_of(const InferenceContext& ctx, const Example& e) {
  if (auto it = ctx.fps.find(e.video_id); it != ctx.fps.end()) return it->second;
  return std::nullopt;
}

// Prefix messages for RD, or nullopt when the question falls back to zero-shot.
std::optional<std::vector<Message>> dialogue_context(const Example& example, const InferenceContext& ctx,
                                                     std::string& note) {
  if (!ctx.dialogues) throw Error(ErrorCode::ConfigError, "RD inference needs a dialogue store");
  if (!example.question_type) {
    note = "no question type; answered zero-shot";
    return std::nullopt;
  }
  try {
    return to_messages(ctx.dialogues->load(example.domain, *example.question_type).turns);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::DialogueNotFound) throw;
  }
  if (ctx.fallback == MissingDialogueFallback::DomainLevel) {
    std::vector<Message> merged;
    for (const ReflectiveDialogue& rd : ctx.dialogues->load_domain(example.domain)) {
      auto msgs = to_messages(rd.turns);
      merged.insert(merged.end(), std::make_move_iterator(msgs.begin()), std::make_move_iterator(msgs.end()));
    }
    if (!merged.empty()) {
      note = "no dialogue for " + example.domain + " / " + *example.question_type + "; used domain-level dialogue";
      return merged;
    }
  }
  note = "no dialogue for " + example.domain + " / " + *example.question_type + "; answered zero-shot";
  return std::nullopt;
}

}  // namespace

AssembledRequest assemble_context(const Example& example, const InferenceContext& ctx) {
  AssembledRequest out;
  ChatRequest& req = out.request;
  req.system = system_prompt_for(example.domain, ctx.system_prompts);
  const FramePolicy policy = ctx.strategy.frame_policy();

  std::vector<ContentPart> final_parts;
  switch (ctx.strategy.kind) {
    case StrategyKind::ZeroShot:
      break;
    case StrategyKind::Icl:
      for (const TypedExample& s : ctx.support) {
        if (s.example.domain != example.domain) continue;
        if (!s.example.answer) throw Error(ErrorCode::InvalidLabel, s.example.id + " has no ground-truth answer");
        req.messages.push_back({Role::User, question_parts(s.example, prepare_frames(s.example, policy, fps_of(ctx, s.example)))});
        req.messages.push_back({Role::Assistant, {TextPart{"Final Answer: " + to_string(*s.example.answer)}}});
      }
      break;
    case StrategyKind::Rd:
      if (auto context = dialogue_context(example, ctx, out.note)) {
        req.messages = std::move(*context);
        if (ctx.strategy.separator_enabled) final_parts.emplace_back(TextPart{std::string(kSeparator)});
      }
      break;
  }

  out.context_fingerprint = context_fingerprint(req.messages);
  out.context_tokens = estimate_tokens(std::span<const Message>(req.messages), ctx.image_tokens);

  auto question = question_parts(example, prepare_frames(example, policy, fps_of(ctx, example)));
  final_parts.insert(final_parts.end(), std::make_move_iterator(question.begin()), std::make_move_iterator(question.end()));
  req.messages.push_back({Role::User, std::move(final_parts)});
  return out;
}

std::vector<PredictionRecord> run_inference(std::span<const Example> test, const InferenceContext& ctx,
                                            ChatBackend& backend, std::size_t concurrency) {
  if (ctx.strategy.frame_budget < 1) throw Error(ErrorCode::ConfigError, "frame_budget must be >= 1");
  if (ctx.strategy.kind == StrategyKind::Rd && !ctx.dialogues) {
    throw Error(ErrorCode::ConfigError, "RD inference needs a dialogue store");
  }

  std::vector<PredictionRecord> records(test.size());
  parallel_for(test.size(), concurrency, [&](std::size_t i) {
    const Example& ex = test[i];
    PredictionRecord& r = records[i];
    r.example_id = ex.id;
    r.domain = ex.domain;
    r.qtype = ex.question_type;
    r.strategy = ctx.strategy.kind;
    try {
      AssembledRequest assembled = assemble_context(ex, ctx);
      r.context_fingerprint = std::move(assembled.context_fingerprint);
      r.context_tokens = assembled.context_tokens;
      r.note = std::move(assembled.note);
      Completion c = backend.complete(assembled.request);
      r.predicted = extract_answer(c.text);
      r.raw_text = std::move(c.text);
      r.usage = c.usage;
    } catch (const std::exception& e) {
      r.predicted = std::nullopt;
      r.usage = Usage{};
      r.note = r.note.empty() ? std::string("error: ") + e.what() : r.note + "; error: " + e.what();
    }
  });
  return records;
}

ordered_json record_to_json(const PredictionRecord& r) {
  ordered_json j;
  j["example_id"] = r.example_id;
  j["domain"] = r.domain;
  j["qtype"] = r.qtype ? ordered_json(*r.qtype) : ordered_json(nullptr);
  j["strategy"] = to_string(r.strategy);
  j["predicted"] = r.predicted ? ordered_json(to_string(*r.predicted)) : ordered_json(nullptr);
  j["raw_text"] = r.raw_text;
  if (r.usage) {
    ordered_json u;
    u["input_tokens"] = r.usage->input_tokens;
    u["output_tokens"] = r.usage->output_tokens;
    u["cached_input_tokens"] = r.usage->cached_input_tokens;
    j["usage"] = std::move(u);
  } else {
    j["usage"] = nullptr;
  }
  j["context_fingerprint"] = r.context_fingerprint;
  j["context_tokens"] = r.context_tokens;
  j["note"] = r.note;
  return j;
}

PredictionRecord record_from_json(const json& j) {
  try {
    PredictionRecord r;
    r.example_id = j.at("example_id").get<std::string>();
    r.domain = j.at("domain").get<std::string>();
    if (auto q = j.find("qtype"); q != j.end() && !q->is_null()) r.qtype = q->get<std::string>();
    r.strategy = parse_strategy_kind(j.at("strategy").get<std::string>());
    if (auto p = j.find("predicted"); p != j.end() && !p->is_null()) {
      r.predicted = parse_choice(p->get<std::string>());
      if (!r.predicted) throw Error(ErrorCode::ConfigError, "record " + r.example_id + ": invalid predicted label");
    }
    r.raw_text = j.value("raw_text", "");
    if (auto u = j.find("usage"); u != j.end() && u->is_object()) {
      r.usage = make_usage(u->value("input_tokens", std::int64_t{0}), u->value("output_tokens", std::int64_t{0}),
                           u->value("cached_input_tokens", std::int64_t{0}));
    }
    r.context_fingerprint = j.value("context_fingerprint", "");
    r.context_tokens = j.value("context_tokens", std::int64_t{0});
    r.note = j.value("note", "");
    return r;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigError, std::string("prediction record: ") + e.what());
  }
}

std::string records_to_jsonl(std::span<const PredictionRecord> records) {
  std::string out;
  for (const PredictionRecord& r : records) {
    out += record_to_json(r).dump();
    out += '\n';
  }
  return out;
}

std::vector<PredictionRecord> records_from_jsonl(std::string_view text) {
  std::vector<PredictionRecord> out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(record_from_json(json::parse(line)));
    } catch (const json::parse_error& e) {
      throw Error(ErrorCode::ConfigError, "results line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace refdial
