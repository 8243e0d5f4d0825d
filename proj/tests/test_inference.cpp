#include "refdial/inference.hpp"

#include <gtest/gtest.h>

#include <random>
#include <set>

#include "golden.hpp"
#include "refdial/error.hpp"
#include "refdial/prompt.hpp"
#include "test_support.hpp"

using namespace refdial;
using namespace refdial::testing;

namespace {

std::string text_of(const ContentPart& p) { return std::get<TextPart>(p).text; }

// Replies with the answer letter embedded in the question id ("t-B-3" -> B) and
// fails for ids containing "fail".
class EchoBackend : public ChatBackend {
 public:
  Completion complete(const ChatRequest& request) override {
    validate_request(request);
    const std::string q = text_of(request.messages.back().parts.back());
    if (q.find("fail") != std::string::npos) throw Error(ErrorCode::RetriesExhausted, "HTTP 503: busy", 503);
    const auto dash = q.find('-');
    return {"Final Answer: " + q.substr(dash + 1, 1), make_usage(estimate_tokens(request), 3)};
  }
};

struct Fixture {
  TempDir dir;
  DialogueStore store{dir.path()};
  InferenceContext ctx;

  Fixture() {
    ScriptedBackend backend(FifoScript{golden_script()});
    const auto support = golden_support();
    store_dialogue(build_dialogue("surgery", "Counting", support, backend, {}), dir.path());
    ScriptedBackend other(FifoScript{{"Final Answer: B", "ok"}});
    const std::vector<TypedExample> tools = {{make_example("s3", "surgery", Choice::B), "Tool Use"}};
    store_dialogue(build_dialogue("surgery", "Tool Use", tools, other, {}), dir.path());

    ctx.dialogues = &store;
    ctx.system_prompts = default_system_prompts(std::vector<std::string>{"surgery", "animal"});
    for (auto& s : golden_support()) ctx.support.push_back(s);
    ctx.support.push_back({make_example("a1", "animal", Choice::D), "Feeding"});
  }
};

}  // namespace

TEST(SystemPrompt, DefaultsAndMissing) {
  EXPECT_EQ(default_domain_prompt("surgery"), "You are an expert analyzing egocentric video frames from surgical procedures.");
  EXPECT_EQ(default_domain_prompt("kitchen"), "You are an expert analyzing egocentric video frames from kitchen activities.");
  const auto prompts = default_system_prompts(std::vector<std::string>{"animal"});
  EXPECT_EQ(system_prompt_for("animal", prompts),
            "You are an expert analyzing egocentric video frames from animal behavior.\n" + std::string(kAnswerInstruction));
  try {
    system_prompt_for("surgery", prompts);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingSystemPrompt);
  }
}

TEST(StrategyKind, Names) {
  for (StrategyKind k : {StrategyKind::ZeroShot, StrategyKind::Icl, StrategyKind::Rd}) {
    EXPECT_EQ(parse_strategy_kind(to_string(k)), k);
  }
  EXPECT_THROW(parse_strategy_kind("cot"), Error);
}

TEST(AssembleContext, ZeroShotIsOneMessage) {
  Fixture f;
  f.ctx.strategy.kind = StrategyKind::ZeroShot;
  const Example e = make_example("t1", "surgery", Choice::A, "Counting", 4);
  const AssembledRequest a = assemble_context(e, f.ctx);
  ASSERT_EQ(a.request.messages.size(), 1u);
  const auto& parts = a.request.messages[0].parts;
  ASSERT_EQ(parts.size(), 5u);
  EXPECT_EQ(text_of(parts.back()), question_text(e));
  EXPECT_EQ(a.request.system, system_prompt_for("surgery", f.ctx.system_prompts));
  EXPECT_EQ(a.context_tokens, 0);
  EXPECT_EQ(a.context_fingerprint, context_fingerprint(std::span<const Message>{}));
}

TEST(AssembleContext, RdPrependsDialogueAndSeparator) {
  Fixture f;
  const Example e = make_example("t1", "surgery", Choice::A, "Counting", 2);
  const AssembledRequest a = assemble_context(e, f.ctx);
  ASSERT_EQ(a.request.messages.size(), 9u);
  const auto turns = golden_turns();
  const auto dialogue = to_messages(turns);
  EXPECT_TRUE(std::equal(dialogue.begin(), dialogue.end(), a.request.messages.begin()));
  const Message& last = a.request.messages.back();
  EXPECT_EQ(last.role, Role::User);
  EXPECT_EQ(text_of(last.parts.front()), "Warm-up complete. Now answer the following question");
  EXPECT_EQ(text_of(last.parts.back()), question_text(e));
  EXPECT_EQ(a.context_fingerprint, context_fingerprint(dialogue));
  EXPECT_EQ(a.context_tokens, estimate_tokens(std::span<const Message>(dialogue)));
  EXPECT_TRUE(a.note.empty());
  EXPECT_NO_THROW(validate_request(a.request));

  f.ctx.strategy.separator_enabled = false;
  const AssembledRequest plain = assemble_context(e, f.ctx);
  EXPECT_TRUE(std::holds_alternative<ImagePart>(plain.request.messages.back().parts.front()));
}

TEST(AssembleContext, RdFallbacks) {
  Fixture f;
  const Example e = make_example("t1", "surgery", Choice::A, "Unseen Type");
  const AssembledRequest zs = assemble_context(e, f.ctx);
  EXPECT_EQ(zs.request.messages.size(), 1u);
  EXPECT_NE(zs.note.find("answered zero-shot"), std::string::npos);

  f.ctx.fallback = MissingDialogueFallback::DomainLevel;
  const AssembledRequest merged = assemble_context(e, f.ctx);
  EXPECT_EQ(merged.request.messages.size(), 8u + 4u + 1u);
  EXPECT_NE(merged.note.find("domain-level"), std::string::npos);

  Example untyped = make_example("t2", "surgery", Choice::A);
  EXPECT_EQ(assemble_context(untyped, f.ctx).request.messages.size(), 1u);
}

TEST(AssembleContext, IclAlternatesWithGroundTruth) {
  Fixture f;
  f.ctx.strategy.kind = StrategyKind::Icl;
  const AssembledRequest a = assemble_context(make_example("t1", "surgery", Choice::A, "Counting"), f.ctx);
  ASSERT_EQ(a.request.messages.size(), 5u);
  const std::vector<Role> roles = {Role::User, Role::Assistant, Role::User, Role::Assistant, Role::User};
  for (std::size_t i = 0; i < roles.size(); ++i) EXPECT_EQ(a.request.messages[i].role, roles[i]);
  EXPECT_EQ(text_of(a.request.messages[1].parts[0]), "Final Answer: A");
  EXPECT_EQ(text_of(a.request.messages[3].parts[0]), "Final Answer: C");
  EXPECT_EQ(assemble_context(make_example("t2", "animal", Choice::A), f.ctx).request.messages.size(), 3u);
}

TEST(AssembleContext, FingerprintsGroupByDomainAndType) {
  Fixture f;
  std::set<std::string> counting, tools;
  for (int i = 0; i < 5; ++i) {
    counting.insert(assemble_context(make_example("c" + std::to_string(i), "surgery", Choice::A, "Counting", 1 + i), f.ctx)
                        .context_fingerprint);
    tools.insert(assemble_context(make_example("u" + std::to_string(i), "surgery", Choice::A, "Tool Use", 1 + i), f.ctx)
                     .context_fingerprint);
  }
  EXPECT_EQ(counting.size(), 1u);
  EXPECT_EQ(tools.size(), 1u);
  EXPECT_NE(*counting.begin(), *tools.begin());

  f.ctx.strategy.kind = StrategyKind::Icl;
  const auto icl = assemble_context(make_example("c0", "surgery", Choice::A, "Counting"), f.ctx).context_fingerprint;
  EXPECT_NE(icl, *counting.begin());
}

TEST(RunInference, OrderPreservedAcrossConcurrency) {
  Fixture f;
  std::vector<Example> test;
  std::mt19937 rng(9);
  for (int i = 0; i < 40; ++i) {
    const char letter = static_cast<char>('A' + rng() % 4);
    Example e = make_example(std::string("t-") + letter + "-" + std::to_string(i), "surgery", std::nullopt,
                             i % 2 ? "Counting" : "Tool Use");
    test.push_back(e);
  }
  EchoBackend backend;
  const auto serial = run_inference(test, f.ctx, backend, 1);
  const auto parallel = run_inference(test, f.ctx, backend, 8);
  EXPECT_EQ(serial, parallel);
  ASSERT_EQ(serial.size(), test.size());
  for (std::size_t i = 0; i < test.size(); ++i) {
    EXPECT_EQ(serial[i].example_id, test[i].id);
    EXPECT_EQ(serial[i].predicted, parse_choice(std::string(1, test[i].id[2])));
    EXPECT_EQ(serial[i].strategy, StrategyKind::Rd);
    EXPECT_EQ(serial[i].usage->output_tokens, 3);
  }
  EXPECT_EQ(records_to_jsonl(serial), records_to_jsonl(parallel));
}

TEST(RunInference, EmptyInput) {
  Fixture f;
  EchoBackend backend;
  EXPECT_TRUE(run_inference({}, f.ctx, backend, 4).empty());
}

TEST(RunInference, FailedItemBecomesUnparsed) {
  Fixture f;
  f.ctx.strategy.kind = StrategyKind::ZeroShot;
  const std::vector<Example> test = {make_example("t-A-1", "surgery", std::nullopt),
                                     make_example("t-fail-2", "surgery", std::nullopt),
                                     make_example("t-C-3", "surgery", std::nullopt)};
  EchoBackend backend;
  const auto records = run_inference(test, f.ctx, backend, 2);
  ASSERT_EQ(records.size(), 3u);
  EXPECT_EQ(records[0].predicted, Choice::A);
  EXPECT_FALSE(records[1].predicted.has_value());
  EXPECT_EQ(records[1].usage, Usage{});
  EXPECT_NE(records[1].note.find("HTTP 503: busy"), std::string::npos);
  EXPECT_EQ(records[2].predicted, Choice::C);
}

TEST(RunInference, RdNeedsStore) {
  InferenceContext ctx;
  EchoBackend backend;
  const std::vector<Example> test = {make_example("t-A-1", "surgery", std::nullopt)};
  EXPECT_THROW(run_inference(test, ctx, backend, 1), Error);
}

TEST(Records, JsonRoundTrip) {
  PredictionRecord r;
  r.example_id = "x";
  r.domain = "animal";
  r.qtype = "Feeding";
  r.strategy = StrategyKind::Icl;
  r.predicted = Choice::D;
  r.raw_text = "line1\nFinal Answer: D";
  r.usage = Usage{10, 2, 1};
  r.context_fingerprint = "abc";
  r.context_tokens = 7;
  PredictionRecord unparsed;
  unparsed.example_id = "y";
  unparsed.domain = "animal";
  unparsed.note = "error: boom";
  const std::vector<PredictionRecord> records = {r, unparsed};
  const std::string jsonl = records_to_jsonl(records);
  EXPECT_EQ(std::count(jsonl.begin(), jsonl.end(), '\n'), 2);
  EXPECT_TRUE(jsonl.starts_with(R"({"example_id":"x","domain":"animal","qtype":"Feeding","strategy":"icl","predicted":"D")"));
  EXPECT_EQ(records_from_jsonl(jsonl), records);
}
