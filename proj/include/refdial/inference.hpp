#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "refdial/answer.hpp"
#include "refdial/backend.hpp"
#include "refdial/dialogue.hpp"
#include "refdial/prompt.hpp"
#include "refdial/taxonomy.hpp"

namespace refdial {

enum class StrategyKind { ZeroShot, Icl, Rd };

std::string_view to_string(StrategyKind kind) noexcept;  // "zero-shot" | "icl" | "rd"
StrategyKind parse_strategy_kind(std::string_view s);    // Error(ConfigError) on unknown

struct Strategy {
  StrategyKind kind = StrategyKind::Rd;
  bool with_timestamps = false;
  std::size_t frame_budget = 5;
  bool separator_enabled = true;

  FramePolicy frame_policy() const { return {frame_budget, with_timestamps}; }
};

// What RD does when no dialogue exists for a test question's (domain, type).
enum class MissingDialogueFallback { ZeroShot, DomainLevel };

inline constexpr std::string_view kSeparator = "Warm-up complete. Now answer the following question";
inline constexpr std::string_view kAnswerInstruction =
    "Answer the multiple-choice question and end your response with \"Final Answer: X\", "
    "where X is A, B, C, or D.";

// Expert-perspective prompt for a domain; known EgoCross domains get a descriptive
// noun phrase, other domains use the label itself.
std::string default_domain_prompt(const std::string& domain);
std::map<std::string, std::string> default_system_prompts(std::span<const std::string> domains);
// Domain prompt followed by kAnswerInstruction. Throws Error(MissingSystemPrompt).
std::string system_prompt_for(const std::string& domain, const std::map<std::string, std::string>& prompts);

struct InferenceContext {
  Strategy strategy;
  const DialogueStore* dialogues = nullptr;  // required for RD
  std::vector<TypedExample> support;         // used by ICL
  std::map<std::string, std::string> system_prompts;
  std::map<std::string, double> fps;
  MissingDialogueFallback fallback = MissingDialogueFallback::ZeroShot;
  int image_tokens = kDefaultImageTokens;
};

struct AssembledRequest {
  ChatRequest request;
  std::string context_fingerprint;  // over every message before the final one
  std::int64_t context_tokens = 0;
  std::string note;  // non-empty when a fallback was taken
};

// Builds the request for one test question. RD uses example.question_type.
AssembledRequest assemble_context(const Example& example, const InferenceContext& ctx);

struct PredictionRecord {
  std::string example_id;
  std::string domain;
  std::optional<std::string> qtype;
  StrategyKind strategy = StrategyKind::ZeroShot;
  Prediction predicted;
  std::string raw_text;
  std::optional<Usage> usage;
  std::string context_fingerprint;
  std::int64_t context_tokens = 0;
  std::string note;

  bool operator==(const PredictionRecord&) const = default;
};

// Each test question is sent as its own fresh request; records come back in input
// order for any concurrency. Per-item failures become unparsed records with a note.
std::vector<PredictionRecord> run_inference(std::span<const Example> test, const InferenceContext& ctx,
                                            ChatBackend& backend, std::size_t concurrency = 1);

nlohmann::ordered_json record_to_json(const PredictionRecord& r);
PredictionRecord record_from_json(const nlohmann::json& j);
std::string records_to_jsonl(std::span<const PredictionRecord> records);
std::vector<PredictionRecord> records_from_jsonl(std::string_view text);

}  // namespace refdial
