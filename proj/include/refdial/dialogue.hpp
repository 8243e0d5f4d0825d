#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "refdial/backend.hpp"
#include "refdial/prompt.hpp"
#include "refdial/taxonomy.hpp"

namespace refdial {

enum class Speaker { Teacher, Solver };

constexpr Role role_for(Speaker s) noexcept { return s == Speaker::Teacher ? Role::User : Role::Assistant; }
constexpr Speaker speaker_for(Role r) noexcept { return r == Role::User ? Speaker::Teacher : Speaker::Solver; }

struct Turn {
  Speaker speaker = Speaker::Teacher;
  std::vector<ContentPart> parts;
  bool operator==(const Turn&) const = default;
};

struct SolverRecord {
  std::string id;
  Prediction predicted;
  Choice correct = Choice::A;
  bool was_correct = false;
  bool operator==(const SolverRecord&) const = default;
};

// Teacher/Solver conversation for one (domain, question type): four turns per
// support example (question, answer, feedback, reflection).
struct ReflectiveDialogue {
  std::string domain;
  std::string qtype;
  std::vector<Turn> turns;
  std::vector<std::string> source_ids;
  std::vector<SolverRecord> solver_record;
  bool operator==(const ReflectiveDialogue&) const = default;
};

// Structural invariants: 4 turns per source, Teacher/Solver alternation, text-only
// solver turns, one solver record per source. Throws Error(CorruptDialogue).
void validate(const ReflectiveDialogue& rd);

// Placeholder used in feedback when the solver's answer could not be parsed.
inline constexpr std::string_view kUnclearAnswer = "an unclear answer";

std::string feedback_message(Prediction predicted, Choice correct);
// String form; `correct` must be A-D (Error(InvalidLabel) otherwise). Any predicted
// value other than A-D is treated as unparsed.
std::string feedback_message(std::string_view predicted, std::string_view correct);

struct DialogueBuildOptions {
  FramePolicy frames;
  std::optional<std::string> system_prompt;
  std::map<std::string, double> fps;  // video_id -> fps, used with timestamps
};

// Runs the four-turn protocol over `examples` in order, carrying the whole
// conversation forward. Throws EmptySupportSet, InvalidLabel (missing answers or
// mismatched domain/type) and backend errors.
ReflectiveDialogue build_dialogue(const std::string& domain, const std::string& qtype,
                                  std::span<const TypedExample> examples, ChatBackend& backend,
                                  const DialogueBuildOptions& options);

// Teacher -> user, Solver -> assistant.
std::vector<Message> to_messages(std::span<const Turn> turns);

nlohmann::ordered_json dialogue_to_json(const ReflectiveDialogue& rd);
ReflectiveDialogue dialogue_from_json(const nlohmann::json& j);
std::string serialize_dialogue(const ReflectiveDialogue& rd);

std::string slugify(std::string_view s);
// "{domain}__{qtype-slug}.json"
std::string dialogue_filename(const std::string& domain, const std::string& qtype);

std::filesystem::path store_dialogue(const ReflectiveDialogue& rd, const std::filesystem::path& dir);
// Throws DialogueNotFound or CorruptDialogue.
ReflectiveDialogue load_dialogue(const std::filesystem::path& dir, const std::string& domain, const std::string& qtype);

// Read-only view of a dialogue directory.
class DialogueStore {
 public:
  explicit DialogueStore(std::filesystem::path dir) : dir_(std::move(dir)) {}

  const std::filesystem::path& dir() const noexcept { return dir_; }
  bool contains(const std::string& domain, const std::string& qtype) const;
  ReflectiveDialogue load(const std::string& domain, const std::string& qtype) const;
  // All dialogues of a domain, sorted by file name.
  std::vector<ReflectiveDialogue> load_domain(const std::string& domain) const;

 private:
  std::filesystem::path dir_;
};

}  // namespace refdial
