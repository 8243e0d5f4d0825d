#include "refdial/dialogue.hpp"

#include <algorithm>
#include <cctype>

#include "refdial/answer.hpp"
#include "refdial/error.hpp"
#include "refdial/util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace refdial {

namespace {

[[noreturn]] void corrupt(const std::string& why) { throw Error(ErrorCode::CorruptDialogue, why); }

std::string_view speaker_name(Speaker s) { return s == Speaker::Teacher ? "Teacher" : "Solver"; }

Speaker parse_speaker(const std::string& s) {
  if (s == "Teacher") return Speaker::Teacher;
  if (s == "Solver") return Speaker::Solver;
  corrupt("unknown speaker '" + s + "'");
}

ordered_json part_to_json(const ContentPart& p) {
  ordered_json j;
  if (const auto* t = std::get_if<TextPart>(&p)) {
    j["text"] = t->text;
  } else {
    const FrameRef& f = std::get<ImagePart>(p).frame;
    ordered_json frame;
    frame["uri"] = f.uri;
    frame["index"] = f.index;
    if (f.timestamp_s) frame["timestamp_s"] = *f.timestamp_s;
    j["frame"] = std::move(frame);
  }
  return j;
}

ContentPart part_from_json(const json& j) {
  if (auto t = j.find("text"); t != j.end()) return TextPart{t->get<std::string>()};
  if (auto f = j.find("frame"); f != j.end()) {
    FrameRef frame;
    frame.uri = f->at("uri").get<std::string>();
    frame.index = f->at("index").get<std::int64_t>();
    if (auto ts = f->find("timestamp_s"); ts != f->end() && !ts->is_null()) frame.timestamp_s = ts->get<double>();
    return ImagePart{std::move(frame)};
  }
  corrupt("content part has neither text nor frame");
}

}  // namespace

void validate(const ReflectiveDialogue& rd) {
  if (rd.turns.size() != 4 * rd.source_ids.size()) {
    corrupt("expected " + std::to_string(4 * rd.source_ids.size()) + " turns, found " + std::to_string(rd.turns.size()));
  }
  if (rd.solver_record.size() != rd.source_ids.size()) corrupt("solver_record does not match source_ids");
  for (std::size_t i = 0; i < rd.turns.size(); ++i) {
    const Speaker expected = i % 2 == 0 ? Speaker::Teacher : Speaker::Solver;
    if (rd.turns[i].speaker != expected) corrupt("turn " + std::to_string(i) + " breaks Teacher/Solver alternation");
    if (expected == Speaker::Solver &&
        std::any_of(rd.turns[i].parts.begin(), rd.turns[i].parts.end(),
                    [](const ContentPart& p) { return std::holds_alternative<ImagePart>(p); })) {
      corrupt("solver turn " + std::to_string(i) + " contains an image");
    }
  }
  for (std::size_t i = 0; i < rd.solver_record.size(); ++i) {
    const SolverRecord& r = rd.solver_record[i];
    if (r.id != rd.source_ids[i]) corrupt("solver_record[" + std::to_string(i) + "] id mismatch");
    if (r.was_correct != (r.predicted == r.correct)) corrupt("solver_record[" + std::to_string(i) + "] inconsistent was_correct");
  }
}

std::string feedback_message(Prediction predicted, Choice correct) {
  const std::string c = to_string(correct);
  if (predicted == correct) {
    return "Correct. In 1-2 sentences, what key visual evidence from the frames confirmed that " + c +
           " is the right answer?";
  }
  const std::string p = predicted ? to_string(*predicted) : std::string(kUnclearAnswer);
  return "You answered " + p + ", but the correct answer is " + c + ". (1) What specific visual evidence in the frames supports " +
         c + "? (2) Why does that evidence rule out " + p + "? Answer in 2-3 sentences.";
}

std::string feedback_message(std::string_view predicted, std::string_view correct) {
  return feedback_message(parse_choice(predicted), require_choice(correct));
}

ReflectiveDialogue build_dialogue(const std::string& domain, const std::string& qtype,
                                  std::span<const TypedExample> examples, ChatBackend& backend,
                                  const DialogueBuildOptions& options) {
  if (examples.empty()) throw Error(ErrorCode::EmptySupportSet, domain + " / " + qtype);
  for (const TypedExample& te : examples) {
    if (te.example.domain != domain || te.qtype != qtype) {
      throw Error(ErrorCode::ConfigError, te.example.id + " does not belong to " + domain + " / " + qtype);
    }
    if (!te.example.answer) throw Error(ErrorCode::InvalidLabel, te.example.id + " has no ground-truth answer");
  }

  ReflectiveDialogue rd;
  rd.domain = domain;
  rd.qtype = qtype;

  ChatRequest conversation;
  conversation.system = options.system_prompt;

  auto add_turn = [&](Speaker speaker, std::vector<ContentPart> parts) {
    conversation.messages.push_back({role_for(speaker), parts});
    rd.turns.push_back({speaker, std::move(parts)});
  };

  for (const TypedExample& te : examples) {
    const Example& ex = te.example;
    const Choice correct = *ex.answer;
    std::optional<double> fps;
    if (auto it = options.fps.find(ex.video_id); it != options.fps.end()) fps = it->second;

    add_turn(Speaker::Teacher, question_parts(ex, prepare_frames(ex, options.frames, fps)));
    const std::string answer = backend.complete(conversation).text;
    const Prediction predicted = extract_answer(answer);
    add_turn(Speaker::Solver, {TextPart{answer}});

    add_turn(Speaker::Teacher, {TextPart{feedback_message(predicted, correct)}});
    add_turn(Speaker::Solver, {TextPart{backend.complete(conversation).text}});

    rd.source_ids.push_back(ex.id);
    rd.solver_record.push_back({ex.id, predicted, correct, predicted == correct});
  }
  return rd;
}

std::vector<Message> to_messages(std::span<const Turn> turns) {
  std::vector<Message> out;
  out.reserve(turns.size());
  for (const Turn& t : turns) out.push_back({role_for(t.speaker), t.parts});
  return out;
}

ordered_json dialogue_to_json(const ReflectiveDialogue& rd) {
  ordered_json j;
  j["domain"] = rd.domain;
  j["qtype"] = rd.qtype;
  j["source_ids"] = rd.source_ids;
  ordered_json records = ordered_json::array();
  for (const SolverRecord& r : rd.solver_record) {
    ordered_json e;
    e["id"] = r.id;
    e["predicted"] = r.predicted ? ordered_json(to_string(*r.predicted)) : ordered_json(nullptr);
    e["correct"] = to_string(r.correct);
    e["was_correct"] = r.was_correct;
    records.push_back(std::move(e));
  }
  j["solver_record"] = std::move(records);
  ordered_json turns = ordered_json::array();
  for (const Turn& t : rd.turns) {
    ordered_json tj;
    tj["speaker"] = speaker_name(t.speaker);
    ordered_json parts = ordered_json::array();
    for (const ContentPart& p : t.parts) parts.push_back(part_to_json(p));
    tj["parts"] = std::move(parts);
    turns.push_back(std::move(tj));
  }
  j["turns"] = std::move(turns);
  return j;
}

ReflectiveDialogue dialogue_from_json(const json& j) {
  ReflectiveDialogue rd;
  try {
    rd.domain = j.at("domain").get<std::string>();
    rd.qtype = j.at("qtype").get<std::string>();
    rd.source_ids = j.at("source_ids").get<std::vector<std::string>>();
    for (const json& e : j.at("solver_record")) {
      SolverRecord r;
      r.id = e.at("id").get<std::string>();
      const json& p = e.at("predicted");
      if (!p.is_null()) {
        r.predicted = parse_choice(p.get<std::string>());
        if (!r.predicted) corrupt("invalid predicted label for " + r.id);
      }
      auto c = parse_choice(e.at("correct").get<std::string>());
      if (!c) corrupt("invalid correct label for " + r.id);
      r.correct = *c;
      r.was_correct = e.at("was_correct").get<bool>();
      rd.solver_record.push_back(std::move(r));
    }
    for (const json& t : j.at("turns")) {
      Turn turn;
      turn.speaker = parse_speaker(t.at("speaker").get<std::string>());
      for (const json& p : t.at("parts")) turn.parts.push_back(part_from_json(p));
      rd.turns.push_back(std::move(turn));
    }
  } catch (const json::exception& e) {
    corrupt(e.what());
  }
  validate(rd);
  return rd;
}

std::string serialize_dialogue(const ReflectiveDialogue& rd) { return dialogue_to_json(rd).dump(2) + "\n"; }

std::string slugify(std::string_view s) {
  std::string out;
  bool dash = false;
  for (char c : s) {
    const auto u = static_cast<unsigned char>(c);
    if (std::isalnum(u)) {
      if (dash && !out.empty()) out.push_back('-');
      dash = false;
      out.push_back(static_cast<char>(std::tolower(u)));
    } else {
      dash = true;
    }
  }
  return out.empty() ? std::string("untitled") : out;
}

std::string dialogue_filename(const std::string& domain, const std::string& qtype) {
  return slugify(domain) + "__" + slugify(qtype) + ".json";
}

fs::path store_dialogue(const ReflectiveDialogue& rd, const fs::path& dir) {
  validate(rd);
  const fs::path path = dir / dialogue_filename(rd.domain, rd.qtype);
  write_text_file_atomic(path, serialize_dialogue(rd));
  return path;
}

ReflectiveDialogue load_dialogue(const fs::path& dir, const std::string& domain, const std::string& qtype) {
  const fs::path path = dir / dialogue_filename(domain, qtype);
  std::error_code ec;
  if (!fs::is_regular_file(path, ec)) throw Error(ErrorCode::DialogueNotFound, domain + " / " + qtype);
  json doc;
  try {
    doc = json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    corrupt(path.string() + ": " + e.what());
  }
  ReflectiveDialogue rd = dialogue_from_json(doc);
  if (rd.domain != domain || rd.qtype != qtype) {
    corrupt(path.string() + " holds " + rd.domain + " / " + rd.qtype);
  }
  return rd;
}

bool DialogueStore::contains(const std::string& domain, const std::string& qtype) const {
  std::error_code ec;
  return fs::is_regular_file(dir_ / dialogue_filename(domain, qtype), ec);
}

ReflectiveDialogue DialogueStore::load(const std::string& domain, const std::string& qtype) const {
  return load_dialogue(dir_, domain, qtype);
}

std::vector<ReflectiveDialogue> DialogueStore::load_domain(const std::string& domain) const {
  const std::string prefix = slugify(domain) + "__";
  std::vector<fs::path> files;
  std::error_code ec;
  for (const auto& entry : fs::directory_iterator(dir_, ec)) {
    const std::string name = entry.path().filename().string();
    if (entry.is_regular_file() && name.starts_with(prefix) && entry.path().extension() == ".json") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  std::vector<ReflectiveDialogue> out;
  for (const fs::path& f : files) {
    ReflectiveDialogue rd;
    try {
      rd = dialogue_from_json(json::parse(read_text_file(f)));
    } catch (const json::parse_error& e) {
      corrupt(f.string() + ": " + e.what());
    }
    if (rd.domain == domain) out.push_back(std::move(rd));
  }
  return out;
}

}  // namespace refdial
