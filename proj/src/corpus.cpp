#include "refdial/corpus.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "refdial/error.hpp"
#include "refdial/util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace refdial {

namespace {

[[noreturn]] void schema_error(const std::string& field, const std::string& reason) {
  throw Error(ErrorCode::SchemaViolation, field + ": " + reason);
}

const json& require(const json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) schema_error(where + "." + key, "missing");
  return *it;
}

std::string require_string(const json& obj, const char* key, const std::string& where) {
  const json& v = require(obj, key, where);
  if (!v.is_string()) schema_error(where + "." + key, "expected a string");
  return v.get<std::string>();
}

FrameRef parse_frame(const json& j, const std::string& where) {
  if (!j.is_object()) schema_error(where, "expected an object");
  FrameRef f;
  f.uri = require_string(j, "uri", where);
  if (f.uri.empty()) schema_error(where + ".uri", "empty");
  const json& idx = require(j, "index", where);
  if (!idx.is_number_integer()) schema_error(where + ".index", "expected an integer");
  f.index = idx.get<std::int64_t>();
  if (f.index < 0) schema_error(where + ".index", "negative");
  if (auto it = j.find("timestamp_s"); it != j.end() && !it->is_null()) {
    if (!it->is_number()) schema_error(where + ".timestamp_s", "expected a number");
    f.timestamp_s = it->get<double>();
    if (!(*f.timestamp_s >= 0.0)) schema_error(where + ".timestamp_s", "negative");
  }
  return f;
}

Example parse_example(const json& j, const std::string& where) {
  if (!j.is_object()) schema_error(where, "expected an object");
  Example e;
  e.id = require_string(j, "id", where);
  if (e.id.empty()) schema_error(where + ".id", "empty");
  const std::string at = where + "[" + e.id + "]";
  e.domain = require_string(j, "domain", at);
  e.video_id = require_string(j, "video_id", at);
  e.question = require_string(j, "question", at);

  const json& frames = require(j, "frames", at);
  if (!frames.is_array() || frames.empty()) schema_error(at + ".frames", "expected a nonempty array");
  for (std::size_t i = 0; i < frames.size(); ++i) {
    FrameRef f = parse_frame(frames[i], at + ".frames[" + std::to_string(i) + "]");
    if (!e.frames.empty()) {
      const FrameRef& prev = e.frames.back();
      if (f.index <= prev.index) schema_error(at + ".frames", "indices must be strictly increasing");
      if (f.timestamp_s && prev.timestamp_s && *f.timestamp_s < *prev.timestamp_s) {
        schema_error(at + ".frames", "timestamps must be non-decreasing");
      }
    }
    e.frames.push_back(std::move(f));
  }

  const json& choices = require(j, "choices", at);
  if (!choices.is_object() || choices.size() != 4) schema_error(at + ".choices", "expected exactly the keys A, B, C, D");
  for (Choice c : kAllChoices) {
    auto it = choices.find(to_string(c));
    if (it == choices.end() || !it->is_string()) {
      schema_error(at + ".choices", "missing string choice " + to_string(c));
    }
    e.choices[index_of(c)] = it->get<std::string>();
  }

  if (auto it = j.find("answer"); it != j.end() && !it->is_null()) {
    if (!it->is_string()) schema_error(at + ".answer", "expected a string");
    auto c = parse_choice(it->get<std::string>());
    if (!c) schema_error(at + ".answer", "must be one of A, B, C, D");
    e.answer = *c;
  }
  if (auto it = j.find("question_type"); it != j.end() && !it->is_null()) {
    if (!it->is_string()) schema_error(at + ".question_type", "expected a string");
    e.question_type = it->get<std::string>();
  }
  return e;
}

ordered_json frame_to_json(const FrameRef& f) {
  ordered_json j;
  j["uri"] = f.uri;
  j["index"] = f.index;
  if (f.timestamp_s) j["timestamp_s"] = *f.timestamp_s;
  return j;
}

ordered_json example_to_json(const Example& e) {
  ordered_json j;
  j["id"] = e.id;
  j["domain"] = e.domain;
  j["video_id"] = e.video_id;
  ordered_json frames = ordered_json::array();
  for (const FrameRef& f : e.frames) frames.push_back(frame_to_json(f));
  j["frames"] = std::move(frames);
  j["question"] = e.question;
  ordered_json choices;
  for (Choice c : kAllChoices) choices[to_string(c)] = e.choice_text(c);
  j["choices"] = std::move(choices);
  if (e.answer) j["answer"] = to_string(*e.answer);
  if (e.question_type) j["question_type"] = *e.question_type;
  return j;
}

}  // namespace

std::optional<double> Corpus::fps_for(const std::string& video_id) const {
  if (auto it = fps.find(video_id); it != fps.end()) return it->second;
  return std::nullopt;
}

Corpus parse_manifest(const json& doc) {
  if (!doc.is_object()) schema_error("$", "expected an object");
  Corpus corpus;

  const json& domains = require(doc, "domains", "$");
  if (!domains.is_array() || domains.empty()) schema_error("$.domains", "expected a nonempty array");
  std::set<std::string> domain_set;
  for (const json& d : domains) {
    if (!d.is_string()) schema_error("$.domains", "expected strings");
    if (!domain_set.insert(d.get<std::string>()).second) schema_error("$.domains", "duplicate " + d.get<std::string>());
    corpus.domains.push_back(d.get<std::string>());
  }

  if (auto it = doc.find("fps"); it != doc.end() && !it->is_null()) {
    if (!it->is_object()) schema_error("$.fps", "expected an object");
    for (const auto& [video, rate] : it->items()) {
      if (!rate.is_number() || !(rate.get<double>() > 0.0)) schema_error("$.fps." + video, "expected a positive number");
      corpus.fps[video] = rate.get<double>();
    }
  }

  std::set<std::string> ids;
  auto parse_split = [&](const char* key, std::vector<Example>& out, bool need_answer) {
    const json& arr = require(doc, key, "$");
    if (!arr.is_array()) schema_error(std::string("$.") + key, "expected an array");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      Example e = parse_example(arr[i], std::string("$.") + key + "[" + std::to_string(i) + "]");
      if (!domain_set.contains(e.domain)) schema_error(e.id + ".domain", "unknown domain " + e.domain);
      if (!ids.insert(e.id).second) schema_error(e.id + ".id", "duplicate id");
      if (need_answer && !e.answer) throw Error(ErrorCode::MissingAnswerInSupport, e.id);
      out.push_back(std::move(e));
    }
  };
  parse_split("support", corpus.support, true);
  parse_split("test", corpus.test, false);
  return corpus;
}

Corpus load_manifest(const fs::path& path) {
  std::error_code ec;
  if (!fs::is_regular_file(path, ec)) throw Error(ErrorCode::ManifestNotFound, path.string());
  json doc;
  try {
    doc = json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::SchemaViolation, std::string("$: invalid JSON: ") + e.what());
  }
  return parse_manifest(doc);
}

ordered_json manifest_to_json(const Corpus& corpus) {
  ordered_json j;
  j["domains"] = corpus.domains;
  ordered_json fps = ordered_json::object();
  for (const auto& [video, rate] : corpus.fps) fps[video] = rate;
  j["fps"] = std::move(fps);
  for (const auto& [key, split] : {std::pair{"support", &corpus.support}, std::pair{"test", &corpus.test}}) {
    ordered_json arr = ordered_json::array();
    for (const Example& e : *split) arr.push_back(example_to_json(e));
    j[key] = std::move(arr);
  }
  return j;
}

void save_manifest(const Corpus& corpus, const fs::path& path) {
  write_text_file_atomic(path, manifest_to_json(corpus).dump(2) + "\n");
}

std::vector<FrameRef> sample_frames(std::span<const FrameRef> frames, std::size_t k) {
  if (frames.empty()) throw Error(ErrorCode::EmptyFrameList, "no frames to sample");
  if (k < 1) throw Error(ErrorCode::InvalidK, "k must be at least 1");
  const std::size_t n = frames.size();
  if (n <= k) return {frames.begin(), frames.end()};
  if (k == 1) return {frames[(n - 1) / 2]};

  std::vector<FrameRef> out;
  out.reserve(k);
  const std::size_t span = n - 1;
  const std::size_t steps = k - 1;
  for (std::size_t j = 0; j < k; ++j) {
    // round_half_up(j * span / steps) == floor((2 * j * span + steps) / (2 * steps))
    out.push_back(frames[(2 * j * span + steps) / (2 * steps)]);
  }
  return out;
}

std::vector<FrameRef> annotate_timestamps(std::span<const FrameRef> frames, double fps) {
  if (!(fps > 0.0) || !std::isfinite(fps)) throw Error(ErrorCode::InvalidFps, "fps must be positive, got " + std::to_string(fps));
  if (frames.empty()) throw Error(ErrorCode::EmptyFrameList, "no frames to annotate");
  std::vector<FrameRef> out(frames.begin(), frames.end());
  for (FrameRef& f : out) f.timestamp_s = static_cast<double>(f.index) / fps;
  return out;
}

std::string timestamp_prefix(double seconds) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "[Frame at %.1fs]", seconds);
  return buf;
}

}  // namespace refdial
