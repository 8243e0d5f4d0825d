#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "refdial/choice.hpp"

namespace refdial {

// A pre-extracted video frame. `index` is the frame ordinal within the source video.
struct FrameRef {
  std::string uri;
  std::int64_t index = 0;
  std::optional<double> timestamp_s;

  bool operator==(const FrameRef&) const = default;
};

// One multiple-choice video question.
struct Example {
  std::string id;
  std::string domain;
  std::string video_id;
  std::vector<FrameRef> frames;
  std::string question;
  std::array<std::string, 4> choices;
  std::optional<Choice> answer;
  std::optional<std::string> question_type;

  const std::string& choice_text(Choice c) const { return choices[index_of(c)]; }
  bool operator==(const Example&) const = default;
};

struct Corpus {
  std::vector<std::string> domains;
  std::map<std::string, double> fps;  // video_id -> frames per second
  std::vector<Example> support;
  std::vector<Example> test;

  std::optional<double> fps_for(const std::string& video_id) const;
  bool operator==(const Corpus&) const = default;
};

// Reads and validates a manifest. Throws Error with ManifestNotFound, SchemaViolation
// or MissingAnswerInSupport.
Corpus load_manifest(const std::filesystem::path& path);
Corpus parse_manifest(const nlohmann::json& doc);

// Inverse of parse_manifest; keys are written in a fixed order.
nlohmann::ordered_json manifest_to_json(const Corpus& corpus);
void save_manifest(const Corpus& corpus, const std::filesystem::path& path);

// Uniform subsampling to at most k frames.
//
// For N = frames.size() > k the j-th output is the input at position
// round_half_up(j * (N - 1) / (k - 1)); k == 1 picks floor((N - 1) / 2).
// Throws EmptyFrameList / InvalidK.
std::vector<FrameRef> sample_frames(std::span<const FrameRef> frames, std::size_t k);

// Sets timestamp_s = index / fps on every frame. Throws InvalidFps when fps <= 0.
std::vector<FrameRef> annotate_timestamps(std::span<const FrameRef> frames, double fps);

// "[Frame at 1.5s]"
std::string timestamp_prefix(double seconds);

}  // namespace refdial
