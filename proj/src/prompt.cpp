#include "refdial/prompt.hpp"

#include <algorithm>

#include "refdial/error.hpp"

namespace refdial {

std::string render_choices(const std::array<std::string, 4>& choices) {
  std::string out;
  for (Choice c : kAllChoices) {
    if (c != Choice::A) out += "  ";
    out += to_char(c);
    out += ": ";
    out += choices[index_of(c)];
  }
  return out;
}

std::vector<FrameRef> prepare_frames(const Example& example, const FramePolicy& policy, std::optional<double> fps) {
  std::vector<FrameRef> frames = sample_frames(example.frames, policy.frame_budget);
  if (!policy.with_timestamps) {
    for (FrameRef& f : frames) f.timestamp_s.reset();
  } else if (fps) {
    frames = annotate_timestamps(frames, *fps);
  } else if (!std::all_of(frames.begin(), frames.end(), [](const FrameRef& f) { return f.timestamp_s.has_value(); })) {
    throw Error(ErrorCode::InvalidFps, "no fps known for video " + example.video_id);
  }
  return frames;
}

std::string question_text(const Example& example) {
  return example.question + "\n" + render_choices(example.choices);
}

std::vector<ContentPart> question_parts(const Example& example, std::span<const FrameRef> frames) {
  std::vector<ContentPart> parts;
  parts.reserve(frames.size() * 2 + 1);
  for (const FrameRef& f : frames) {
    if (f.timestamp_s) parts.emplace_back(TextPart{timestamp_prefix(*f.timestamp_s)});
    parts.emplace_back(ImagePart{f});
  }
  parts.emplace_back(TextPart{question_text(example)});
  return parts;
}

}  // namespace refdial
