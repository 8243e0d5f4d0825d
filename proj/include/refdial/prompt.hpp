#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "refdial/backend.hpp"
#include "refdial/corpus.hpp"

namespace refdial {

struct FramePolicy {
  std::size_t frame_budget = 5;
  bool with_timestamps = false;
};

// "A: x  B: y  C: z  D: w"
std::string render_choices(const std::array<std::string, 4>& choices);

// Samples to the budget. With timestamps, frames are annotated from the video's fps,
// or keep the manifest's timestamps when no fps is known (Error(InvalidFps) if
// neither exists). Without timestamps any stored timestamps are dropped.
std::vector<FrameRef> prepare_frames(const Example& example, const FramePolicy& policy, std::optional<double> fps);

// Frame images (each preceded by its timestamp prefix when it has one), then the
// question and rendered choices as one text part.
std::vector<ContentPart> question_parts(const Example& example, std::span<const FrameRef> frames);

std::string question_text(const Example& example);

}  // namespace refdial
