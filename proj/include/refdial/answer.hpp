#pragma once

#include <string_view>

#include "refdial/choice.hpp"

namespace refdial {

// Extracts the answer letter from a completion.
//
// 1. The last "Final Answer:" marker (case-insensitive) followed by optional
//    whitespace and an uppercase A-D that is not followed by a letter or digit.
// 2. Otherwise the last uppercase A-D bounded on both sides by non-alphanumerics.
// 3. Otherwise unparsed (std::nullopt).
Prediction extract_answer(std::string_view completion);

}  // namespace refdial
