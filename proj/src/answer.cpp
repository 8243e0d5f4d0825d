#include "refdial/answer.hpp"

#include <cctype>
#include <string>

namespace refdial {

namespace {

bool is_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }
bool is_choice_letter(char c) { return c >= 'A' && c <= 'D'; }

constexpr std::string_view kMarker = "final answer:";

bool marker_at(std::string_view s, std::size_t pos) {
  if (pos + kMarker.size() > s.size()) return false;
  for (std::size_t i = 0; i < kMarker.size(); ++i) {
    if (std::tolower(static_cast<unsigned char>(s[pos + i])) != kMarker[i]) return false;
  }
  return true;
}

}  // namespace

Prediction extract_answer(std::string_view text) {
  Prediction marked;
  for (std::size_t pos = 0; pos + kMarker.size() <= text.size(); ++pos) {
    if (!marker_at(text, pos)) continue;
    std::size_t i = pos + kMarker.size();
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i < text.size() && is_choice_letter(text[i]) && (i + 1 == text.size() || !is_alnum(text[i + 1]))) {
      marked = static_cast<Choice>(text[i] - 'A');
    }
  }
  if (marked) return marked;

  for (std::size_t i = text.size(); i-- > 0;) {
    if (!is_choice_letter(text[i])) continue;
    const bool left_ok = i == 0 || !is_alnum(text[i - 1]);
    const bool right_ok = i + 1 == text.size() || !is_alnum(text[i + 1]);
    if (left_ok && right_ok) return static_cast<Choice>(text[i] - 'A');
  }
  return std::nullopt;
}

}  // namespace refdial
