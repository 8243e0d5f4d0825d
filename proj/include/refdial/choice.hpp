#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace refdial {

// One of the four multiple-choice answer labels.
enum class Choice : std::uint8_t { A = 0, B = 1, C = 2, D = 3 };

inline constexpr std::array<Choice, 4> kAllChoices = {Choice::A, Choice::B, Choice::C, Choice::D};

// A solver's extracted answer; std::nullopt means the completion was unparsed.
using Prediction = std::optional<Choice>;

constexpr char to_char(Choice c) noexcept { return static_cast<char>('A' + static_cast<int>(c)); }
inline std::string to_string(Choice c) { return std::string(1, to_char(c)); }

// "A".."D" exactly; anything else is nullopt.
std::optional<Choice> parse_choice(std::string_view s) noexcept;

// Throws Error(InvalidLabel) instead of returning nullopt.
Choice require_choice(std::string_view s);

constexpr std::size_t index_of(Choice c) noexcept { return static_cast<std::size_t>(c); }

}  // namespace refdial
