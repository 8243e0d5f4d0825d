#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "refdial/corpus.hpp"

namespace refdial {

enum class Role { User, Assistant };

struct TextPart {
  std::string text;
  bool operator==(const TextPart&) const = default;
};

struct ImagePart {
  FrameRef frame;
  bool operator==(const ImagePart&) const = default;
};

using ContentPart = std::variant<TextPart, ImagePart>;

struct Message {
  Role role = Role::User;
  std::vector<ContentPart> parts;
  bool operator==(const Message&) const = default;
};

struct ChatRequest {
  std::optional<std::string> system;
  std::vector<Message> messages;
  // Unset values fall back to the backend's configured defaults.
  std::optional<int> max_output_tokens;
  std::optional<double> temperature;

  bool operator==(const ChatRequest&) const = default;
};

struct Usage {
  std::int64_t input_tokens = 0;
  std::int64_t output_tokens = 0;
  std::int64_t cached_input_tokens = 0;

  bool operator==(const Usage&) const = default;
};

// Builds a Usage, clamping negatives to zero and cached_input_tokens to input_tokens.
Usage make_usage(std::int64_t input, std::int64_t output, std::int64_t cached = 0) noexcept;

struct Completion {
  std::string text;
  Usage usage;
};

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual Completion complete(const ChatRequest& request) = 0;
};

// Messages must be nonempty, start with a user message, strictly alternate and end
// with a user message. Throws Error(InvalidRequest).
void validate_request(const ChatRequest& request);

inline constexpr int kDefaultImageTokens = 256;

// ceil(text code points / 4) + image_tokens per image part.
std::int64_t estimate_tokens(std::span<const ContentPart> parts, int image_tokens = kDefaultImageTokens);
std::int64_t estimate_tokens(std::span<const Message> messages, int image_tokens = kDefaultImageTokens);
std::int64_t estimate_tokens(const ChatRequest& request, int image_tokens = kDefaultImageTokens);

// Hash of the request's text parts (system first, then messages in order). Images
// are ignored. Keys of keyed scripts are computed with this.
std::string text_fingerprint(const ChatRequest& request);

// Hash over roles, text and frame references of a message prefix. The empty prefix
// has a fixed fingerprint.
std::string context_fingerprint(std::span<const Message> messages);

}  // namespace refdial
