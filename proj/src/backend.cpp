#include "refdial/backend.hpp"

#include <algorithm>

#include "refdial/error.hpp"
#include "refdial/util.hpp"

namespace refdial {

Usage make_usage(std::int64_t input, std::int64_t output, std::int64_t cached) noexcept {
  Usage u;
  u.input_tokens = std::max<std::int64_t>(input, 0);
  u.output_tokens = std::max<std::int64_t>(output, 0);
  u.cached_input_tokens = std::clamp<std::int64_t>(cached, 0, u.input_tokens);
  return u;
}

void validate_request(const ChatRequest& request) {
  if (request.messages.empty()) throw Error(ErrorCode::InvalidRequest, "no messages");
  Role expected = Role::User;
  for (std::size_t i = 0; i < request.messages.size(); ++i) {
    if (request.messages[i].role != expected) {
      throw Error(ErrorCode::InvalidRequest, "roles must alternate starting with user (message " + std::to_string(i) + ")");
    }
    expected = expected == Role::User ? Role::Assistant : Role::User;
  }
  if (request.messages.back().role != Role::User) throw Error(ErrorCode::InvalidRequest, "final message must be from the user");
}

std::int64_t estimate_tokens(std::span<const ContentPart> parts, int image_tokens) {
  std::int64_t chars = 0;
  std::int64_t images = 0;
  for (const ContentPart& p : parts) {
    if (const auto* t = std::get_if<TextPart>(&p)) {
      chars += static_cast<std::int64_t>(utf8_length(t->text));
    } else {
      ++images;
    }
  }
  return (chars + 3) / 4 + images * image_tokens;
}

std::int64_t estimate_tokens(std::span<const Message> messages, int image_tokens) {
  std::int64_t total = 0;
  for (const Message& m : messages) total += estimate_tokens(m.parts, image_tokens);
  return total;
}

std::int64_t estimate_tokens(const ChatRequest& request, int image_tokens) {
  std::int64_t total = estimate_tokens(request.messages, image_tokens);
  if (request.system) {
    const ContentPart sys = TextPart{*request.system};
    total += estimate_tokens(std::span(&sys, 1), image_tokens);
  }
  return total;
}

std::string text_fingerprint(const ChatRequest& request) {
  Fnv1a h;
  auto add = [&h](std::string_view text) { h.update(text).update_byte('\n'); };
  if (request.system) add(*request.system);
  for (const Message& m : request.messages) {
    for (const ContentPart& p : m.parts) {
      if (const auto* t = std::get_if<TextPart>(&p)) add(t->text);
    }
  }
  return h.hex();
}

std::string context_fingerprint(std::span<const Message> messages) {
  Fnv1a h;
  for (const Message& m : messages) {
    h.update(m.role == Role::User ? "\x01user" : "\x01assistant");
    for (const ContentPart& p : m.parts) {
      if (const auto* t = std::get_if<TextPart>(&p)) {
        h.update("\x02").update(t->text);
      } else {
        const FrameRef& f = std::get<ImagePart>(p).frame;
        h.update("\x03").update(f.uri).update("#").update(std::to_string(f.index));
        if (f.timestamp_s) h.update("@").update(std::to_string(*f.timestamp_s));
      }
    }
  }
  return h.hex();
}

}  // namespace refdial
