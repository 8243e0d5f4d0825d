#include "refdial/error.hpp"

#include "refdial/choice.hpp"

namespace refdial {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::ManifestNotFound: return "ManifestNotFound";
    case ErrorCode::SchemaViolation: return "SchemaViolation";
    case ErrorCode::MissingAnswerInSupport: return "MissingAnswerInSupport";
    case ErrorCode::EmptyFrameList: return "EmptyFrameList";
    case ErrorCode::InvalidK: return "InvalidK";
    case ErrorCode::InvalidFps: return "InvalidFps";
    case ErrorCode::InvalidTaxonomy: return "InvalidTaxonomy";
    case ErrorCode::UnresolvableType: return "UnresolvableType";
    case ErrorCode::EmptySupportSet: return "EmptySupportSet";
    case ErrorCode::InvalidLabel: return "InvalidLabel";
    case ErrorCode::DialogueNotFound: return "DialogueNotFound";
    case ErrorCode::CorruptDialogue: return "CorruptDialogue";
    case ErrorCode::InvalidRequest: return "InvalidRequest";
    case ErrorCode::Terminal: return "Terminal";
    case ErrorCode::RetriesExhausted: return "RetriesExhausted";
    case ErrorCode::Timeout: return "Timeout";
    case ErrorCode::ScriptExhausted: return "ScriptExhausted";
    case ErrorCode::UnmatchedKey: return "UnmatchedKey";
    case ErrorCode::ImageUnavailable: return "ImageUnavailable";
    case ErrorCode::MissingSystemPrompt: return "MissingSystemPrompt";
    case ErrorCode::UnknownExampleId: return "UnknownExampleId";
    case ErrorCode::EmptyResults: return "EmptyResults";
    case ErrorCode::MissingUsage: return "MissingUsage";
    case ErrorCode::UnsupportedFormat: return "UnsupportedFormat";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

bool is_backend_failure(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::Terminal:
    case ErrorCode::RetriesExhausted:
    case ErrorCode::Timeout:
    case ErrorCode::ScriptExhausted:
    case ErrorCode::UnmatchedKey:
    case ErrorCode::ImageUnavailable:
      return true;
    default:
      return false;
  }
}

Error::Error(ErrorCode code, std::string detail, int http_status)
    : std::runtime_error(std::string(to_string(code)) + ": " + detail),
      code_(code),
      detail_(std::move(detail)),
      http_status_(http_status) {}

std::optional<Choice> parse_choice(std::string_view s) noexcept {
  if (s.size() != 1 || s[0] < 'A' || s[0] > 'D') return std::nullopt;
  return static_cast<Choice>(s[0] - 'A');
}

Choice require_choice(std::string_view s) {
  if (auto c = parse_choice(s)) return *c;
  throw Error(ErrorCode::InvalidLabel, "expected one of A, B, C, D but got '" + std::string(s) + "'");
}

}  // namespace refdial
