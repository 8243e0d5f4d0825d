#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace refdial {

enum class ErrorCode {
  // corpus
  ManifestNotFound,
  SchemaViolation,
  MissingAnswerInSupport,
  EmptyFrameList,
  InvalidK,
  InvalidFps,
  // taxonomy
  InvalidTaxonomy,
  UnresolvableType,
  // dialogue
  EmptySupportSet,
  InvalidLabel,
  DialogueNotFound,
  CorruptDialogue,
  // backend
  InvalidRequest,
  Terminal,
  RetriesExhausted,
  Timeout,
  ScriptExhausted,
  UnmatchedKey,
  ImageUnavailable,
  // inference
  MissingSystemPrompt,
  // evaluation
  UnknownExampleId,
  EmptyResults,
  MissingUsage,
  UnsupportedFormat,
  // plumbing
  ConfigError,
  Io,
};

std::string_view to_string(ErrorCode code) noexcept;

// Failures raised by a chat backend. The CLI maps these onto exit code 4.
bool is_backend_failure(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string detail, int http_status = 0);

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }
  // Non-zero only for ErrorCode::Terminal (and RetriesExhausted after an HTTP failure).
  int http_status() const noexcept { return http_status_; }

 private:
  ErrorCode code_;
  std::string detail_;
  int http_status_;
};

}  // namespace refdial
