#pragma once

#include <cstddef>
#include <deque>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "refdial/backend.hpp"

namespace refdial {

// Replies handed out in call order.
struct FifoScript {
  std::vector<std::string> responses;
};

// Replies keyed by text_fingerprint(request). `fallback`, when set, answers any
// request whose key is absent instead of raising UnmatchedKey.
struct KeyedScript {
  std::map<std::string, std::string> responses;
  std::optional<std::string> fallback;
};

// Deterministic backend for tests and offline pipeline runs. Every request is
// recorded. Usage is synthesized from estimate_tokens on request and response.
class ScriptedBackend final : public ChatBackend {
 public:
  explicit ScriptedBackend(FifoScript script, int image_tokens = kDefaultImageTokens);
  explicit ScriptedBackend(KeyedScript script, int image_tokens = kDefaultImageTokens);

  // JSON list -> FIFO; JSON object -> keyed, where the key "*" is the fallback.
  static std::unique_ptr<ScriptedBackend> from_file(const std::filesystem::path& path,
                                                    int image_tokens = kDefaultImageTokens);

  Completion complete(const ChatRequest& request) override;

  std::size_t call_count() const;
  std::vector<ChatRequest> requests() const;

 private:
  mutable std::mutex mutex_;
  bool keyed_;
  std::deque<std::string> fifo_;
  KeyedScript keyed_script_;
  int image_tokens_;
  std::vector<ChatRequest> recorded_;
};

}  // namespace refdial
