#include "refdial/scripted_backend.hpp"

#include "refdial/error.hpp"
#include "refdial/util.hpp"

namespace refdial {

ScriptedBackend::ScriptedBackend(FifoScript script, int image_tokens)
    : keyed_(false), fifo_(script.responses.begin(), script.responses.end()), image_tokens_(image_tokens) {}

ScriptedBackend::ScriptedBackend(KeyedScript script, int image_tokens)
    : keyed_(true), keyed_script_(std::move(script)), image_tokens_(image_tokens) {}

std::unique_ptr<ScriptedBackend> ScriptedBackend::from_file(const std::filesystem::path& path, int image_tokens) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::ConfigError, "script " + path.string() + ": " + e.what());
  }
  if (j.is_array()) {
    FifoScript s;
    for (const auto& v : j) {
      if (!v.is_string()) throw Error(ErrorCode::ConfigError, "script " + path.string() + ": entries must be strings");
      s.responses.push_back(v.get<std::string>());
    }
    return std::make_unique<ScriptedBackend>(std::move(s), image_tokens);
  }
  if (j.is_object()) {
    KeyedScript s;
    for (const auto& [key, v] : j.items()) {
      if (!v.is_string()) throw Error(ErrorCode::ConfigError, "script " + path.string() + ": values must be strings");
      if (key == "*") {
        s.fallback = v.get<std::string>();
      } else {
        s.responses[key] = v.get<std::string>();
      }
    }
    return std::make_unique<ScriptedBackend>(std::move(s), image_tokens);
  }
  throw Error(ErrorCode::ConfigError, "script " + path.string() + " must be a JSON list or object");
}

Completion ScriptedBackend::complete(const ChatRequest& request) {
  validate_request(request);
  std::lock_guard lock(mutex_);
  recorded_.push_back(request);

  std::string text;
  if (keyed_) {
    const std::string key = text_fingerprint(request);
    if (auto it = keyed_script_.responses.find(key); it != keyed_script_.responses.end()) {
      text = it->second;
    } else if (keyed_script_.fallback) {
      text = *keyed_script_.fallback;
    } else {
      throw Error(ErrorCode::UnmatchedKey, "no scripted response for fingerprint " + key);
    }
  } else {
    if (fifo_.empty()) {
      throw Error(ErrorCode::ScriptExhausted, "call " + std::to_string(recorded_.size()) + " has no scripted response");
    }
    text = std::move(fifo_.front());
    fifo_.pop_front();
  }

  const ContentPart reply = TextPart{text};
  Completion c;
  c.usage = make_usage(estimate_tokens(request, image_tokens_), estimate_tokens(std::span(&reply, 1), image_tokens_));
  c.text = std::move(text);
  return c;
}

std::size_t ScriptedBackend::call_count() const {
  std::lock_guard lock(mutex_);
  return recorded_.size();
}

std::vector<ChatRequest> ScriptedBackend::requests() const {
  std::lock_guard lock(mutex_);
  return recorded_;
}

}  // namespace refdial
