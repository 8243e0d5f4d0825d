#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <random>
#include <semaphore>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "refdial/backend.hpp"

namespace refdial {

struct BackendConfig {
  std::string endpoint;  // e.g. "http://localhost:8000/v1"
  std::string model;
  std::string api_key_env = "OPENAI_API_KEY";
  int max_retries = 3;
  double backoff_base_s = 1.0;
  double timeout_s = 120.0;
  int max_concurrency = 4;
  int max_output_tokens = 1024;
  double temperature = 0.0;
  int image_tokens = kDefaultImageTokens;
  // Recorded only; frames are sent as stored.
  std::int64_t max_image_pixels = 128000;
};

// Throws Error(ConfigError) on invalid values.
void validate(const BackendConfig& cfg);
BackendConfig backend_config_from_json(const nlohmann::json& j);

struct HttpResponse {
  int status = 0;
  std::string body;
};

// Network-level failure: no HTTP status was received.
class TransportError : public std::runtime_error {
 public:
  TransportError(std::string what, bool timed_out) : std::runtime_error(std::move(what)), timed_out_(timed_out) {}
  bool timed_out() const noexcept { return timed_out_; }

 private:
  bool timed_out_;
};

using HeaderList = std::vector<std::pair<std::string, std::string>>;

class HttpTransport {
 public:
  virtual ~HttpTransport() = default;
  // Throws TransportError when no response arrives.
  virtual HttpResponse post(const std::string& path, const std::string& body, const HeaderList& headers) = 0;
};

// cpp-httplib client for "scheme://host[:port]".
std::unique_ptr<HttpTransport> make_http_transport(const std::string& origin, double timeout_s);

struct EndpointUrl {
  std::string origin;       // scheme://host[:port]
  std::string path_prefix;  // "" or "/v1"
};
EndpointUrl split_endpoint(const std::string& endpoint);

// "data:image/jpeg;base64,..." for local files; http(s) URIs pass through.
// Throws Error(ImageUnavailable) when a local file cannot be read.
std::string image_url_for(const FrameRef& frame);

nlohmann::json encode_chat_request(const ChatRequest& request, const BackendConfig& cfg);
// Reads choices[0].message.content and usage; missing usage counts as zero.
// Throws Error(Terminal) on a malformed body.
Completion decode_chat_response(const std::string& body);

// Chat-completions client for OpenAI-compatible servers.
//
// Transport errors, 429 and 5xx are retried up to max_retries times with full-jitter
// exponential backoff (uniform in [0, backoff_base_s * 2^attempt]); any other non-2xx
// status is terminal. At most max_concurrency requests are in flight at once.
class OpenAiBackend final : public ChatBackend {
 public:
  using Sleeper = std::function<void(double seconds)>;

  explicit OpenAiBackend(BackendConfig cfg, std::unique_ptr<HttpTransport> transport = nullptr,
                         Sleeper sleeper = nullptr, std::uint64_t jitter_seed = std::random_device{}());

  Completion complete(const ChatRequest& request) override;

  // Total HTTP attempts made by this client, across all calls.
  std::int64_t attempts() const noexcept { return attempts_.load(); }
  const BackendConfig& config() const noexcept { return cfg_; }

 private:
  double next_backoff(int retry);

  BackendConfig cfg_;
  std::string path_;
  std::unique_ptr<HttpTransport> transport_;
  Sleeper sleeper_;
  std::counting_semaphore<> slots_;
  std::mutex rng_mutex_;
  std::mt19937_64 rng_;
  std::atomic<std::int64_t> attempts_{0};
};

}  // namespace refdial
