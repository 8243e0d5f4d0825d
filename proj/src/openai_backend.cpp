#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "refdial/openai_backend.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <thread>

#include <httplib.h>

#include "refdial/error.hpp"
#include "refdial/util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace refdial {

namespace {

class HttplibTransport final : public HttpTransport {
 public:
  HttplibTransport(std::string origin, double timeout_s) : origin_(std::move(origin)), timeout_s_(timeout_s) {}

  HttpResponse post(const std::string& path, const std::string& body, const HeaderList& headers) override {
    // One client per call: httplib::Client is not safe for concurrent requests.
    httplib::Client client(origin_);
    const auto timeout = std::chrono::microseconds(static_cast<std::int64_t>(timeout_s_ * 1e6));
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);

    httplib::Headers h;
    for (const auto& [k, v] : headers) h.emplace(k, v);

    const auto start = std::chrono::steady_clock::now();
    auto res = client.Post(path, h, body, "application/json");
    if (!res) {
      const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      const auto err = res.error();
      const bool timed_out = err == httplib::Error::ConnectionTimeout ||
                             (err == httplib::Error::Read && elapsed >= 0.9 * timeout_s_);
      throw TransportError("POST " + origin_ + path + ": " + httplib::to_string(err), timed_out);
    }
    return {res->status, res->body};
  }

 private:
  std::string origin_;
  double timeout_s_;
};

std::string mime_for(const fs::path& p) {
  std::string ext = p.extension().string();
  for (char& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (ext == ".png") return "image/png";
  if (ext == ".webp") return "image/webp";
  if (ext == ".gif") return "image/gif";
  return "image/jpeg";
}

bool is_retryable_status(int status) { return status == 429 || (status >= 500 && status <= 599); }

}  // namespace

void validate(const BackendConfig& cfg) {
  if (cfg.endpoint.empty()) throw Error(ErrorCode::ConfigError, "backend endpoint is empty");
  if (cfg.model.empty()) throw Error(ErrorCode::ConfigError, "backend model is empty");
  if (cfg.max_retries < 0) throw Error(ErrorCode::ConfigError, "max_retries must be >= 0");
  if (cfg.max_concurrency < 1) throw Error(ErrorCode::ConfigError, "max_concurrency must be >= 1");
  if (!(cfg.backoff_base_s >= 0.0)) throw Error(ErrorCode::ConfigError, "backoff_base_s must be >= 0");
  if (!(cfg.timeout_s > 0.0)) throw Error(ErrorCode::ConfigError, "timeout_s must be > 0");
  if (cfg.max_output_tokens < 1) throw Error(ErrorCode::ConfigError, "max_output_tokens must be >= 1");
  if (!(cfg.temperature >= 0.0)) throw Error(ErrorCode::ConfigError, "temperature must be >= 0");
  if (cfg.image_tokens < 0) throw Error(ErrorCode::ConfigError, "image_tokens must be >= 0");
}

BackendConfig backend_config_from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorCode::ConfigError, "backend config must be an object");
  BackendConfig cfg;
  try {
    cfg.endpoint = j.value("endpoint", cfg.endpoint);
    cfg.model = j.value("model", cfg.model);
    cfg.api_key_env = j.value("api_key_env", cfg.api_key_env);
    cfg.max_retries = j.value("max_retries", cfg.max_retries);
    cfg.backoff_base_s = j.value("backoff_base_s", cfg.backoff_base_s);
    cfg.timeout_s = j.value("timeout_s", cfg.timeout_s);
    cfg.max_concurrency = j.value("max_concurrency", cfg.max_concurrency);
    cfg.max_output_tokens = j.value("max_output_tokens", cfg.max_output_tokens);
    cfg.temperature = j.value("temperature", cfg.temperature);
    cfg.image_tokens = j.value("image_tokens", cfg.image_tokens);
    cfg.max_image_pixels = j.value("max_image_pixels", cfg.max_image_pixels);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigError, std::string("backend config: ") + e.what());
  }
  return cfg;
}

std::unique_ptr<HttpTransport> make_http_transport(const std::string& origin, double timeout_s) {
  return std::make_unique<HttplibTransport>(origin, timeout_s);
}

EndpointUrl split_endpoint(const std::string& endpoint) {
  const auto scheme_end = endpoint.find("://");
  if (scheme_end == std::string::npos) throw Error(ErrorCode::ConfigError, "endpoint needs a scheme: " + endpoint);
  const auto path_start = endpoint.find('/', scheme_end + 3);
  EndpointUrl url;
  if (path_start == std::string::npos) {
    url.origin = endpoint;
  } else {
    url.origin = endpoint.substr(0, path_start);
    url.path_prefix = endpoint.substr(path_start);
    while (!url.path_prefix.empty() && url.path_prefix.back() == '/') url.path_prefix.pop_back();
  }
  return url;
}

std::string image_url_for(const FrameRef& frame) {
  if (frame.uri.starts_with("http://") || frame.uri.starts_with("https://") || frame.uri.starts_with("data:")) {
    return frame.uri;
  }
  fs::path path = frame.uri;
  if (frame.uri.starts_with("file://")) path = frame.uri.substr(7);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::ImageUnavailable, "cannot read frame " + frame.uri);
  const std::vector<unsigned char> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return "data:" + mime_for(path) + ";base64," + base64_encode(bytes);
}

json encode_chat_request(const ChatRequest& request, const BackendConfig& cfg) {
  json messages = json::array();
  if (request.system) messages.push_back({{"role", "system"}, {"content", *request.system}});
  for (const Message& m : request.messages) {
    if (m.role == Role::Assistant) {
      std::string text;
      for (const ContentPart& p : m.parts) {
        if (const auto* t = std::get_if<TextPart>(&p)) {
          if (!text.empty()) text += '\n';
          text += t->text;
        }
      }
      messages.push_back({{"role", "assistant"}, {"content", text}});
      continue;
    }
    json content = json::array();
    for (const ContentPart& p : m.parts) {
      if (const auto* t = std::get_if<TextPart>(&p)) {
        content.push_back({{"type", "text"}, {"text", t->text}});
      } else {
        content.push_back(
            {{"type", "image_url"}, {"image_url", {{"url", image_url_for(std::get<ImagePart>(p).frame)}}}});
      }
    }
    messages.push_back({{"role", "user"}, {"content", std::move(content)}});
  }
  return {
      {"model", cfg.model},
      {"messages", std::move(messages)},
      {"max_tokens", request.max_output_tokens.value_or(cfg.max_output_tokens)},
      {"temperature", request.temperature.value_or(cfg.temperature)},
  };
}

Completion decode_chat_response(const std::string& body) {
  try {
    const json j = json::parse(body);
    const json& content = j.at("choices").at(0).at("message").at("content");
    Completion c;
    if (content.is_string()) {
      c.text = content.get<std::string>();
    } else if (content.is_array()) {
      for (const json& part : content) {
        if (part.value("type", "") == "text") c.text += part.value("text", "");
      }
    } else if (!content.is_null()) {
      throw Error(ErrorCode::Terminal, "unexpected content type in response", 200);
    }
    std::int64_t input = 0, output = 0, cached = 0;
    if (auto u = j.find("usage"); u != j.end() && u->is_object()) {
      input = u->value("prompt_tokens", std::int64_t{0});
      output = u->value("completion_tokens", std::int64_t{0});
      if (auto d = u->find("prompt_tokens_details"); d != u->end() && d->is_object()) {
        cached = d->value("cached_tokens", std::int64_t{0});
      }
    }
    c.usage = make_usage(input, output, cached);
    return c;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Terminal, std::string("malformed response body: ") + e.what(), 200);
  }
}

OpenAiBackend::OpenAiBackend(BackendConfig cfg, std::unique_ptr<HttpTransport> transport, Sleeper sleeper,
                             std::uint64_t jitter_seed)
    : cfg_(std::move(cfg)),
      transport_(std::move(transport)),
      sleeper_(std::move(sleeper)),
      slots_((validate(cfg_), cfg_.max_concurrency)),
      rng_(jitter_seed) {
  const EndpointUrl url = split_endpoint(cfg_.endpoint);
  path_ = url.path_prefix + "/chat/completions";
  if (!transport_) transport_ = make_http_transport(url.origin, cfg_.timeout_s);
  if (!sleeper_) {
    sleeper_ = [](double s) { std::this_thread::sleep_for(std::chrono::duration<double>(s)); };
  }
}

double OpenAiBackend::next_backoff(int retry) {
  const double cap = cfg_.backoff_base_s * std::ldexp(1.0, retry);
  std::lock_guard lock(rng_mutex_);
  return std::uniform_real_distribution<double>(0.0, cap)(rng_);
}

Completion OpenAiBackend::complete(const ChatRequest& request) {
  validate_request(request);
  const std::string body = encode_chat_request(request, cfg_).dump();

  HeaderList headers;
  if (!cfg_.api_key_env.empty()) {
    if (const char* key = std::getenv(cfg_.api_key_env.c_str()); key && *key) {
      headers.emplace_back("Authorization", std::string("Bearer ") + key);
    }
  }

  std::string last_error;
  bool last_timed_out = false;
  int last_status = 0;
  for (int attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
    if (attempt > 0) sleeper_(next_backoff(attempt - 1));
    ++attempts_;
    HttpResponse res;
    try {
      slots_.acquire();
      struct Release {
        std::counting_semaphore<>& s;
        ~Release() { s.release(); }
      } release{slots_};
      res = transport_->post(path_, body, headers);
    } catch (const TransportError& e) {
      last_error = e.what();
      last_timed_out = e.timed_out();
      last_status = 0;
      continue;
    }
    if (res.status >= 200 && res.status < 300) return decode_chat_response(res.body);
    if (!is_retryable_status(res.status)) {
      throw Error(ErrorCode::Terminal, "HTTP " + std::to_string(res.status) + ": " + res.body, res.status);
    }
    last_error = "HTTP " + std::to_string(res.status) + ": " + res.body;
    last_timed_out = false;
    last_status = res.status;
  }
  if (last_timed_out) throw Error(ErrorCode::Timeout, last_error);
  throw Error(ErrorCode::RetriesExhausted, last_error, last_status);
}

}  // namespace refdial
