#include <gtest/gtest.h>

#include <deque>
#include <set>
#include <thread>

#include "refdial/backend.hpp"
#include "refdial/error.hpp"
#include "refdial/openai_backend.hpp"
#include "refdial/scripted_backend.hpp"
#include "test_support.hpp"

using namespace refdial;
using refdial::testing::TempDir;
using refdial::testing::write_file;
using nlohmann::json;

namespace {

ChatRequest text_request(const std::string& text, std::optional<std::string> system = std::nullopt) {
  ChatRequest r;
  r.system = std::move(system);
  r.messages.push_back({Role::User, {TextPart{text}}});
  return r;
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an Error";
  return ErrorCode::Io;
}

struct Step {
  int status = 200;
  std::string body;
  bool transport_error = false;
  bool timed_out = false;
};

std::string ok_body(const std::string& content, int prompt = 10, int completion = 2, int cached = 0) {
  return json{{"choices", {{{"message", {{"role", "assistant"}, {"content", content}}}}}},
              {"usage",
               {{"prompt_tokens", prompt},
                {"completion_tokens", completion},
                {"prompt_tokens_details", {{"cached_tokens", cached}}}}}}
      .dump();
}

class FakeTransport : public HttpTransport {
 public:
  explicit FakeTransport(std::deque<Step> steps) : steps_(std::move(steps)) {}

  HttpResponse post(const std::string& path, const std::string& body, const HeaderList& headers) override {
    std::lock_guard lock(mutex_);
    paths.push_back(path);
    bodies.push_back(body);
    last_headers = headers;
    if (steps_.empty()) throw TransportError("no more steps", false);
    Step s = steps_.front();
    steps_.pop_front();
    if (s.transport_error) throw TransportError("connection refused", s.timed_out);
    return {s.status, s.body};
  }

  std::mutex mutex_;
  std::deque<Step> steps_;
  std::vector<std::string> paths;
  std::vector<std::string> bodies;
  HeaderList last_headers;
};

struct Harness {
  FakeTransport* transport;
  std::vector<double> sleeps;
  std::unique_ptr<OpenAiBackend> backend;
};

std::unique_ptr<Harness> make_harness(std::deque<Step> steps, int max_retries = 3) {
  auto h = std::make_unique<Harness>();
  auto t = std::make_unique<FakeTransport>(std::move(steps));
  h->transport = t.get();
  BackendConfig cfg;
  cfg.endpoint = "http://localhost:9/v1";
  cfg.model = "test-model";
  cfg.api_key_env = "REFDIAL_TEST_KEY_UNSET";
  cfg.max_retries = max_retries;
  cfg.backoff_base_s = 0.5;
  Harness* raw = h.get();
  h->backend = std::make_unique<OpenAiBackend>(cfg, std::move(t), [raw](double s) { raw->sleeps.push_back(s); }, 42);
  return h;
}

}  // namespace

TEST(EstimateTokens, TextAndImages) {
  EXPECT_EQ(estimate_tokens(std::span<const ContentPart>{}), 0);
  const std::vector<ContentPart> parts = {TextPart{"abcdefgh"}};
  EXPECT_EQ(estimate_tokens(parts), 2);
  const std::vector<ContentPart> images = {ImagePart{{"a.jpg", 0, std::nullopt}}, ImagePart{{"b.jpg", 1, std::nullopt}}};
  EXPECT_EQ(estimate_tokens(images), 512);
  const std::vector<ContentPart> nine = {TextPart{"abcdefghi"}};
  EXPECT_EQ(estimate_tokens(nine), 3);
  // code points, not bytes: four two-byte characters
  const std::vector<ContentPart> accents = {TextPart{"\xC3\xA9\xC3\xA9\xC3\xA9\xC3\xA9"}};
  EXPECT_EQ(estimate_tokens(accents), 1);
}

TEST(ValidateRequest, Alternation) {
  EXPECT_NO_THROW(validate_request(text_request("hi")));
  ChatRequest r;
  EXPECT_EQ(code_of([&] { validate_request(r); }), ErrorCode::InvalidRequest);
  r.messages = {{Role::Assistant, {TextPart{"x"}}}};
  EXPECT_EQ(code_of([&] { validate_request(r); }), ErrorCode::InvalidRequest);
  r.messages = {{Role::User, {TextPart{"x"}}}, {Role::User, {TextPart{"y"}}}};
  EXPECT_EQ(code_of([&] { validate_request(r); }), ErrorCode::InvalidRequest);
  r.messages = {{Role::User, {TextPart{"x"}}}, {Role::Assistant, {TextPart{"y"}}}};
  EXPECT_EQ(code_of([&] { validate_request(r); }), ErrorCode::InvalidRequest);
  r.messages.push_back({Role::User, {TextPart{"z"}}});
  EXPECT_NO_THROW(validate_request(r));
}

TEST(Fingerprints, TextFingerprintIgnoresImages) {
  ChatRequest a = text_request("same");
  ChatRequest b = a;
  b.messages[0].parts.push_back(ImagePart{{"x.jpg", 3, std::nullopt}});
  EXPECT_EQ(text_fingerprint(a), text_fingerprint(b));
  EXPECT_NE(text_fingerprint(a), text_fingerprint(text_request("other")));
  EXPECT_NE(text_fingerprint(a), text_fingerprint(text_request("same", "sys")));
  EXPECT_EQ(text_fingerprint(a).size(), 16u);
}

TEST(Fingerprints, ContextFingerprintSeesFramesAndRoles) {
  const std::vector<Message> base = {{Role::User, {TextPart{"q"}, ImagePart{{"x.jpg", 3, std::nullopt}}}}};
  auto other_frame = base;
  std::get<ImagePart>(other_frame[0].parts[1]).frame.index = 4;
  auto with_ts = base;
  std::get<ImagePart>(with_ts[0].parts[1]).frame.timestamp_s = 1.0;
  auto other_role = base;
  other_role[0].role = Role::Assistant;
  std::set<std::string> prints = {context_fingerprint(base), context_fingerprint(other_frame),
                                  context_fingerprint(with_ts), context_fingerprint(other_role),
                                  context_fingerprint(std::span<const Message>{})};
  EXPECT_EQ(prints.size(), 5u);
  EXPECT_EQ(context_fingerprint(base), context_fingerprint(std::vector<Message>(base)));
}

TEST(Usage, Clamped) {
  EXPECT_EQ(make_usage(-3, 5, 1), (Usage{0, 5, 0}));
  EXPECT_EQ(make_usage(10, 2, 40), (Usage{10, 2, 10}));
}

TEST(ScriptedBackend, FifoInOrderThenExhausted) {
  ScriptedBackend b(FifoScript{{"one", "two"}});
  EXPECT_EQ(b.complete(text_request("a")).text, "one");
  const Completion second = b.complete(text_request("abcd"));
  EXPECT_EQ(second.text, "two");
  EXPECT_EQ(second.usage, (Usage{1, 1, 0}));
  EXPECT_EQ(code_of([&] { b.complete(text_request("c")); }), ErrorCode::ScriptExhausted);
  EXPECT_EQ(b.call_count(), 3u);
  EXPECT_EQ(b.requests()[1], text_request("abcd"));
}

TEST(ScriptedBackend, KeyedAndFallback) {
  const ChatRequest hit = text_request("hello");
  KeyedScript s;
  s.responses[text_fingerprint(hit)] = "world";
  ScriptedBackend strict(s);
  EXPECT_EQ(strict.complete(hit).text, "world");
  EXPECT_EQ(strict.complete(hit).text, "world");
  EXPECT_EQ(code_of([&] { strict.complete(text_request("nope")); }), ErrorCode::UnmatchedKey);

  s.fallback = "default";
  ScriptedBackend lenient(s);
  EXPECT_EQ(lenient.complete(text_request("nope")).text, "default");
}

TEST(ScriptedBackend, FromFile) {
  TempDir dir;
  write_file(dir / "fifo.json", R"(["x", "y"])");
  auto fifo = ScriptedBackend::from_file(dir / "fifo.json");
  EXPECT_EQ(fifo->complete(text_request("a")).text, "x");

  const ChatRequest hit = text_request("k");
  write_file(dir / "keyed.json", json{{text_fingerprint(hit), "matched"}, {"*", "other"}}.dump());
  auto keyed = ScriptedBackend::from_file(dir / "keyed.json");
  EXPECT_EQ(keyed->complete(hit).text, "matched");
  EXPECT_EQ(keyed->complete(text_request("zz")).text, "other");

  write_file(dir / "bad.json", "42");
  EXPECT_EQ(code_of([&] { ScriptedBackend::from_file(dir / "bad.json"); }), ErrorCode::ConfigError);
}

TEST(ScriptedBackend, RejectsInvalidRequest) {
  ScriptedBackend b(FifoScript{{"x"}});
  EXPECT_EQ(code_of([&] { b.complete(ChatRequest{}); }), ErrorCode::InvalidRequest);
}

TEST(OpenAiBackend, RetriesServerErrorsThenSucceeds) {
  auto h = make_harness({{500, "boom"}, {503, "busy"}, {200, ok_body("Final Answer: B", 120, 7, 100)}});
  const Completion c = h->backend->complete(text_request("q"));
  EXPECT_EQ(c.text, "Final Answer: B");
  EXPECT_EQ(c.usage, (Usage{120, 7, 100}));
  EXPECT_EQ(h->backend->attempts(), 3);
  ASSERT_EQ(h->sleeps.size(), 2u);
  EXPECT_GE(h->sleeps[0], 0.0);
  EXPECT_LE(h->sleeps[0], 0.5);
  EXPECT_LE(h->sleeps[1], 1.0);
  EXPECT_EQ(h->transport->paths[0], "/v1/chat/completions");
}

TEST(OpenAiBackend, RateLimitAndTransportErrorsRetried) {
  auto h = make_harness({{429, "slow down"}, {0, "", true, false}, {200, ok_body("ok")}});
  EXPECT_EQ(h->backend->complete(text_request("q")).text, "ok");
  EXPECT_EQ(h->backend->attempts(), 3);
}

TEST(OpenAiBackend, ClientErrorIsTerminal) {
  auto h = make_harness({{401, "unauthorized"}, {200, ok_body("never")}});
  try {
    h->backend->complete(text_request("q"));
    FAIL() << "expected terminal error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Terminal);
    EXPECT_EQ(e.http_status(), 401);
  }
  EXPECT_EQ(h->backend->attempts(), 1);
  EXPECT_TRUE(h->sleeps.empty());
}

TEST(OpenAiBackend, RetriesExhausted) {
  auto h = make_harness({{500, "a"}, {500, "b"}, {500, "c"}}, 2);
  try {
    h->backend->complete(text_request("q"));
    FAIL() << "expected exhaustion";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::RetriesExhausted);
    EXPECT_EQ(e.http_status(), 500);
  }
  EXPECT_EQ(h->backend->attempts(), 3);
}

TEST(OpenAiBackend, TimeoutAfterRetries) {
  auto h = make_harness({{0, "", true, true}, {0, "", true, true}}, 1);
  EXPECT_EQ(code_of([&] { h->backend->complete(text_request("q")); }), ErrorCode::Timeout);
  EXPECT_EQ(h->backend->attempts(), 2);
}

TEST(OpenAiBackend, MalformedBodyIsTerminal) {
  auto h = make_harness({{200, "{not json"}});
  EXPECT_EQ(code_of([&] { h->backend->complete(text_request("q")); }), ErrorCode::Terminal);
}

TEST(OpenAiBackend, BearerFromEnvironment) {
  ::setenv("REFDIAL_TEST_KEY_SET", "sekrit", 1);
  auto t = std::make_unique<FakeTransport>(std::deque<Step>{{200, ok_body("ok")}});
  FakeTransport* raw = t.get();
  BackendConfig cfg;
  cfg.endpoint = "https://api.example.com";
  cfg.model = "m";
  cfg.api_key_env = "REFDIAL_TEST_KEY_SET";
  OpenAiBackend b(cfg, std::move(t), [](double) {}, 1);
  b.complete(text_request("q"));
  EXPECT_EQ(raw->paths[0], "/chat/completions");
  ASSERT_EQ(raw->last_headers.size(), 1u);
  EXPECT_EQ(raw->last_headers[0], (std::pair<std::string, std::string>{"Authorization", "Bearer sekrit"}));
}

TEST(OpenAiBackend, ConfigValidation) {
  BackendConfig cfg;
  cfg.endpoint = "http://x";
  cfg.model = "m";
  EXPECT_NO_THROW(validate(cfg));
  cfg.max_concurrency = 0;
  EXPECT_EQ(code_of([&] { validate(cfg); }), ErrorCode::ConfigError);
  const BackendConfig parsed = backend_config_from_json(
      {{"endpoint", "http://h:1/v1"}, {"model", "vm"}, {"max_retries", 5}, {"max_concurrency", 2}});
  EXPECT_EQ(parsed.max_retries, 5);
  EXPECT_EQ(parsed.max_concurrency, 2);
  EXPECT_EQ(parsed.model, "vm");
}

TEST(WireFormat, EncodeRequest) {
  TempDir dir;
  write_file(dir / "f.jpg", "abc");
  ChatRequest r;
  r.system = "sys";
  r.messages = {
      {Role::User, {TextPart{"look"}, ImagePart{{(dir / "f.jpg").string(), 0, std::nullopt}}}},
      {Role::Assistant, {TextPart{"Final Answer: A"}}},
      {Role::User, {TextPart{"again"}, ImagePart{{"https://x/y.png", 1, std::nullopt}}}},
  };
  BackendConfig cfg;
  cfg.model = "m";
  const json body = encode_chat_request(r, cfg);
  const json expected = {
      {"model", "m"},
      {"messages",
       {{{"role", "system"}, {"content", "sys"}},
        {{"role", "user"},
         {"content",
          {{{"type", "text"}, {"text", "look"}},
           {{"type", "image_url"}, {"image_url", {{"url", "data:image/jpeg;base64,YWJj"}}}}}}},
        {{"role", "assistant"}, {"content", "Final Answer: A"}},
        {{"role", "user"},
         {"content",
          {{{"type", "text"}, {"text", "again"}},
           {{"type", "image_url"}, {"image_url", {{"url", "https://x/y.png"}}}}}}}}},
      {"max_tokens", 1024},
      {"temperature", 0.0},
  };
  EXPECT_EQ(body, expected);
  EXPECT_EQ(code_of([&] { image_url_for({(dir / "missing.jpg").string(), 0, std::nullopt}); }),
            ErrorCode::ImageUnavailable);
}

TEST(WireFormat, DecodeResponseWithoutUsage) {
  const Completion c = decode_chat_response(R"({"choices":[{"message":{"content":"hi"}}]})");
  EXPECT_EQ(c.text, "hi");
  EXPECT_EQ(c.usage, Usage{});
}

TEST(WireFormat, SplitEndpoint) {
  EXPECT_EQ(split_endpoint("http://h:8000/v1/").origin, "http://h:8000");
  EXPECT_EQ(split_endpoint("http://h:8000/v1/").path_prefix, "/v1");
  EXPECT_EQ(split_endpoint("https://api.x.com").path_prefix, "");
  EXPECT_EQ(code_of([] { split_endpoint("nohost"); }), ErrorCode::ConfigError);
}

TEST(Util, Base64AndFnv) {
  const std::string s = "hello";
  EXPECT_EQ(base64_encode(std::vector<unsigned char>(s.begin(), s.end())), "aGVsbG8=");
  EXPECT_EQ(base64_encode(std::vector<unsigned char>{}), "");
  Fnv1a h;
  h.update("a");
  // FNV-1a 64-bit of "a"
  EXPECT_EQ(h.digest(), 0xaf63dc4c8601ec8cULL);
}
