#include <doctest.h>

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <mutex>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "ruleprompt/llm_gateway.hpp"
#include "support.hpp"

using namespace ruleprompt;
using nlohmann::json;

namespace {

std::string completion_body(const std::string& content) {
  return json{{"choices", json::array({{{"index", 0}, {"message", {{"role", "assistant"}, {"content", content}}}}})}}
      .dump();
}

// Loopback chat-completions stub with scripted behavior per test.
class StubServer {
 public:
  explicit StubServer(httplib::Server::Handler handler) {
    server_.Post("/v1/chat/completions", std::move(handler));
    server_.Post("/prefix/v1/chat/completions", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(completion_body("prefixed"), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~StubServer() {
    server_.stop();
    thread_.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

EndpointConfig fast_config(const std::string& url) {
  EndpointConfig cfg;
  cfg.base_url = url;
  cfg.timeout_seconds = 2.0;
  cfg.backoff_initial_seconds = 0.01;
  return cfg;
}

RenderedPrompt tiny_prompt(const std::string& block = "Sensor 1: abs_z = 3.5") {
  return compose_prompt(PromptModules{"R", "C", "N", "S 3.0", "O"}, {}, block);
}

struct ScopedUnsetKey {
  ScopedUnsetKey() {
    if (const char* v = std::getenv(kApiKeyEnvVar)) saved = v;
    ::unsetenv(kApiKeyEnvVar);
  }
  ~ScopedUnsetKey() {
    if (!saved.empty()) ::setenv(kApiKeyEnvVar, saved.c_str(), 1);
  }
  std::string saved;
};

}  // namespace

TEST_CASE("send_chat: echo") {
  std::mutex mu;
  json seen;
  StubServer stub([&](const httplib::Request& req, httplib::Response& res) {
    std::lock_guard lock(mu);
    seen = json::parse(req.body);
    res.set_content(completion_body("anomaly"), "application/json");
  });
  EndpointConfig cfg = fast_config(stub.url());
  cfg.model_name = "test-model";
  const RenderedPrompt p = tiny_prompt();
  const ChatExchange ex = send_chat(cfg, p);
  CHECK(ex.ok());
  CHECK(ex.reply_text == "anomaly");
  CHECK(ex.attempts == 1);
  CHECK(ex.http_code == 200);
  CHECK(ex.prompt_tokens == p.token_count);
  CHECK(ex.latency_seconds >= 0.0);
  std::lock_guard lock(mu);
  CHECK(seen["model"] == "test-model");
  CHECK(seen["temperature"] == 0.0);
  CHECK(seen["messages"][0]["role"] == "user");
  CHECK(seen["messages"][0]["content"] == p.text);
}

TEST_CASE("send_chat: base url with a path prefix") {
  StubServer stub([](const httplib::Request&, httplib::Response& res) { res.status = 404; });
  const ChatExchange ex = send_chat(fast_config(stub.url() + "/prefix/"), tiny_prompt());
  CHECK(ex.ok());
  CHECK(ex.reply_text == "prefixed");
}

TEST_CASE("send_chat: 500 three times exhausts two retries") {
  std::atomic<int> calls{0};
  StubServer stub([&](const httplib::Request&, httplib::Response& res) {
    ++calls;
    res.status = 500;
  });
  EndpointConfig cfg = fast_config(stub.url());
  cfg.max_retries = 2;
  const ChatExchange ex = send_chat(cfg, tiny_prompt());
  CHECK(ex.status == TransportStatus::HttpError);
  CHECK(ex.http_code == 500);
  CHECK(ex.attempts == 3);
  CHECK(calls.load() == 3);
  CHECK(ex.reply_text.empty());
}

TEST_CASE("send_chat: recovers when a retry succeeds") {
  std::atomic<int> calls{0};
  StubServer stub([&](const httplib::Request&, httplib::Response& res) {
    if (++calls < 2) {
      res.status = 503;
      return;
    }
    res.set_content(completion_body("normal"), "application/json");
  });
  const ChatExchange ex = send_chat(fast_config(stub.url()), tiny_prompt());
  CHECK(ex.ok());
  CHECK(ex.attempts == 2);
  CHECK(ex.reply_text == "normal");
}

TEST_CASE("send_chat: 4xx is not retried") {
  std::atomic<int> calls{0};
  StubServer stub([&](const httplib::Request&, httplib::Response& res) {
    ++calls;
    res.status = 400;
  });
  const ChatExchange ex = send_chat(fast_config(stub.url()), tiny_prompt());
  CHECK(ex.status == TransportStatus::HttpError);
  CHECK(ex.http_code == 400);
  CHECK(calls.load() == 1);
}

TEST_CASE("send_chat: non-conforming body") {
  StubServer stub([](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"choices": []})", "application/json");
  });
  const ChatExchange ex = send_chat(fast_config(stub.url()), tiny_prompt());
  CHECK(ex.status == TransportStatus::ParseError);
  CHECK(ex.reply_text.empty());
}

TEST_CASE("send_chat: API key handling") {
  ScopedUnsetKey guard;
  std::mutex mu;
  std::string auth;
  StubServer stub([&](const httplib::Request& req, httplib::Response& res) {
    std::lock_guard lock(mu);
    auth = req.get_header_value("Authorization");
    if (auth != "Bearer sekrit") {
      res.status = 401;
      return;
    }
    res.set_content(completion_body("normal"), "application/json");
  });

  EndpointConfig cfg = fast_config(stub.url());
  CHECK(send_chat(cfg, tiny_prompt()).status == TransportStatus::MissingApiKey);

  ::setenv(kApiKeyEnvVar, "sekrit", 1);
  CHECK(send_chat(cfg, tiny_prompt()).ok());
  ::unsetenv(kApiKeyEnvVar);

  cfg.api_key = "sekrit";
  CHECK(send_chat(cfg, tiny_prompt()).ok());
  cfg.api_key = "wrong";
  const ChatExchange ex = send_chat(cfg, tiny_prompt());
  CHECK(ex.status == TransportStatus::HttpError);
  CHECK(ex.http_code == 401);
}

TEST_CASE("send_chat: timeout and refused connection") {
  StubServer stub([](const httplib::Request&, httplib::Response& res) {
    std::this_thread::sleep_for(std::chrono::milliseconds(800));
    res.set_content(completion_body("late"), "application/json");
  });
  EndpointConfig cfg = fast_config(stub.url());
  cfg.timeout_seconds = 0.2;
  cfg.max_retries = 1;
  const auto start = std::chrono::steady_clock::now();
  const ChatExchange ex = send_chat(cfg, tiny_prompt());
  const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  CHECK(ex.status == TransportStatus::Timeout);
  CHECK(ex.attempts == 2);
  CHECK(elapsed < cfg.timeout_seconds * 2 * 3 + 0.5);

  EndpointConfig dead = fast_config("http://127.0.0.1:1");
  dead.max_retries = 0;
  const ChatExchange refused = send_chat(dead, tiny_prompt());
  CHECK_FALSE(refused.ok());
  CHECK(refused.reply_text.empty());
}

TEST_CASE("EndpointConfig validation") {
  EndpointConfig cfg;
  cfg.timeout_seconds = 0.0;
  CHECK(rptest::error_kind_of([&] { cfg.validate(); }) == ErrorKind::ConfigError);
  cfg.timeout_seconds = 1.0;
  cfg.max_retries = -1;
  CHECK(rptest::error_kind_of([&] { cfg.validate(); }) == ErrorKind::ConfigError);
}

TEST_CASE("extract_reply_content") {
  CHECK(extract_reply_content(completion_body("hi")) == std::optional<std::string>("hi"));
  CHECK_FALSE(extract_reply_content("{").has_value());
  CHECK_FALSE(extract_reply_content(R"({"choices":[{"message":{"content":3}}]})").has_value());
}

TEST_CASE("simulate_response: perfect and inverted oracles") {
  const RenderedPrompt p = tiny_prompt("Sensor 1: abs_z = 0.2\nSensor 2: abs_z = 3.5");
  SimulatedResponderConfig cfg{RuleConfig{}, 1.0, ResponderVerbosity::LabelPlusExplanation, 0};
  const ChatExchange a = simulate_response(cfg, p, 0);
  CHECK(a.reply_text == "anomaly\nSensor 2: abs_z = 3.5 exceeds 3.0");
  CHECK(a.latency_seconds == 0.0);
  CHECK(a.ok());

  cfg.fidelity = 0.0;
  CHECK(simulate_response(cfg, p, 0).reply_text.rfind("normal", 0) == 0);

  cfg.verbosity = ResponderVerbosity::LabelOnly;
  CHECK(simulate_response(cfg, p, 0).reply_text == "normal");
}

TEST_CASE("simulate_response: binomial agreement at fidelity 0.9") {
  const RenderedPrompt p = tiny_prompt("Sensor 1: abs_z = 3.5");
  SimulatedResponderConfig cfg{RuleConfig{}, 0.9, ResponderVerbosity::LabelOnly, 2024};
  int agree = 0;
  for (std::size_t i = 0; i < 1000; ++i) agree += simulate_response(cfg, p, i).reply_text == "anomaly";
  CHECK(agree >= 870);
  CHECK(agree <= 930);
}

TEST_CASE("simulate_response: determinism and value-only blocks") {
  const RenderedPrompt p = tiny_prompt("Sensor 1: abs_z = 2.9\nSensor 2: abs_z = 1.0");
  SimulatedResponderConfig cfg{RuleConfig{}, 0.5, ResponderVerbosity::LabelPlusExplanation, 7};
  for (std::size_t i = 0; i < 50; ++i) {
    CHECK(simulate_response(cfg, p, i).reply_text == simulate_response(cfg, p, i).reply_text);
  }
  CHECK(rptest::error_kind_of([&] { simulate_response(cfg, tiny_prompt("Sensor 1: value = 1.0000"), 0); }) ==
        ErrorKind::UnparseableValueBlock);
  cfg.fidelity = 1.5;
  CHECK(rptest::error_kind_of([&] { simulate_response(cfg, p, 0); }) == ErrorKind::ConfigError);
}

TEST_CASE("parse_abs_z_lines") {
  const auto z = parse_abs_z_lines("Sensor 3: value = 1.0, abs_z = 2.5\nnoise\nSensor 10: abs_z = 0.0");
  REQUIRE(z.size() == 2);
  CHECK(z[0].id == 2);
  CHECK(z[0].abs_z == 2.5);
  CHECK(z[0].text == "2.5");
  CHECK(z[1].id == 9);
}
