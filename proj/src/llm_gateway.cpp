#include "ruleprompt/llm_gateway.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <thread>

#include <fmt/format.h>
#include <httplib.h>
#include <nlohmann/json.hpp>

#include "ruleprompt/error.hpp"
#include "ruleprompt/random.hpp"

namespace ruleprompt {

using nlohmann::json;

std::string_view to_string(TransportStatus status) {
  switch (status) {
    case TransportStatus::Ok: return "ok";
    case TransportStatus::Timeout: return "timeout";
    case TransportStatus::HttpError: return "http_error";
    case TransportStatus::ParseError: return "parse_error";
    case TransportStatus::ConnectionFailed: return "connection_failed";
    case TransportStatus::MissingApiKey: return "missing_api_key";
  }
  return "?";
}

void EndpointConfig::validate() const {
  if (base_url.empty()) throw Error(ErrorKind::ConfigError, "endpoint base_url is empty");
  if (!(timeout_seconds > 0.0)) throw Error(ErrorKind::ConfigError, "endpoint timeout must be positive");
  if (max_retries < 0) throw Error(ErrorKind::ConfigError, "max_retries must be >= 0");
  if (backoff_initial_seconds < 0.0) throw Error(ErrorKind::ConfigError, "backoff must be >= 0");
}

std::optional<std::string> resolve_api_key(const EndpointConfig& cfg) {
  if (cfg.api_key && !cfg.api_key->empty()) return cfg.api_key;
  if (const char* env = std::getenv(kApiKeyEnvVar); env != nullptr && *env != '\0') return std::string(env);
  return std::nullopt;
}

std::string build_chat_request(const EndpointConfig& cfg, std::string_view prompt_text) {
  json body = {
      {"model", cfg.model_name},
      {"messages", json::array({{{"role", "user"}, {"content", std::string(prompt_text)}}})},
      {"temperature", cfg.temperature},
  };
  return body.dump();
}

std::optional<std::string> extract_reply_content(std::string_view body) {
  const json doc = json::parse(body, nullptr, /*allow_exceptions=*/false);
  if (doc.is_discarded() || !doc.is_object()) return std::nullopt;
  const auto choices = doc.find("choices");
  if (choices == doc.end() || !choices->is_array() || choices->empty()) return std::nullopt;
  const auto& first = (*choices)[0];
  if (!first.is_object()) return std::nullopt;
  const auto message = first.find("message");
  if (message == first.end() || !message->is_object()) return std::nullopt;
  const auto content = message->find("content");
  if (content == message->end() || !content->is_string()) return std::nullopt;
  return content->get<std::string>();
}

namespace {

struct SplitUrl {
  std::string scheme_host_port;
  std::string path_prefix;
};

SplitUrl split_base_url(std::string url) {
  while (!url.empty() && url.back() == '/') url.pop_back();
  const auto scheme_end = url.find("://");
  const std::size_t host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
  const auto path_start = url.find('/', host_start);
  if (path_start == std::string::npos) return {url, ""};
  return {url.substr(0, path_start), url.substr(path_start)};
}

std::chrono::microseconds to_micros(double seconds) {
  return std::chrono::microseconds(static_cast<std::int64_t>(std::llround(seconds * 1e6)));
}

}  // namespace

ChatExchange send_chat(const EndpointConfig& cfg, const RenderedPrompt& prompt) {
  cfg.validate();
  ChatExchange ex;
  ex.prompt_text = prompt.text;
  ex.prompt_tokens = prompt.token_count;

  const auto [host, prefix] = split_base_url(cfg.base_url);
  const std::string path = prefix + "/v1/chat/completions";
  const std::string body = build_chat_request(cfg, prompt.text);
  const auto api_key = resolve_api_key(cfg);

  httplib::Client client(host);
  if (!client.is_valid()) {
    ex.status = TransportStatus::ConnectionFailed;
    ex.error_message = fmt::format("invalid endpoint url '{}'", cfg.base_url);
    return ex;
  }
  client.set_connection_timeout(to_micros(cfg.timeout_seconds));
  client.set_read_timeout(to_micros(cfg.timeout_seconds));
  client.set_write_timeout(to_micros(cfg.timeout_seconds));
  if (api_key) client.set_bearer_token_auth(*api_key);

  const auto started = std::chrono::steady_clock::now();
  for (int attempt = 0; attempt <= cfg.max_retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(to_micros(cfg.backoff_initial_seconds * std::ldexp(1.0, attempt - 1)));
    }
    ex.attempts = attempt + 1;
    auto res = client.Post(path, body, "application/json");

    if (!res) {
      const auto err = res.error();
      const bool timed_out = err == httplib::Error::Read || err == httplib::Error::ConnectionTimeout ||
                             err == httplib::Error::Write;
      ex.status = timed_out ? TransportStatus::Timeout : TransportStatus::ConnectionFailed;
      ex.http_code = 0;
      ex.error_message = httplib::to_string(err);
      continue;
    }

    ex.http_code = res->status;
    if (res->status >= 500) {
      ex.status = TransportStatus::HttpError;
      ex.error_message = fmt::format("HTTP {}", res->status);
      continue;
    }
    if (res->status >= 400) {
      if ((res->status == 401 || res->status == 403) && !api_key) {
        ex.status = TransportStatus::MissingApiKey;
        ex.error_message = fmt::format("endpoint answered HTTP {}; set {} or pass an API key", res->status,
                                       kApiKeyEnvVar);
      } else {
        ex.status = TransportStatus::HttpError;
        ex.error_message = fmt::format("HTTP {}", res->status);
      }
      break;
    }

    if (auto content = extract_reply_content(res->body)) {
      ex.status = TransportStatus::Ok;
      ex.reply_text = std::move(*content);
      ex.error_message.clear();
    } else {
      ex.status = TransportStatus::ParseError;
      ex.error_message = "response body lacks choices[0].message.content";
    }
    break;
  }
  ex.latency_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  if (!ex.ok()) ex.reply_text.clear();
  return ex;
}

std::string_view to_string(ResponderVerbosity verbosity) {
  return verbosity == ResponderVerbosity::LabelOnly ? "label" : "explain";
}

ResponderVerbosity responder_verbosity_from_string(std::string_view text) {
  if (text == "label") return ResponderVerbosity::LabelOnly;
  if (text == "explain") return ResponderVerbosity::LabelPlusExplanation;
  throw Error(ErrorKind::ConfigError, fmt::format("unknown verbosity '{}' (expected label|explain)", text));
}

void SimulatedResponderConfig::validate() const {
  rule.validate();
  if (!(fidelity >= 0.0 && fidelity <= 1.0)) {
    throw Error(ErrorKind::ConfigError, fmt::format("fidelity must lie in [0, 1], got {}", fidelity));
  }
}

std::vector<ParsedZScore> parse_abs_z_lines(std::string_view block) {
  static constexpr std::string_view kPrefix = "Sensor ";
  static constexpr std::string_view kField = "abs_z = ";
  std::vector<ParsedZScore> out;
  std::size_t start = 0;
  while (start <= block.size()) {
    auto end = block.find('\n', start);
    if (end == std::string_view::npos) end = block.size();
    const std::string_view line = block.substr(start, end - start);
    start = end + 1;

    if (!line.starts_with(kPrefix)) continue;
    std::size_t id_end = kPrefix.size();
    while (id_end < line.size() && line[id_end] >= '0' && line[id_end] <= '9') ++id_end;
    if (id_end == kPrefix.size() || id_end >= line.size() || line[id_end] != ':') continue;
    std::size_t number = 0;
    std::from_chars(line.data() + kPrefix.size(), line.data() + id_end, number);
    if (number == 0) continue;

    const auto field = line.find(kField, id_end);
    if (field == std::string_view::npos) continue;
    const char* first = line.data() + field + kField.size();
    const char* last = line.data() + line.size();
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc()) continue;
    out.push_back({number - 1, value, std::string(first, ptr)});
  }
  return out;
}

ChatExchange simulate_response(const SimulatedResponderConfig& cfg, const RenderedPrompt& prompt,
                               std::size_t sample_index) {
  cfg.validate();
  std::string_view block = prompt.section(PromptSection::Values);
  if (block.empty()) block = prompt.text;

  const auto parsed = parse_abs_z_lines(block);
  if (parsed.empty()) {
    throw Error(ErrorKind::UnparseableValueBlock,
                "the value block has no abs_z fields; the simulated responder can only serve zscore or "
                "meanstdz prompts");
  }

  SensorId max_id = 0;
  for (const auto& p : parsed) max_id = std::max(max_id, p.id);
  ZScoreVector z;
  z.abs_z.assign(max_id + 1, 0.0);
  for (const auto& p : parsed) z.abs_z[p.id] = p.abs_z;
  const RuleVerdict truth = apply_rule(z, cfg.rule);

  RandomStream rng(mix_seed(cfg.seed, sample_index));
  const bool correct = rng.uniform() < cfg.fidelity;
  const Label emitted = correct ? truth.label : (truth.label == Label::Anomaly ? Label::Nominal : Label::Anomaly);

  const std::string tau = format_threshold(cfg.rule.tau);
  std::string reply(to_string(emitted));
  if (cfg.verbosity == ResponderVerbosity::LabelPlusExplanation) {
    if (emitted == Label::Nominal) {
      reply += fmt::format("\nall abs_z below {}", tau);
    } else {
      std::vector<const ParsedZScore*> cited;
      for (const auto& p : parsed) {
        if (flag_sensor(p.abs_z, cfg.rule) == 1) cited.push_back(&p);
      }
      if (cited.empty()) {
        // A wrong "anomaly" call: blame the largest deviation, as a confused model would.
        cited.push_back(&*std::max_element(parsed.begin(), parsed.end(),
                                           [](const auto& a, const auto& b) { return a.abs_z < b.abs_z; }));
      }
      for (const auto* p : cited) {
        reply += fmt::format("\n{}: abs_z = {} exceeds {}", sensor_display_name(p->id), p->text, tau);
      }
    }
  }

  ChatExchange ex;
  ex.prompt_text = prompt.text;
  ex.prompt_tokens = prompt.token_count;
  ex.reply_text = std::move(reply);
  ex.status = TransportStatus::Ok;
  ex.attempts = 1;
  return ex;
}

}  // namespace ruleprompt
