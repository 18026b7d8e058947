#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ruleprompt/promptkit.hpp"
#include "ruleprompt/telemetry.hpp"

namespace ruleprompt {

inline constexpr const char* kApiKeyEnvVar = "RULEPROMPT_API_KEY";

/// A chat-completions endpoint (OpenAI wire format).
struct EndpointConfig {
  std::string base_url = "http://127.0.0.1:8000";
  std::string model_name = "gpt-oss-20b";
  std::optional<std::string> api_key;
  double timeout_seconds = 120.0;
  int max_retries = 2;
  double temperature = 0.0;
  /// Backoff before retry n (1-based) is backoff_initial_seconds * 2^(n-1).
  double backoff_initial_seconds = 0.5;

  void validate() const;
};

enum class TransportStatus { Ok, Timeout, HttpError, ParseError, ConnectionFailed, MissingApiKey };

std::string_view to_string(TransportStatus status);

struct ChatExchange {
  std::string prompt_text;
  std::string reply_text;
  std::size_t prompt_tokens = 0;
  double latency_seconds = 0.0;
  TransportStatus status = TransportStatus::Ok;
  /// HTTP status of the last attempt, 0 when no response arrived.
  int http_code = 0;
  int attempts = 0;
  std::string error_message;

  bool ok() const noexcept { return status == TransportStatus::Ok; }
};

/// Config key if set, else the RULEPROMPT_API_KEY environment variable.
std::optional<std::string> resolve_api_key(const EndpointConfig& cfg);

/// Request body: {model, messages:[{role:"user", content}], temperature}.
std::string build_chat_request(const EndpointConfig& cfg, std::string_view prompt_text);

/// choices[0].message.content, or nullopt when the body does not conform.
std::optional<std::string> extract_reply_content(std::string_view body);

/// POST <base_url>/v1/chat/completions. Timeouts, connection failures and 5xx
/// responses are retried up to max_retries times with exponential backoff;
/// 4xx responses are final. Never throws for transport problems.
ChatExchange send_chat(const EndpointConfig& cfg, const RenderedPrompt& prompt);

enum class ResponderVerbosity { LabelOnly, LabelPlusExplanation };

std::string_view to_string(ResponderVerbosity verbosity);
/// Accepts "label", "explain".
ResponderVerbosity responder_verbosity_from_string(std::string_view text);

struct SimulatedResponderConfig {
  RuleConfig rule;
  /// Probability of emitting the rule-correct label.
  double fidelity = 1.0;
  ResponderVerbosity verbosity = ResponderVerbosity::LabelPlusExplanation;
  std::uint64_t seed = 0;

  void validate() const;
};

struct ParsedZScore {
  SensorId id = 0;
  double abs_z = 0.0;
  std::string text;
};

/// "abs_z = <z>" entries of "Sensor <n>: ..." lines, in text order.
std::vector<ParsedZScore> parse_abs_z_lines(std::string_view block);

/// Offline stand-in for a model: reads abs_z back out of the prompt's value
/// block, applies the rule, and answers correctly with probability
/// `fidelity`. Output depends only on (cfg, prompt text, sample_index).
/// Throws UnparseableValueBlock when the block carries no abs_z fields.
ChatExchange simulate_response(const SimulatedResponderConfig& cfg, const RenderedPrompt& prompt,
                               std::size_t sample_index);

}  // namespace ruleprompt
