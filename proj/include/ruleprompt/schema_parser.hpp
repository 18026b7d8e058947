#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ruleprompt/telemetry.hpp"

namespace ruleprompt {

struct ParsedVerdict {
  Label label = Label::Nominal;
  std::string explanation;
  /// 0-based ids of the sensors named in the explanation, sorted and unique.
  std::vector<SensorId> cited_sensor_ids;
  std::string raw_reply;

  friend bool operator==(const ParsedVerdict&, const ParsedVerdict&) = default;
};

enum class ParseStatus { Ok, MissingLabel, EmptyReply };

std::string_view to_string(ParseStatus status);

/// Either a verdict or one of the two unparseable outcomes. Unparseable
/// replies are never coerced into a class.
struct ParseOutcome {
  ParseStatus status = ParseStatus::EmptyReply;
  std::optional<ParsedVerdict> verdict;

  bool ok() const noexcept { return status == ParseStatus::Ok; }
};

/// The label is the first standalone (word-boundary) occurrence of "normal",
/// "anomaly" or "anomalous", case-insensitive, after stripping markdown
/// emphasis. The explanation is everything after the line holding it.
ParseOutcome parse_response(std::string_view reply);

/// "Sensor <n>" mentions, converted to 0-based ids.
std::vector<SensorId> extract_sensor_citations(std::string_view text);

struct AdherenceReport {
  bool label_matches_rule = false;
  /// Fraction of cited sensors that the rule flags (1.0 when nothing is cited).
  double citations_valid = 1.0;
  /// Fraction of flagged sensors that are cited (1.0 when nothing is flagged).
  double citations_complete = 1.0;

  friend bool operator==(const AdherenceReport&, const AdherenceReport&) = default;
};

AdherenceReport check_rule_adherence(const ParsedVerdict& verdict, const ZScoreVector& z, const RuleConfig& rule);

}  // namespace ruleprompt
