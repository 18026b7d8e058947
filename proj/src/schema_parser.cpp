#include "ruleprompt/schema_parser.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <iterator>

namespace ruleprompt {

std::string_view to_string(ParseStatus status) {
  switch (status) {
    case ParseStatus::Ok: return "ok";
    case ParseStatus::MissingLabel: return "missing_label";
    case ParseStatus::EmptyReply: return "empty_reply";
  }
  return "?";
}

namespace {

bool is_word_char(char c) {
  const auto u = static_cast<unsigned char>(c);
  return std::isalnum(u) || c == '_';
}

char lower(char c) { return static_cast<char>(std::tolower(static_cast<unsigned char>(c))); }

bool matches_at(std::string_view text, std::size_t pos, std::string_view word) {
  if (pos + word.size() > text.size()) return false;
  for (std::size_t i = 0; i < word.size(); ++i) {
    if (lower(text[pos + i]) != word[i]) return false;
  }
  const bool left_ok = pos == 0 || !is_word_char(text[pos - 1]);
  const bool right_ok = pos + word.size() == text.size() || !is_word_char(text[pos + word.size()]);
  return left_ok && right_ok;
}

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

}  // namespace

std::vector<SensorId> extract_sensor_citations(std::string_view text) {
  static constexpr std::string_view kWord = "sensor";
  std::vector<SensorId> ids;
  for (std::size_t pos = 0; pos < text.size(); ++pos) {
    if (!matches_at(text, pos, kWord)) continue;
    std::size_t p = pos + kWord.size();
    if (p >= text.size() || (text[p] != ' ' && text[p] != '\t')) continue;
    while (p < text.size() && (text[p] == ' ' || text[p] == '\t')) ++p;
    std::size_t end = p;
    while (end < text.size() && std::isdigit(static_cast<unsigned char>(text[end]))) ++end;
    if (end == p || (end < text.size() && is_word_char(text[end]))) continue;
    unsigned long long number = 0;
    const auto [ptr, ec] = std::from_chars(text.data() + p, text.data() + end, number);
    if (ec != std::errc() || number == 0) continue;
    ids.push_back(static_cast<SensorId>(number - 1));
    pos = end - 1;
  }
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

ParseOutcome parse_response(std::string_view reply) {
  ParseOutcome outcome;
  std::string cleaned;
  cleaned.reserve(reply.size());
  for (char c : reply) {
    if (c != '*' && c != '`') cleaned += c;
  }
  const std::string_view text = trim(cleaned);
  if (text.empty()) {
    outcome.status = ParseStatus::EmptyReply;
    return outcome;
  }

  static constexpr std::pair<std::string_view, Label> kKeywords[] = {
      {"normal", Label::Nominal},
      {"anomaly", Label::Anomaly},
      {"anomalous", Label::Anomaly},
  };
  for (std::size_t pos = 0; pos < text.size(); ++pos) {
    for (const auto& [word, label] : kKeywords) {
      if (!matches_at(text, pos, word)) continue;
      ParsedVerdict v;
      v.label = label;
      v.raw_reply = std::string(reply);
      const auto eol = text.find('\n', pos + word.size());
      if (eol != std::string_view::npos) v.explanation = std::string(trim(text.substr(eol + 1)));
      v.cited_sensor_ids = extract_sensor_citations(v.explanation);
      outcome.status = ParseStatus::Ok;
      outcome.verdict = std::move(v);
      return outcome;
    }
  }
  outcome.status = ParseStatus::MissingLabel;
  return outcome;
}

AdherenceReport check_rule_adherence(const ParsedVerdict& verdict, const ZScoreVector& z, const RuleConfig& rule) {
  const RuleVerdict truth = apply_rule(z, rule);
  AdherenceReport report;
  report.label_matches_rule = verdict.label == truth.label;

  const auto& cited = verdict.cited_sensor_ids;
  const auto& flagged = truth.flagged_ids;
  std::vector<SensorId> both;
  std::set_intersection(cited.begin(), cited.end(), flagged.begin(), flagged.end(), std::back_inserter(both));
  if (!cited.empty()) report.citations_valid = static_cast<double>(both.size()) / static_cast<double>(cited.size());
  if (!flagged.empty()) {
    report.citations_complete = static_cast<double>(both.size()) / static_cast<double>(flagged.size());
  }
  return report;
}

}  // namespace ruleprompt
