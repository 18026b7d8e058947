#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ruleprompt/datagen.hpp"
#include "ruleprompt/random.hpp"
#include "ruleprompt/telemetry.hpp"

namespace ruleprompt {

/// The four value-block encodings. ZScoreOnly is the framework default.
enum class ValueBlockStyle { ValueOnly, MeanStdValue, MeanStdValueZ, ZScoreOnly };

std::string_view to_string(ValueBlockStyle style);
/// Accepts "value", "meanstd", "meanstdz", "zscore".
ValueBlockStyle value_block_style_from_string(std::string_view text);

struct ValueBlockFormat {
  ValueBlockStyle style = ValueBlockStyle::ZScoreOnly;
  int value_decimals = 4;
  int stat_decimals = 4;
  int z_decimals = 1;
};

/// Role (R), context (C), normalization (N), rule (S) and output schema (O) texts.
struct PromptModules {
  std::string role_text;
  std::string context_text;
  std::string normalization_text;
  std::string rule_text;
  std::string output_schema_text;

  /// Every module must be non-empty and the rule text must state tau.
  void validate(const RuleConfig& rule) const;
};

/// Built-in module texts with {tau} substituted.
PromptModules default_modules(const RuleConfig& rule);

/// Reads role.txt, context.txt, normalization.txt, rule.txt and
/// output_schema.txt from `dir`, substituting {tau} in rule.txt.
PromptModules load_modules(const std::filesystem::path& dir, const RuleConfig& rule);

/// Threshold as it appears in prompts and replies ("3.0", "2.5", "3.25").
std::string format_threshold(double tau);

/// abs_z for display, truncated toward zero so that reading the text back
/// never moves a value across a threshold with at most `decimals` places.
std::string format_abs_z(double abs_z, int decimals);

std::string render_value_block(const Snapshot& x, const SensorStats& stats, const ZScoreVector& z,
                               const ValueBlockFormat& format, std::span<const SensorMeta> metas);

struct Exemplar {
  std::string value_block;
  Label label = Label::Nominal;
  std::string rationale;
};

enum class PromptSection { Role, Context, Normalization, Rule, Exemplars, Values, OutputSchema };

std::string_view to_string(PromptSection section);

struct TextSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
};

struct RenderedPrompt {
  std::string text;
  std::size_t token_count = 0;
  std::map<PromptSection, TextSpan> section_offsets;

  std::string_view section(PromptSection s) const;
};

RenderedPrompt compose_prompt(const PromptModules& modules, std::span<const Exemplar> exemplars,
                              std::string_view value_block);

enum class PromptParadigm { ZeroShot, FewShot, ICL };

std::string_view to_string(PromptParadigm paradigm);
/// Accepts "zero", "few", "icl" (and the long forms "zero-shot", "few-shot").
PromptParadigm prompt_paradigm_from_string(std::string_view text);

/// Rule-derived rationale for an exemplar, in the reply-schema format.
std::string exemplar_rationale(const ZScoreVector& z, const RuleConfig& rule, int z_decimals);

/// ZeroShot: none. FewShot: one nominal and one anomaly. ICL: two nominal and
/// three anomalies with pairwise-distinct flagged-sensor sets where the
/// training split allows. Drawn from the training split only.
std::vector<Exemplar> attach_exemplars(const DatasetSplit& dataset, PromptParadigm paradigm,
                                       const ValueBlockFormat& format, RandomStream& rng);

/// Surrogate token count: maximal [A-Za-z0-9] runs plus every other
/// non-whitespace character.
std::size_t count_tokens(std::string_view text) noexcept;

}  // namespace ruleprompt
