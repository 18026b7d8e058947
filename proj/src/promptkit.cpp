#include "ruleprompt/promptkit.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "default_templates.hpp"
#include "ruleprompt/error.hpp"

namespace ruleprompt {

std::string_view to_string(ValueBlockStyle style) {
  switch (style) {
    case ValueBlockStyle::ValueOnly: return "value";
    case ValueBlockStyle::MeanStdValue: return "meanstd";
    case ValueBlockStyle::MeanStdValueZ: return "meanstdz";
    case ValueBlockStyle::ZScoreOnly: return "zscore";
  }
  return "?";
}

ValueBlockStyle value_block_style_from_string(std::string_view text) {
  if (text == "value" || text == "setup1") return ValueBlockStyle::ValueOnly;
  if (text == "meanstd" || text == "setup2") return ValueBlockStyle::MeanStdValue;
  if (text == "meanstdz" || text == "setup3") return ValueBlockStyle::MeanStdValueZ;
  if (text == "zscore" || text == "setup4") return ValueBlockStyle::ZScoreOnly;
  throw Error(ErrorKind::ConfigError,
              fmt::format("unknown value-block style '{}' (expected value|meanstd|meanstdz|zscore)", text));
}

std::string_view to_string(PromptParadigm paradigm) {
  switch (paradigm) {
    case PromptParadigm::ZeroShot: return "zero";
    case PromptParadigm::FewShot: return "few";
    case PromptParadigm::ICL: return "icl";
  }
  return "?";
}

PromptParadigm prompt_paradigm_from_string(std::string_view text) {
  if (text == "zero" || text == "zero-shot") return PromptParadigm::ZeroShot;
  if (text == "few" || text == "few-shot") return PromptParadigm::FewShot;
  if (text == "icl") return PromptParadigm::ICL;
  throw Error(ErrorKind::ConfigError, fmt::format("unknown paradigm '{}' (expected zero|few|icl)", text));
}

std::string_view to_string(PromptSection section) {
  switch (section) {
    case PromptSection::Role: return "role";
    case PromptSection::Context: return "context";
    case PromptSection::Normalization: return "normalization";
    case PromptSection::Rule: return "rule";
    case PromptSection::Exemplars: return "exemplars";
    case PromptSection::Values: return "values";
    case PromptSection::OutputSchema: return "output_schema";
  }
  return "?";
}

std::string format_threshold(double tau) {
  if (std::isfinite(tau) && tau == std::floor(tau) && std::abs(tau) < 1e15) return fmt::format("{:.1f}", tau);
  return fmt::format("{}", tau);
}

std::string format_abs_z(double abs_z, int decimals) {
  if (decimals < 0 || decimals > 15) {
    throw Error(ErrorKind::InvalidArgument, fmt::format("abs_z decimals out of range: {}", decimals));
  }
  double scale = 1.0;
  std::uint64_t divisor = 1;
  for (int i = 0; i < decimals; ++i) {
    scale *= 10.0;
    divisor *= 10;
  }
  if (!std::isfinite(abs_z) || abs_z * scale >= 1e15) return fmt::format("{:.{}f}", abs_z, decimals);

  // Largest t with t / scale <= abs_z, judged in double arithmetic, which is
  // how a reader parsing the text would compare it.
  double t = std::floor(abs_z * scale);
  while (t > 0.0 && t / scale > abs_z) t -= 1.0;
  while ((t + 1.0) / scale <= abs_z) t += 1.0;

  const auto units = static_cast<std::uint64_t>(t);
  if (decimals == 0) return fmt::format("{}", units);
  return fmt::format("{}.{:0{}}", units / divisor, units % divisor, decimals);
}

std::string render_value_block(const Snapshot& x, const SensorStats& stats, const ZScoreVector& z,
                               const ValueBlockFormat& format, std::span<const SensorMeta> metas) {
  const std::size_t n = x.size();
  if (stats.means.size() != n || stats.stds.size() != n || z.size() != n || metas.size() != n) {
    throw Error(ErrorKind::ShapeMismatch,
                fmt::format("value block inputs disagree: {} values, {} means, {} stds, {} z-scores, {} sensors", n,
                            stats.means.size(), stats.stds.size(), z.size(), metas.size()));
  }

  std::string out;
  out.reserve(n * 48);
  for (std::size_t i = 0; i < n; ++i) {
    if (i > 0) out += '\n';
    out += metas[i].name;
    out += ": ";
    switch (format.style) {
      case ValueBlockStyle::ValueOnly:
        out += fmt::format("value = {:.{}f}", x.values[i], format.value_decimals);
        break;
      case ValueBlockStyle::MeanStdValue:
        out += fmt::format("value = {:.{}f}, mean = {:.{}f}, std = {:.{}f}", x.values[i], format.value_decimals,
                           stats.means[i], format.stat_decimals, stats.stds[i], format.stat_decimals);
        break;
      case ValueBlockStyle::MeanStdValueZ:
        out += fmt::format("value = {:.{}f}, mean = {:.{}f}, std = {:.{}f}, abs_z = {}", x.values[i],
                           format.value_decimals, stats.means[i], format.stat_decimals, stats.stds[i],
                           format.stat_decimals, format_abs_z(z.abs_z[i], format.z_decimals));
        break;
      case ValueBlockStyle::ZScoreOnly:
        out += "abs_z = ";
        out += format_abs_z(z.abs_z[i], format.z_decimals);
        break;
    }
  }
  return out;
}

void PromptModules::validate(const RuleConfig& rule) const {
  const std::pair<std::string_view, const std::string*> parts[] = {
      {"role", &role_text},
      {"context", &context_text},
      {"normalization", &normalization_text},
      {"rule", &rule_text},
      {"output_schema", &output_schema_text},
  };
  for (const auto& [name, text] : parts) {
    if (text->find_first_not_of(" \t\r\n") == std::string::npos) {
      throw Error(ErrorKind::EmptyModule, fmt::format("prompt module '{}' is empty", name));
    }
  }
  const std::string tau = format_threshold(rule.tau);
  if (rule_text.find(tau) == std::string::npos) {
    throw Error(ErrorKind::EmptyModule, fmt::format("rule module does not state the threshold {}", tau));
  }
}

namespace {

std::string trim_trailing(std::string text) {
  while (!text.empty() && std::isspace(static_cast<unsigned char>(text.back()))) text.pop_back();
  return text;
}

std::string substitute_tau(std::string text, const RuleConfig& rule) {
  static constexpr std::string_view kPlaceholder = "{tau}";
  const std::string tau = format_threshold(rule.tau);
  for (auto pos = text.find(kPlaceholder); pos != std::string::npos; pos = text.find(kPlaceholder, pos)) {
    text.replace(pos, kPlaceholder.size(), tau);
    pos += tau.size();
  }
  return text;
}

std::string read_template(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, fmt::format("cannot read template '{}'", path.string()));
  std::ostringstream buf;
  buf << in.rdbuf();
  return trim_trailing(buf.str());
}

}  // namespace

PromptModules default_modules(const RuleConfig& rule) {
  PromptModules m{
      trim_trailing(detail::kDefaultRole),
      trim_trailing(detail::kDefaultContext),
      trim_trailing(detail::kDefaultNormalization),
      substitute_tau(trim_trailing(detail::kDefaultRule), rule),
      trim_trailing(detail::kDefaultOutputSchema),
  };
  m.validate(rule);
  return m;
}

PromptModules load_modules(const std::filesystem::path& dir, const RuleConfig& rule) {
  PromptModules m{
      read_template(dir / "role.txt"),
      read_template(dir / "context.txt"),
      read_template(dir / "normalization.txt"),
      substitute_tau(read_template(dir / "rule.txt"), rule),
      read_template(dir / "output_schema.txt"),
  };
  m.validate(rule);
  return m;
}

std::string_view RenderedPrompt::section(PromptSection s) const {
  auto it = section_offsets.find(s);
  if (it == section_offsets.end()) return {};
  return std::string_view(text).substr(it->second.begin, it->second.end - it->second.begin);
}

RenderedPrompt compose_prompt(const PromptModules& modules, std::span<const Exemplar> exemplars,
                              std::string_view value_block) {
  for (const auto* text : {&modules.role_text, &modules.context_text, &modules.normalization_text,
                           &modules.rule_text, &modules.output_schema_text}) {
    if (text->empty()) throw Error(ErrorKind::EmptyModule, "prompt module is empty");
  }
  if (value_block.empty()) throw Error(ErrorKind::EmptyModule, "value block is empty");

  RenderedPrompt prompt;
  auto append = [&](PromptSection section, std::string_view body) {
    if (!prompt.text.empty()) prompt.text += "\n\n";
    const std::size_t begin = prompt.text.size();
    prompt.text += body;
    prompt.section_offsets[section] = {begin, prompt.text.size()};
  };

  append(PromptSection::Role, modules.role_text);
  append(PromptSection::Context, modules.context_text);
  append(PromptSection::Normalization, modules.normalization_text);
  append(PromptSection::Rule, modules.rule_text);
  if (!exemplars.empty()) {
    std::string section = "Labeled examples:";
    for (std::size_t i = 0; i < exemplars.size(); ++i) {
      section += fmt::format("\n\nExample {}:\n{}\nLabel: {}", i + 1, exemplars[i].value_block,
                             to_string(exemplars[i].label));
      if (!exemplars[i].rationale.empty()) {
        section += '\n';
        section += exemplars[i].rationale;
      }
    }
    section += "\n\nNow assess the following snapshot.";
    append(PromptSection::Exemplars, section);
  }
  append(PromptSection::Values, value_block);
  append(PromptSection::OutputSchema, modules.output_schema_text);
  prompt.token_count = count_tokens(prompt.text);
  return prompt;
}

std::string exemplar_rationale(const ZScoreVector& z, const RuleConfig& rule, int z_decimals) {
  const RuleVerdict verdict = apply_rule(z, rule);
  const std::string tau = format_threshold(rule.tau);
  if (verdict.flagged_ids.empty()) return fmt::format("All abs_z values are below {}.", tau);
  std::string out;
  for (SensorId id : verdict.flagged_ids) {
    if (!out.empty()) out += '\n';
    out += fmt::format("{}: abs_z = {} exceeds {}", sensor_display_name(id), format_abs_z(z.abs_z[id], z_decimals),
                       tau);
  }
  return out;
}

namespace {

Exemplar make_exemplar(const DatasetSplit& dataset, const LabeledSample& sample, const ValueBlockFormat& format,
                       std::span<const SensorMeta> metas) {
  const ZScoreVector z = normalize(sample.snapshot, dataset.stats, dataset.rule);
  return {render_value_block(sample.snapshot, dataset.stats, z, format, metas), sample.label,
          exemplar_rationale(z, dataset.rule, format.z_decimals)};
}

std::vector<std::size_t> permutation(std::size_t n, RandomStream& rng) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.uniform_index(i)]);
  return order;
}

}  // namespace

std::vector<Exemplar> attach_exemplars(const DatasetSplit& dataset, PromptParadigm paradigm,
                                       const ValueBlockFormat& format, RandomStream& rng) {
  if (paradigm == PromptParadigm::ZeroShot) return {};

  std::vector<const LabeledSample*> nominal;
  std::vector<const LabeledSample*> anomaly;
  for (const auto& s : dataset.train) (s.label == Label::Anomaly ? anomaly : nominal).push_back(&s);

  const std::size_t want_nominal = paradigm == PromptParadigm::FewShot ? 1 : 2;
  const std::size_t want_anomaly = paradigm == PromptParadigm::FewShot ? 1 : 3;
  if (nominal.size() < want_nominal || anomaly.size() < want_anomaly) {
    throw Error(ErrorKind::InsufficientExemplars,
                fmt::format("training split has {} nominal and {} anomalous samples; {} needs {} and {}",
                            nominal.size(), anomaly.size(), to_string(paradigm), want_nominal, want_anomaly));
  }

  std::vector<const LabeledSample*> picked;
  for (std::size_t idx : permutation(nominal.size(), rng)) {
    if (picked.size() == want_nominal) break;
    picked.push_back(nominal[idx]);
  }

  // Prefer anomalies whose flagged-sensor sets differ pairwise.
  std::vector<const LabeledSample*> anomalies;
  std::set<std::vector<SensorId>> seen;
  const auto order = permutation(anomaly.size(), rng);
  for (std::size_t idx : order) {
    if (anomalies.size() == want_anomaly) break;
    if (seen.insert(anomaly[idx]->flagged_ids).second) anomalies.push_back(anomaly[idx]);
  }
  for (std::size_t idx : order) {
    if (anomalies.size() == want_anomaly) break;
    if (std::find(anomalies.begin(), anomalies.end(), anomaly[idx]) == anomalies.end()) {
      anomalies.push_back(anomaly[idx]);
    }
  }
  picked.insert(picked.end(), anomalies.begin(), anomalies.end());

  if (paradigm == PromptParadigm::ICL) {
    const auto shuffled = permutation(picked.size(), rng);
    std::vector<const LabeledSample*> reordered;
    for (std::size_t idx : shuffled) reordered.push_back(picked[idx]);
    picked = std::move(reordered);
  }

  const auto metas = make_sensor_set(dataset.sensor_count());
  std::vector<Exemplar> out;
  out.reserve(picked.size());
  for (const auto* s : picked) out.push_back(make_exemplar(dataset, *s, format, metas));
  return out;
}

std::size_t count_tokens(std::string_view text) noexcept {
  std::size_t tokens = 0;
  bool in_run = false;
  for (char ch : text) {
    const bool alnum = (ch >= 'a' && ch <= 'z') || (ch >= 'A' && ch <= 'Z') || (ch >= '0' && ch <= '9');
    if (alnum) {
      if (!in_run) ++tokens;
      in_run = true;
    } else {
      in_run = false;
      if (!std::isspace(static_cast<unsigned char>(ch))) ++tokens;
    }
  }
  return tokens;
}

}  // namespace ruleprompt
