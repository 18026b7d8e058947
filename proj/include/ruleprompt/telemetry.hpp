#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ruleprompt {

using SensorId = std::size_t;

enum class SensorKind { ActiveInjection, ReactiveInjection, ActiveFlow, ReactiveFlow, VoltageMagnitude };

std::string_view to_string(SensorKind kind);

struct SensorMeta {
  SensorId id = 0;
  std::string name;
  SensorKind kind = SensorKind::ActiveInjection;
};

/// Display name for a 0-based sensor id ("Sensor <id+1>").
std::string sensor_display_name(SensorId id);

/// Builds a contiguous sensor set. Kinds are assigned in equal consecutive
/// bands (P, Q, Pf, Qf, V) across the id range.
std::vector<SensorMeta> make_sensor_set(std::size_t count);

struct Snapshot {
  std::vector<double> values;

  std::size_t size() const noexcept { return values.size(); }
  friend bool operator==(const Snapshot&, const Snapshot&) = default;
};

/// Per-sensor nominal statistics. `stds` holds the population standard
/// deviation (divisor N), the control-chart convention.
struct SensorStats {
  std::vector<double> means;
  std::vector<double> stds;
  std::size_t sample_count = 0;

  std::size_t size() const noexcept { return means.size(); }
  friend bool operator==(const SensorStats&, const SensorStats&) = default;
};

struct ZScoreVector {
  std::vector<double> abs_z;

  std::size_t size() const noexcept { return abs_z.size(); }
  friend bool operator==(const ZScoreVector&, const ZScoreVector&) = default;
};

struct RuleConfig {
  double tau = 3.0;
  double epsilon = 1e-9;

  /// Throws InvalidArgument unless tau > 0 and epsilon > 0.
  void validate() const;
  friend bool operator==(const RuleConfig&, const RuleConfig&) = default;
};

enum class Label { Nominal, Anomaly };

/// "normal" / "anomaly", the textual forms used in prompts and replies.
std::string_view to_string(Label label);
std::optional<Label> label_from_string(std::string_view text);

struct RuleVerdict {
  Label label = Label::Nominal;
  std::vector<SensorId> flagged_ids;

  friend bool operator==(const RuleVerdict&, const RuleVerdict&) = default;
};

/// Throws ShapeMismatch / InvalidArgument when the snapshot is ragged or non-finite.
void check_snapshot(const Snapshot& x, std::size_t expected_size);

SensorStats estimate_stats(std::span<const Snapshot> samples);

ZScoreVector normalize(const Snapshot& x, const SensorStats& stats, const RuleConfig& cfg);

/// Three-sigma flag. The boundary is inclusive: abs_z == tau flags.
constexpr int flag_sensor(double abs_z, const RuleConfig& cfg) noexcept { return abs_z >= cfg.tau ? 1 : 0; }

RuleVerdict apply_rule(const ZScoreVector& z, const RuleConfig& cfg);

/// Convenience: normalize then apply the rule.
RuleVerdict evaluate_snapshot(const Snapshot& x, const SensorStats& stats, const RuleConfig& cfg);

/// FNV-1a over the bit patterns of the values; used for leakage and disjointness audits.
std::uint64_t content_hash(const Snapshot& x) noexcept;

}  // namespace ruleprompt
