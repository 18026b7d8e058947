#include "ruleprompt/telemetry.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "ruleprompt/error.hpp"
#include "ruleprompt/hashing.hpp"

namespace ruleprompt {

std::string_view to_string(SensorKind kind) {
  switch (kind) {
    case SensorKind::ActiveInjection: return "P";
    case SensorKind::ReactiveInjection: return "Q";
    case SensorKind::ActiveFlow: return "Pf";
    case SensorKind::ReactiveFlow: return "Qf";
    case SensorKind::VoltageMagnitude: return "V";
  }
  return "?";
}

std::string sensor_display_name(SensorId id) { return fmt::format("Sensor {}", id + 1); }

std::vector<SensorMeta> make_sensor_set(std::size_t count) {
  std::vector<SensorMeta> metas;
  metas.reserve(count);
  for (SensorId id = 0; id < count; ++id) {
    const auto band = static_cast<int>(id * 5 / count);
    metas.push_back({id, sensor_display_name(id), static_cast<SensorKind>(band)});
  }
  return metas;
}

void RuleConfig::validate() const {
  if (!(tau > 0.0) || !std::isfinite(tau)) {
    throw Error(ErrorKind::InvalidArgument, fmt::format("tau must be positive, got {}", tau));
  }
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) {
    throw Error(ErrorKind::InvalidArgument, fmt::format("epsilon must be positive, got {}", epsilon));
  }
}

std::string_view to_string(Label label) { return label == Label::Anomaly ? "anomaly" : "normal"; }

std::optional<Label> label_from_string(std::string_view text) {
  if (text == "normal") return Label::Nominal;
  if (text == "anomaly") return Label::Anomaly;
  return std::nullopt;
}

void check_snapshot(const Snapshot& x, std::size_t expected_size) {
  if (x.size() != expected_size) {
    throw Error(ErrorKind::ShapeMismatch,
                fmt::format("snapshot has {} values, expected {}", x.size(), expected_size));
  }
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x.values[i])) {
      throw Error(ErrorKind::InvalidArgument, fmt::format("non-finite value at sensor {}", i));
    }
  }
}

SensorStats estimate_stats(std::span<const Snapshot> samples) {
  if (samples.empty()) throw Error(ErrorKind::EmptyInput, "no snapshots to estimate statistics from");
  const std::size_t width = samples.front().size();
  for (const auto& s : samples) {
    if (s.size() != width) {
      throw Error(ErrorKind::ShapeMismatch,
                  fmt::format("ragged snapshots: {} vs {} values", s.size(), width));
    }
  }

  // Welford's update; numerically stable in one pass.
  SensorStats stats;
  stats.means.assign(width, 0.0);
  std::vector<double> m2(width, 0.0);
  std::size_t n = 0;
  for (const auto& s : samples) {
    ++n;
    for (std::size_t i = 0; i < width; ++i) {
      const double delta = s.values[i] - stats.means[i];
      stats.means[i] += delta / static_cast<double>(n);
      m2[i] += delta * (s.values[i] - stats.means[i]);
    }
  }
  stats.stds.resize(width);
  for (std::size_t i = 0; i < width; ++i) {
    stats.stds[i] = std::sqrt(std::max(0.0, m2[i] / static_cast<double>(n)));
  }
  stats.sample_count = n;
  return stats;
}

ZScoreVector normalize(const Snapshot& x, const SensorStats& stats, const RuleConfig& cfg) {
  if (stats.means.size() != stats.stds.size()) {
    throw Error(ErrorKind::ShapeMismatch, "stats means/stds lengths differ");
  }
  if (x.size() != stats.size()) {
    throw Error(ErrorKind::ShapeMismatch,
                fmt::format("snapshot has {} values but stats cover {} sensors", x.size(), stats.size()));
  }
  ZScoreVector z;
  z.abs_z.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    z.abs_z[i] = std::abs(x.values[i] - stats.means[i]) / std::max(stats.stds[i], cfg.epsilon);
  }
  return z;
}

RuleVerdict apply_rule(const ZScoreVector& z, const RuleConfig& cfg) {
  if (z.abs_z.empty()) throw Error(ErrorKind::EmptyInput, "empty z-score vector");
  RuleVerdict verdict;
  for (SensorId i = 0; i < z.size(); ++i) {
    if (flag_sensor(z.abs_z[i], cfg) == 1) verdict.flagged_ids.push_back(i);
  }
  verdict.label = verdict.flagged_ids.empty() ? Label::Nominal : Label::Anomaly;
  return verdict;
}

RuleVerdict evaluate_snapshot(const Snapshot& x, const SensorStats& stats, const RuleConfig& cfg) {
  return apply_rule(normalize(x, stats, cfg), cfg);
}

std::uint64_t content_hash(const Snapshot& x) noexcept {
  Fnv1a h;
  for (double v : x.values) h.update(v);
  return h.digest();
}

}  // namespace ruleprompt
