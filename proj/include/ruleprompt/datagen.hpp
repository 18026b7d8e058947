#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "ruleprompt/random.hpp"
#include "ruleprompt/telemetry.hpp"

namespace ruleprompt {

inline constexpr int kDatasetSchemaVersion = 1;

/// Gaussian stand-in for a grid's nominal operating point.
struct SyntheticModel {
  std::vector<SensorMeta> sensor_metas;
  std::vector<double> base_means;
  std::vector<double> base_stds;
  std::uint64_t seed = 42;

  std::size_t sensor_count() const noexcept { return sensor_metas.size(); }
  void validate() const;
};

/// Kind-scaled operating point: injections and flows in the tens, voltages
/// near 1.0 p.u. Each sensor's std is 1-5% of its mean.
SyntheticModel make_default_model(std::size_t sensor_count, std::uint64_t seed);

enum class SignPolicy { RandomSign, AlwaysUp };

std::string_view to_string(SignPolicy policy);
SignPolicy sign_policy_from_string(std::string_view text);

struct InjectionSpec {
  double deviation_fraction = 0.15;
  std::size_t sensors_per_sample = 3;
  SignPolicy sign_policy = SignPolicy::RandomSign;

  void validate() const;
  friend bool operator==(const InjectionSpec&, const InjectionSpec&) = default;
};

struct LabeledSample {
  Snapshot snapshot;
  Label label = Label::Nominal;
  std::vector<SensorId> injected_ids;
  std::vector<SensorId> flagged_ids;

  friend bool operator==(const LabeledSample&, const LabeledSample&) = default;
};

struct ClassQuota {
  std::size_t nominal = 0;
  std::size_t anomaly = 0;

  std::size_t total() const noexcept { return nominal + anomaly; }
  friend bool operator==(const ClassQuota&, const ClassQuota&) = default;
};

struct SplitQuotas {
  ClassQuota train{600, 600};
  ClassQuota validation{100, 100};
  ClassQuota test{100, 100};

  friend bool operator==(const SplitQuotas&, const SplitQuotas&) = default;
};

struct GenerationOptions {
  SplitQuotas quotas;
  std::size_t nominal_pool_size = 2000;
  /// Per class and split, at most attempt_cap_factor * quota candidates are drawn.
  std::size_t attempt_cap_factor = 100;
};

/// Rejected candidates per split, recorded in the manifest.
struct RejectionCounts {
  std::size_t nominal = 0;
  std::size_t anomaly = 0;

  friend bool operator==(const RejectionCounts&, const RejectionCounts&) = default;
};

struct DatasetManifest {
  int schema_version = kDatasetSchemaVersion;
  std::uint64_t seed = 0;
  std::size_t sensor_count = 0;
  InjectionSpec injection;
  SplitQuotas quotas;
  std::size_t nominal_pool_size = 0;
  std::size_t attempt_cap_factor = 0;
  RejectionCounts train_rejections;
  RejectionCounts validation_rejections;
  RejectionCounts test_rejections;
  /// Content hashes of the stats-fitting pool, kept for leakage audits.
  std::vector<std::uint64_t> pool_hashes;

  friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

struct DatasetSplit {
  std::vector<LabeledSample> train;
  std::vector<LabeledSample> validation;
  std::vector<LabeledSample> test;
  SensorStats stats;
  RuleConfig rule;
  DatasetManifest manifest;

  std::size_t sensor_count() const noexcept { return stats.size(); }
  friend bool operator==(const DatasetSplit&, const DatasetSplit&) = default;
};

Snapshot sample_nominal(const SyntheticModel& model, RandomStream& rng);

std::pair<Snapshot, std::vector<SensorId>> inject_anomaly(const Snapshot& x, const InjectionSpec& spec,
                                                          RandomStream& rng);

DatasetSplit generate_dataset(const SyntheticModel& model, const InjectionSpec& spec,
                              const GenerationOptions& options, const RuleConfig& rule);

/// JSON Lines: a header object followed by one sample per line (train, then
/// validation, then test; split sizes are recorded in the header).
std::string serialize_dataset(const DatasetSplit& split);
DatasetSplit parse_dataset(const std::string& text);

void write_dataset(const DatasetSplit& split, const std::filesystem::path& path);
DatasetSplit read_dataset(const std::filesystem::path& path);

/// Identity of a dataset: FNV-1a over its canonical serialization.
std::string dataset_hash(const DatasetSplit& split);

}  // namespace ruleprompt
