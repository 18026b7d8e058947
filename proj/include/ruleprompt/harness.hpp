#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "ruleprompt/datagen.hpp"
#include "ruleprompt/detector.hpp"
#include "ruleprompt/llm_gateway.hpp"
#include "ruleprompt/promptkit.hpp"
#include "ruleprompt/schema_parser.hpp"

namespace ruleprompt {

enum class RunParadigm { ZeroShot, FewShot, ICL, Hybrid };

std::string_view to_string(RunParadigm paradigm);
/// Accepts "zero", "few", "icl", "hybrid".
RunParadigm run_paradigm_from_string(std::string_view text);

enum class ResponderKind { Simulated, Endpoint };

std::string_view to_string(ResponderKind kind);
ResponderKind responder_kind_from_string(std::string_view text);

struct RunConfig {
  std::string name;
  std::filesystem::path dataset_path;
  RunParadigm paradigm = RunParadigm::ZeroShot;
  ValueBlockFormat format;
  ResponderKind responder = ResponderKind::Simulated;
  EndpointConfig endpoint;
  /// The rule is always taken from the dataset.
  SimulatedResponderConfig simulated;
  /// Hybrid only. When unset, the model file's filter settings are used.
  std::optional<HybridConfig> hybrid;
  std::filesystem::path model_path;
  std::optional<std::filesystem::path> template_dir;
  std::size_t concurrency = 4;
  std::uint64_t seed = 0;
  /// Marks the endpoint as serving an adapted (e.g. LoRA fine-tuned) model.
  bool endpoint_adapted = false;

  void validate() const;
};

/// Echo of the config for manifests; the API key is never written.
nlohmann::json config_to_json(const RunConfig& cfg);

struct ConfusionMatrix {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t tn = 0;
  std::size_t unparseable = 0;

  std::size_t total() const noexcept { return tp + fp + fn + tn + unparseable; }
  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

struct Metrics {
  double accuracy = 0.0;
  double recall = 0.0;
  double precision = 0.0;
  double f1 = 0.0;
  double unparseable_rate = 0.0;

  friend bool operator==(const Metrics&, const Metrics&) = default;
};

/// Unparseable samples count in accuracy's denominator only.
Metrics compute_metrics(const ConfusionMatrix& cm);

/// 2pr / (p + r), or 0 when p + r == 0.
double f1_score(double precision, double recall) noexcept;

struct SampleRecord {
  std::size_t index = 0;
  Label truth = Label::Nominal;
  /// Empty when the reply could not be parsed (and no hybrid fallback applied).
  std::optional<Label> predicted;
  ParseStatus parse_status = ParseStatus::Ok;
  std::size_t prompt_tokens = 0;
  double latency_seconds = 0.0;
  std::optional<AdherenceReport> adherence;
  std::vector<SensorId> cited_ids;
  std::optional<double> detector_probability;
  std::vector<SensorId> selected_ids;
  std::string reply;

  friend bool operator==(const SampleRecord&, const SampleRecord&) = default;
};

struct TokenStats {
  double mean = 0.0;
  std::size_t max = 0;

  friend bool operator==(const TokenStats&, const TokenStats&) = default;
};

struct AdherenceSummary {
  std::size_t parsed = 0;
  double label_match_rate = 0.0;
  double mean_citations_valid = 0.0;
  double mean_citations_complete = 0.0;

  friend bool operator==(const AdherenceSummary&, const AdherenceSummary&) = default;
};

struct RunResult {
  std::vector<SampleRecord> records;
  ConfusionMatrix confusion;
  Metrics metrics;
  TokenStats token_stats;
  AdherenceSummary adherence;
  /// Config echo, dataset hash, paradigm tag and timestamps.
  nlohmann::json manifest;

  std::string dataset_hash() const;
  std::string name() const;
};

ConfusionMatrix confusion_from_records(std::span<const SampleRecord> records);

/// Rebuilds confusion, metrics, token and adherence aggregates from the records.
void aggregate(RunResult& result);

/// Loads the dataset named by cfg and runs it.
RunResult evaluate_run(const RunConfig& cfg);
/// Runs over an in-memory dataset; `detector` is required for Hybrid.
RunResult evaluate_run(const RunConfig& cfg, const DatasetSplit& dataset, const DetectorBundle* detector);

struct DetectorEvaluation {
  ConfusionMatrix confusion;
  Metrics metrics;
};

/// Standalone detector over `samples`, features per the bundle's mode (no verdicts).
DetectorEvaluation evaluate_detector(const DatasetSplit& dataset, std::span<const LabeledSample> samples,
                                     const DetectorBundle& detector);

struct ComparisonRow {
  std::string name;
  Metrics metrics;
  double mean_tokens = 0.0;
};

struct ComparisonTable {
  std::string dataset_hash;
  std::vector<ComparisonRow> rows;
};

/// Rows in the given order. Throws DatasetMismatch across datasets.
ComparisonTable compare_runs(std::span<const RunResult> results);
std::string render_comparison(const ComparisonTable& table);

struct PublishedRow {
  std::string group;
  std::string name;
  double accuracy = 0.0;
  double recall = 0.0;
  double precision = 0.0;
  double f1 = 0.0;
};

struct PublishedFixtures {
  int version = 0;
  /// Percentage points.
  double tolerance = 0.0;
  std::vector<PublishedRow> rows;
};

/// The embedded fixtures of reported (accuracy, recall, precision, F1) rows.
PublishedFixtures published_fixtures();

struct ConsistencyRow {
  PublishedRow published;
  double recomputed_f1 = 0.0;
  double delta = 0.0;
  /// Accuracy implied by a balanced 100/100 test split; informational.
  double implied_accuracy = 0.0;
  bool pass = false;
};

struct ConsistencyReport {
  std::vector<ConsistencyRow> rows;
  double tolerance = 0.0;

  bool all_pass() const noexcept;
};

ConsistencyReport verify_paper_consistency();
std::string render_consistency(const ConsistencyReport& report);

enum class ReportFormat { JsonSummary, CsvPerSample };

std::string json_summary(const RunResult& result);
std::string csv_per_sample(const RunResult& result);
/// Metrics recomputed from a CsvPerSample document.
Metrics metrics_from_csv(const std::string& csv);
void emit_report(const RunResult& result, ReportFormat format, const std::filesystem::path& path);

/// Full result (records included) for later `report` / `compare`.
std::string serialize_run_result(const RunResult& result);
/// Verifies that stored metrics equal those recomputed from the records.
RunResult parse_run_result(const std::string& text);
void write_run_result(const RunResult& result, const std::filesystem::path& path);
RunResult read_run_result(const std::filesystem::path& path);

}  // namespace ruleprompt
