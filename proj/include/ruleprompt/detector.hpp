#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ruleprompt/datagen.hpp"
#include "ruleprompt/schema_parser.hpp"
#include "ruleprompt/telemetry.hpp"

namespace ruleprompt {

inline constexpr int kModelSchemaVersion = 1;
inline constexpr std::size_t kFeatureCount = 6;

/// [max, second max, third max, mean, count >= 2.0, count >= 2.5] of abs_z.
inline constexpr std::array<std::string_view, kFeatureCount> kFeatureNames = {
    "max_abs_z", "second_abs_z", "third_abs_z", "mean_abs_z", "count_ge_2_0", "count_ge_2_5"};

struct FeatureVector {
  std::vector<double> features;

  friend bool operator==(const FeatureVector&, const FeatureVector&) = default;
};

/// Summary features over all sensors.
FeatureVector extract_features(const ZScoreVector& z);
/// Summary features over `selected` only; order statistics pad with 0.
FeatureVector extract_features(const ZScoreVector& z, std::span<const SensorId> selected);

struct LabeledFeatures {
  FeatureVector x;
  Label label = Label::Nominal;
};

struct TrainingHyper {
  double learning_rate = 0.1;
  std::size_t epochs = 10000;
  double l2 = 1e-4;
  std::uint64_t seed = 0;
  /// Train on z-scored features, then fold the scaling back into the raw weights.
  bool standardize = true;

  friend bool operator==(const TrainingHyper&, const TrainingHyper&) = default;
};

struct TrainingMeta {
  std::size_t epochs = 0;
  double learning_rate = 0.0;
  std::uint64_t seed = 0;
  double final_loss = 0.0;

  friend bool operator==(const TrainingMeta&, const TrainingMeta&) = default;
};

/// probability = sigmoid(weights . features + bias), on raw features.
struct LogisticModel {
  std::vector<double> weights;
  double bias = 0.0;
  double l2 = 0.0;
  TrainingMeta training_meta;

  friend bool operator==(const LogisticModel&, const LogisticModel&) = default;
};

double sigmoid(double s) noexcept;

struct LossAndGradient {
  double loss = 0.0;
  std::vector<double> grad_weights;
  double grad_bias = 0.0;
};

/// Mean log-loss plus (l2 / 2) * ||w||^2; the bias is not regularized.
LossAndGradient logistic_loss(std::span<const double> weights, double bias, std::span<const LabeledFeatures> batch,
                              double l2);

/// Full-batch gradient descent from zero weights. `loss_history`, when given,
/// receives the objective before every epoch and after the last one.
LogisticModel train_detector(std::span<const LabeledFeatures> samples, const TrainingHyper& hyper,
                             std::vector<double>* loss_history = nullptr);

struct Prediction {
  Label label = Label::Nominal;
  double probability = 0.0;
};

/// Anomaly iff probability >= threshold.
Prediction predict(const LogisticModel& model, const FeatureVector& f, double threshold);

struct HybridConfig {
  double filter_threshold = 2.5;
  std::size_t max_selected = 16;
  double decision_threshold = 0.5;

  void validate() const;
  friend bool operator==(const HybridConfig&, const HybridConfig&) = default;
};

/// Sensors with abs_z >= filter_threshold, plus those cited by the verdict,
/// capped at max_selected by descending abs_z. Falls back to the top three
/// sensors when nothing qualifies. Returned in ascending id order.
std::vector<SensorId> rule_filter(const ZScoreVector& z, const HybridConfig& cfg, const ParsedVerdict* verdict);

struct HybridPrediction {
  Label label = Label::Nominal;
  double probability = 0.0;
  std::vector<SensorId> selected_ids;
};

HybridPrediction hybrid_predict(const ZScoreVector& z, const LogisticModel& model, const HybridConfig& cfg,
                                const ParsedVerdict* verdict);

enum class FeatureMode { AllSensors, RuleFiltered };

std::string_view to_string(FeatureMode mode);
FeatureMode feature_mode_from_string(std::string_view text);

/// A trained detector plus everything needed to rebuild its inputs.
struct DetectorBundle {
  LogisticModel model;
  FeatureMode mode = FeatureMode::AllSensors;
  HybridConfig hybrid;
  TrainingHyper hyper;

  friend bool operator==(const DetectorBundle&, const DetectorBundle&) = default;
};

/// Features for one sample under the bundle's mode (verdict only matters for RuleFiltered).
FeatureVector features_for(const ZScoreVector& z, FeatureMode mode, const HybridConfig& hybrid,
                           const ParsedVerdict* verdict);

/// Labeled features for a split, using rule-only filtering (no verdicts) in RuleFiltered mode.
std::vector<LabeledFeatures> build_feature_set(const DatasetSplit& dataset, std::span<const LabeledSample> samples,
                                               FeatureMode mode, const HybridConfig& hybrid);

DetectorBundle train_bundle(const DatasetSplit& dataset, FeatureMode mode, const HybridConfig& hybrid,
                            const TrainingHyper& hyper);

std::string serialize_model(const DetectorBundle& bundle);
DetectorBundle parse_model(const std::string& text);
void write_model(const DetectorBundle& bundle, const std::filesystem::path& path);
DetectorBundle read_model(const std::filesystem::path& path);

}  // namespace ruleprompt
