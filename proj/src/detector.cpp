#include "ruleprompt/detector.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "ruleprompt/error.hpp"

namespace ruleprompt {

using nlohmann::json;

namespace {

FeatureVector summarize(std::vector<double> values) {
  std::sort(values.begin(), values.end(), std::greater<>());
  FeatureVector f;
  f.features.assign(kFeatureCount, 0.0);
  for (std::size_t i = 0; i < 3 && i < values.size(); ++i) f.features[i] = values[i];
  f.features[3] = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  f.features[4] = static_cast<double>(std::count_if(values.begin(), values.end(), [](double v) { return v >= 2.0; }));
  f.features[5] = static_cast<double>(std::count_if(values.begin(), values.end(), [](double v) { return v >= 2.5; }));
  return f;
}

}  // namespace

FeatureVector extract_features(const ZScoreVector& z) {
  if (z.abs_z.empty()) throw Error(ErrorKind::EmptyInput, "empty z-score vector");
  return summarize(z.abs_z);
}

FeatureVector extract_features(const ZScoreVector& z, std::span<const SensorId> selected) {
  if (z.abs_z.empty()) throw Error(ErrorKind::EmptyInput, "empty z-score vector");
  if (selected.empty()) throw Error(ErrorKind::EmptySelection, "feature extraction over an empty selection");
  std::vector<double> values;
  values.reserve(selected.size());
  for (SensorId id : selected) {
    if (id >= z.size()) {
      throw Error(ErrorKind::InvalidArgument, fmt::format("selected sensor {} out of range ({})", id, z.size()));
    }
    values.push_back(z.abs_z[id]);
  }
  return summarize(std::move(values));
}

double sigmoid(double s) noexcept {
  if (s >= 0.0) return 1.0 / (1.0 + std::exp(-s));
  const double e = std::exp(s);
  return e / (1.0 + e);
}

LossAndGradient logistic_loss(std::span<const double> weights, double bias, std::span<const LabeledFeatures> batch,
                              double l2) {
  LossAndGradient out;
  out.grad_weights.assign(weights.size(), 0.0);
  if (batch.empty()) throw Error(ErrorKind::EmptyInput, "empty training batch");

  double data_loss = 0.0;
  for (const auto& sample : batch) {
    const auto& x = sample.x.features;
    if (x.size() != weights.size()) {
      throw Error(ErrorKind::ShapeMismatch,
                  fmt::format("feature length {} does not match {} weights", x.size(), weights.size()));
    }
    double s = bias;
    for (std::size_t j = 0; j < x.size(); ++j) s += weights[j] * x[j];
    const double y = sample.label == Label::Anomaly ? 1.0 : 0.0;
    // log(1 + e^s) - y*s, evaluated without overflow.
    data_loss += std::max(s, 0.0) + std::log1p(std::exp(-std::abs(s))) - y * s;
    const double residual = sigmoid(s) - y;
    for (std::size_t j = 0; j < x.size(); ++j) out.grad_weights[j] += residual * x[j];
    out.grad_bias += residual;
  }

  const double n = static_cast<double>(batch.size());
  double norm2 = 0.0;
  for (std::size_t j = 0; j < weights.size(); ++j) {
    out.grad_weights[j] = out.grad_weights[j] / n + l2 * weights[j];
    norm2 += weights[j] * weights[j];
  }
  out.grad_bias /= n;
  out.loss = data_loss / n + 0.5 * l2 * norm2;
  return out;
}

LogisticModel train_detector(std::span<const LabeledFeatures> samples, const TrainingHyper& hyper,
                             std::vector<double>* loss_history) {
  if (samples.empty()) throw Error(ErrorKind::EmptyInput, "no training samples");
  const bool has_nominal = std::any_of(samples.begin(), samples.end(), [](const auto& s) { return s.label == Label::Nominal; });
  const bool has_anomaly = std::any_of(samples.begin(), samples.end(), [](const auto& s) { return s.label == Label::Anomaly; });
  if (!has_nominal || !has_anomaly) throw Error(ErrorKind::SingleClassData, "training data contains a single class");
  if (!(hyper.learning_rate > 0.0) || hyper.l2 < 0.0) {
    throw Error(ErrorKind::InvalidArgument, "learning rate must be positive and l2 non-negative");
  }

  const std::size_t dim = samples.front().x.features.size();
  std::vector<double> center(dim, 0.0);
  std::vector<double> scale(dim, 1.0);
  if (hyper.standardize) {
    const double n = static_cast<double>(samples.size());
    for (const auto& s : samples) {
      if (s.x.features.size() != dim) throw Error(ErrorKind::ShapeMismatch, "ragged feature vectors");
      for (std::size_t j = 0; j < dim; ++j) center[j] += s.x.features[j] / n;
    }
    std::vector<double> var(dim, 0.0);
    for (const auto& s : samples) {
      for (std::size_t j = 0; j < dim; ++j) var[j] += (s.x.features[j] - center[j]) * (s.x.features[j] - center[j]) / n;
    }
    for (std::size_t j = 0; j < dim; ++j) scale[j] = var[j] > 1e-24 ? std::sqrt(var[j]) : 1.0;
  }

  std::vector<LabeledFeatures> scaled(samples.begin(), samples.end());
  for (auto& s : scaled) {
    for (std::size_t j = 0; j < dim; ++j) s.x.features[j] = (s.x.features[j] - center[j]) / scale[j];
  }

  std::vector<double> w(dim, 0.0);
  double b = 0.0;
  LossAndGradient lg;
  for (std::size_t epoch = 0; epoch < hyper.epochs; ++epoch) {
    lg = logistic_loss(w, b, scaled, hyper.l2);
    if (!std::isfinite(lg.loss)) {
      throw Error(ErrorKind::DivergedLoss, fmt::format("loss became non-finite at epoch {}", epoch));
    }
    if (loss_history) loss_history->push_back(lg.loss);
    for (std::size_t j = 0; j < dim; ++j) w[j] -= hyper.learning_rate * lg.grad_weights[j];
    b -= hyper.learning_rate * lg.grad_bias;
  }
  lg = logistic_loss(w, b, scaled, hyper.l2);
  if (!std::isfinite(lg.loss)) throw Error(ErrorKind::DivergedLoss, "final loss is non-finite");
  if (loss_history) loss_history->push_back(lg.loss);

  LogisticModel model;
  model.weights.resize(dim);
  model.bias = b;
  for (std::size_t j = 0; j < dim; ++j) {
    model.weights[j] = w[j] / scale[j];
    model.bias -= w[j] * center[j] / scale[j];
  }
  model.l2 = hyper.l2;
  model.training_meta = {hyper.epochs, hyper.learning_rate, hyper.seed, lg.loss};
  return model;
}

Prediction predict(const LogisticModel& model, const FeatureVector& f, double threshold) {
  if (f.features.size() != model.weights.size()) {
    throw Error(ErrorKind::ShapeMismatch, fmt::format("feature length {} does not match model width {}",
                                                      f.features.size(), model.weights.size()));
  }
  double s = model.bias;
  for (std::size_t j = 0; j < f.features.size(); ++j) s += model.weights[j] * f.features[j];
  const double p = sigmoid(s);
  return {p >= threshold ? Label::Anomaly : Label::Nominal, p};
}

void HybridConfig::validate() const {
  if (!(filter_threshold > 0.0)) throw Error(ErrorKind::ConfigError, "filter_threshold must be positive");
  if (max_selected == 0) throw Error(ErrorKind::ConfigError, "max_selected must be positive");
  if (!(decision_threshold > 0.0 && decision_threshold < 1.0)) {
    throw Error(ErrorKind::ConfigError, "decision_threshold must lie in (0, 1)");
  }
}

std::vector<SensorId> rule_filter(const ZScoreVector& z, const HybridConfig& cfg, const ParsedVerdict* verdict) {
  if (z.abs_z.empty()) throw Error(ErrorKind::EmptyInput, "empty z-score vector");
  std::vector<bool> chosen(z.size(), false);
  for (SensorId i = 0; i < z.size(); ++i) chosen[i] = z.abs_z[i] >= cfg.filter_threshold;
  if (verdict) {
    for (SensorId id : verdict->cited_sensor_ids) {
      if (id < z.size()) chosen[id] = true;
    }
  }
  std::vector<SensorId> selected;
  for (SensorId i = 0; i < z.size(); ++i) {
    if (chosen[i]) selected.push_back(i);
  }

  auto by_deviation = [&](SensorId a, SensorId b) {
    return z.abs_z[a] != z.abs_z[b] ? z.abs_z[a] > z.abs_z[b] : a < b;
  };
  if (selected.empty()) {
    selected.resize(z.size());
    std::iota(selected.begin(), selected.end(), SensorId{0});
    std::sort(selected.begin(), selected.end(), by_deviation);
    selected.resize(std::min<std::size_t>(3, selected.size()));
  } else if (selected.size() > cfg.max_selected) {
    std::sort(selected.begin(), selected.end(), by_deviation);
    selected.resize(cfg.max_selected);
  }
  std::sort(selected.begin(), selected.end());
  return selected;
}

HybridPrediction hybrid_predict(const ZScoreVector& z, const LogisticModel& model, const HybridConfig& cfg,
                                const ParsedVerdict* verdict) {
  HybridPrediction out;
  out.selected_ids = rule_filter(z, cfg, verdict);
  const Prediction p = predict(model, extract_features(z, out.selected_ids), cfg.decision_threshold);
  out.label = p.label;
  out.probability = p.probability;
  return out;
}

std::string_view to_string(FeatureMode mode) { return mode == FeatureMode::RuleFiltered ? "filtered" : "all"; }

FeatureMode feature_mode_from_string(std::string_view text) {
  if (text == "all") return FeatureMode::AllSensors;
  if (text == "filtered") return FeatureMode::RuleFiltered;
  throw Error(ErrorKind::ConfigError, fmt::format("unknown feature mode '{}' (expected all|filtered)", text));
}

FeatureVector features_for(const ZScoreVector& z, FeatureMode mode, const HybridConfig& hybrid,
                           const ParsedVerdict* verdict) {
  if (mode == FeatureMode::AllSensors) return extract_features(z);
  return extract_features(z, rule_filter(z, hybrid, verdict));
}

std::vector<LabeledFeatures> build_feature_set(const DatasetSplit& dataset, std::span<const LabeledSample> samples,
                                               FeatureMode mode, const HybridConfig& hybrid) {
  std::vector<LabeledFeatures> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    const ZScoreVector z = normalize(s.snapshot, dataset.stats, dataset.rule);
    out.push_back({features_for(z, mode, hybrid, nullptr), s.label});
  }
  return out;
}

DetectorBundle train_bundle(const DatasetSplit& dataset, FeatureMode mode, const HybridConfig& hybrid,
                            const TrainingHyper& hyper) {
  hybrid.validate();
  const auto train = build_feature_set(dataset, dataset.train, mode, hybrid);
  return {train_detector(train, hyper), mode, hybrid, hyper};
}

std::string serialize_model(const DetectorBundle& bundle) {
  const auto& m = bundle.model;
  json doc = {
      {"schema_version", kModelSchemaVersion},
      {"feature_config",
       {{"mode", to_string(bundle.mode)},
        {"names", kFeatureNames},
        {"filter_threshold", bundle.hybrid.filter_threshold},
        {"max_selected", bundle.hybrid.max_selected},
        {"decision_threshold", bundle.hybrid.decision_threshold}}},
      {"hyper",
       {{"learning_rate", bundle.hyper.learning_rate},
        {"epochs", bundle.hyper.epochs},
        {"l2", bundle.hyper.l2},
        {"seed", bundle.hyper.seed},
        {"standardize", bundle.hyper.standardize}}},
      {"weights", m.weights},
      {"bias", m.bias},
      {"l2", m.l2},
      {"training",
       {{"epochs", m.training_meta.epochs},
        {"learning_rate", m.training_meta.learning_rate},
        {"seed", m.training_meta.seed},
        {"final_loss", m.training_meta.final_loss}}},
  };
  return doc.dump(2) + "\n";
}

DetectorBundle parse_model(const std::string& text) {
  DetectorBundle b;
  try {
    const json doc = json::parse(text);
    const int version = doc.at("schema_version").get<int>();
    if (version != kModelSchemaVersion) {
      throw Error(ErrorKind::FormatError, fmt::format("unsupported model schema_version {}", version));
    }
    const auto& fc = doc.at("feature_config");
    b.mode = feature_mode_from_string(fc.at("mode").get<std::string>());
    b.hybrid.filter_threshold = fc.at("filter_threshold").get<double>();
    b.hybrid.max_selected = fc.at("max_selected").get<std::size_t>();
    b.hybrid.decision_threshold = fc.at("decision_threshold").get<double>();
    const auto& hy = doc.at("hyper");
    b.hyper.learning_rate = hy.at("learning_rate").get<double>();
    b.hyper.epochs = hy.at("epochs").get<std::size_t>();
    b.hyper.l2 = hy.at("l2").get<double>();
    b.hyper.seed = hy.at("seed").get<std::uint64_t>();
    b.hyper.standardize = hy.at("standardize").get<bool>();
    b.model.weights = doc.at("weights").get<std::vector<double>>();
    b.model.bias = doc.at("bias").get<double>();
    b.model.l2 = doc.at("l2").get<double>();
    const auto& tr = doc.at("training");
    b.model.training_meta = {tr.at("epochs").get<std::size_t>(), tr.at("learning_rate").get<double>(),
                             tr.at("seed").get<std::uint64_t>(), tr.at("final_loss").get<double>()};
  } catch (const json::exception& e) {
    throw Error(ErrorKind::FormatError, fmt::format("malformed model file: {}", e.what()));
  }
  if (b.model.weights.size() != kFeatureCount) {
    throw Error(ErrorKind::FormatError,
                fmt::format("model has {} weights, expected {}", b.model.weights.size(), kFeatureCount));
  }
  return b;
}

void write_model(const DetectorBundle& bundle, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoError, fmt::format("cannot open '{}' for writing", path.string()));
  out << serialize_model(bundle);
  if (!out) throw Error(ErrorKind::IoError, fmt::format("write to '{}' failed", path.string()));
}

DetectorBundle read_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::ModelMissing, fmt::format("cannot open model file '{}'", path.string()));
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_model(buf.str());
}

}  // namespace ruleprompt
