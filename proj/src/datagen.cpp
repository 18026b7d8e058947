#include "ruleprompt/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "ruleprompt/error.hpp"
#include "ruleprompt/hashing.hpp"

namespace ruleprompt {

using nlohmann::json;

void SyntheticModel::validate() const {
  const std::size_t n = sensor_metas.size();
  if (n == 0) throw Error(ErrorKind::InvalidArgument, "synthetic model has no sensors");
  if (base_means.size() != n || base_stds.size() != n) {
    throw Error(ErrorKind::ShapeMismatch,
                fmt::format("model vectors ({} means, {} stds) do not match {} sensors", base_means.size(),
                            base_stds.size(), n));
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (sensor_metas[i].id != i) throw Error(ErrorKind::InvalidArgument, "sensor ids must be contiguous from 0");
    if (!(base_stds[i] > 0.0) || !std::isfinite(base_stds[i]) || !std::isfinite(base_means[i])) {
      throw Error(ErrorKind::InvalidArgument, fmt::format("sensor {} has invalid mean/std", i));
    }
  }
}

SyntheticModel make_default_model(std::size_t sensor_count, std::uint64_t seed) {
  if (sensor_count == 0) throw Error(ErrorKind::InvalidArgument, "sensor count must be positive");
  SyntheticModel model;
  model.seed = seed;
  model.sensor_metas = make_sensor_set(sensor_count);
  model.base_means.resize(sensor_count);
  model.base_stds.resize(sensor_count);

  RandomStream rng(mix_seed(seed, 0));
  for (std::size_t i = 0; i < sensor_count; ++i) {
    double lo = 0.0;
    double span = 0.0;
    switch (model.sensor_metas[i].kind) {
      case SensorKind::ActiveInjection: lo = 20.0; span = 100.0; break;
      case SensorKind::ReactiveInjection: lo = 5.0; span = 35.0; break;
      case SensorKind::ActiveFlow: lo = 10.0; span = 190.0; break;
      case SensorKind::ReactiveFlow: lo = 2.0; span = 48.0; break;
      case SensorKind::VoltageMagnitude: lo = 0.95; span = 0.10; break;
    }
    model.base_means[i] = lo + span * rng.uniform();
    model.base_stds[i] = model.base_means[i] * (0.01 + 0.04 * rng.uniform());
  }
  return model;
}

std::string_view to_string(SignPolicy policy) { return policy == SignPolicy::AlwaysUp ? "up" : "random"; }

SignPolicy sign_policy_from_string(std::string_view text) {
  if (text == "random") return SignPolicy::RandomSign;
  if (text == "up") return SignPolicy::AlwaysUp;
  throw Error(ErrorKind::InvalidArgument, fmt::format("unknown sign policy '{}' (expected random|up)", text));
}

void InjectionSpec::validate() const {
  if (!(deviation_fraction > 0.0 && deviation_fraction < 1.0)) {
    throw Error(ErrorKind::InvalidArgument,
                fmt::format("deviation fraction must lie in (0, 1), got {}", deviation_fraction));
  }
}

Snapshot sample_nominal(const SyntheticModel& model, RandomStream& rng) {
  Snapshot x;
  x.values.resize(model.base_means.size());
  for (std::size_t i = 0; i < x.values.size(); ++i) {
    x.values[i] = model.base_means[i] + model.base_stds[i] * rng.normal();
  }
  return x;
}

std::pair<Snapshot, std::vector<SensorId>> inject_anomaly(const Snapshot& x, const InjectionSpec& spec,
                                                          RandomStream& rng) {
  spec.validate();
  const std::size_t n = x.size();
  const std::size_t k = spec.sensors_per_sample;
  if (k > n) {
    throw Error(ErrorKind::TooManySensors, fmt::format("cannot inject into {} of {} sensors", k, n));
  }

  // Partial Fisher-Yates: the first k slots are a uniform k-subset.
  std::vector<SensorId> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + rng.uniform_index(n - i);
    std::swap(order[i], order[j]);
  }
  std::vector<SensorId> chosen(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));

  Snapshot out = x;
  for (SensorId id : chosen) {
    double sign = 1.0;
    if (spec.sign_policy == SignPolicy::RandomSign && rng.uniform() < 0.5) sign = -1.0;
    out.values[id] = x.values[id] * (1.0 + sign * spec.deviation_fraction);
  }
  std::sort(chosen.begin(), chosen.end());
  return {std::move(out), std::move(chosen)};
}

namespace {

struct SplitFiller {
  const SyntheticModel& model;
  const InjectionSpec& spec;
  const SensorStats& stats;
  const RuleConfig& rule;
  std::size_t cap_factor;
  RandomStream& rng;

  std::vector<LabeledSample> fill(const ClassQuota& quota, std::string_view split_name,
                                  RejectionCounts& rejections) {
    std::vector<LabeledSample> out;
    out.reserve(quota.total());
    std::size_t have_nominal = 0;
    std::size_t have_anomaly = 0;
    std::size_t attempts_nominal = 0;
    std::size_t attempts_anomaly = 0;
    const std::size_t cap_nominal = cap_factor * quota.nominal;
    const std::size_t cap_anomaly = cap_factor * quota.anomaly;

    // Alternate one nominal and one anomaly candidate per round until both fill.
    while (have_nominal < quota.nominal || have_anomaly < quota.anomaly) {
      if (have_nominal < quota.nominal) {
        if (++attempts_nominal > cap_nominal) throw unreachable(split_name, Label::Nominal, cap_nominal);
        Snapshot x = sample_nominal(model, rng);
        RuleVerdict v = evaluate_snapshot(x, stats, rule);
        if (v.label == Label::Nominal) {
          out.push_back({std::move(x), Label::Nominal, {}, std::move(v.flagged_ids)});
          ++have_nominal;
        } else {
          ++rejections.nominal;
        }
      }
      if (have_anomaly < quota.anomaly) {
        if (++attempts_anomaly > cap_anomaly) throw unreachable(split_name, Label::Anomaly, cap_anomaly);
        auto [x, injected] = inject_anomaly(sample_nominal(model, rng), spec, rng);
        RuleVerdict v = evaluate_snapshot(x, stats, rule);
        // The crossing has to come from the injection; a natural outlier elsewhere does not count.
        const bool caused = std::any_of(injected.begin(), injected.end(), [&](SensorId id) {
          return std::binary_search(v.flagged_ids.begin(), v.flagged_ids.end(), id);
        });
        if (v.label == Label::Anomaly && caused) {
          out.push_back({std::move(x), Label::Anomaly, std::move(injected), std::move(v.flagged_ids)});
          ++have_anomaly;
        } else {
          ++rejections.anomaly;
        }
      }
    }
    return out;
  }

  Error unreachable(std::string_view split_name, Label label, std::size_t cap) const {
    return Error(ErrorKind::QuotaUnreachable,
                 fmt::format("{} split: no more {} samples after {} attempts; the injection magnitude "
                             "(deviation {}) cannot produce this class under tau = {}; try a larger deviation",
                             split_name, to_string(label), cap, spec.deviation_fraction, rule.tau));
  }
};

}  // namespace

DatasetSplit generate_dataset(const SyntheticModel& model, const InjectionSpec& spec,
                              const GenerationOptions& options, const RuleConfig& rule) {
  model.validate();
  spec.validate();
  rule.validate();
  if (spec.sensors_per_sample > model.sensor_count()) {
    throw Error(ErrorKind::TooManySensors, fmt::format("cannot inject into {} of {} sensors",
                                                       spec.sensors_per_sample, model.sensor_count()));
  }
  if (options.nominal_pool_size == 0) throw Error(ErrorKind::InvalidArgument, "nominal pool must be non-empty");

  RandomStream rng(mix_seed(model.seed, 1));

  DatasetSplit split;
  split.rule = rule;
  auto& manifest = split.manifest;
  manifest.seed = model.seed;
  manifest.sensor_count = model.sensor_count();
  manifest.injection = spec;
  manifest.quotas = options.quotas;
  manifest.nominal_pool_size = options.nominal_pool_size;
  manifest.attempt_cap_factor = options.attempt_cap_factor;

  std::vector<Snapshot> pool;
  pool.reserve(options.nominal_pool_size);
  for (std::size_t i = 0; i < options.nominal_pool_size; ++i) pool.push_back(sample_nominal(model, rng));
  split.stats = estimate_stats(pool);
  manifest.pool_hashes.reserve(pool.size());
  for (const auto& x : pool) manifest.pool_hashes.push_back(content_hash(x));

  SplitFiller filler{model, spec, split.stats, rule, options.attempt_cap_factor, rng};
  split.train = filler.fill(options.quotas.train, "train", manifest.train_rejections);
  split.validation = filler.fill(options.quotas.validation, "validation", manifest.validation_rejections);
  split.test = filler.fill(options.quotas.test, "test", manifest.test_rejections);
  return split;
}

namespace {

json quota_json(const ClassQuota& q) { return {{"nominal", q.nominal}, {"anomaly", q.anomaly}}; }
json rejections_json(const RejectionCounts& r) { return {{"nominal", r.nominal}, {"anomaly", r.anomaly}}; }

ClassQuota quota_from(const json& j) { return {j.at("nominal").get<std::size_t>(), j.at("anomaly").get<std::size_t>()}; }
RejectionCounts rejections_from(const json& j) {
  return {j.at("nominal").get<std::size_t>(), j.at("anomaly").get<std::size_t>()};
}

json sample_json(const LabeledSample& s) {
  return {{"values", s.snapshot.values},
          {"label", to_string(s.label)},
          {"injected", s.injected_ids},
          {"flagged", s.flagged_ids}};
}

}  // namespace

std::string serialize_dataset(const DatasetSplit& split) {
  const auto& m = split.manifest;
  json header = {
      {"schema_version", m.schema_version},
      {"seed", m.seed},
      {"sensor_count", m.sensor_count},
      {"rule", {{"tau", split.rule.tau}, {"epsilon", split.rule.epsilon}}},
      {"means", split.stats.means},
      {"stds", split.stats.stds},
      {"stats_sample_count", split.stats.sample_count},
      {"injection",
       {{"fraction", m.injection.deviation_fraction},
        {"k", m.injection.sensors_per_sample},
        {"sign", to_string(m.injection.sign_policy)}}},
      {"splits",
       {{"train", quota_json(m.quotas.train)},
        {"validation", quota_json(m.quotas.validation)},
        {"test", quota_json(m.quotas.test)}}},
      {"generation",
       {{"nominal_pool_size", m.nominal_pool_size},
        {"attempt_cap_factor", m.attempt_cap_factor},
        {"rejections",
         {{"train", rejections_json(m.train_rejections)},
          {"validation", rejections_json(m.validation_rejections)},
          {"test", rejections_json(m.test_rejections)}}},
        {"pool_hashes", m.pool_hashes}}},
  };

  std::string out = header.dump();
  out += '\n';
  for (const auto* part : {&split.train, &split.validation, &split.test}) {
    for (const auto& s : *part) {
      out += sample_json(s).dump();
      out += '\n';
    }
  }
  return out;
}

namespace {

Label parse_label(const json& j) {
  const auto text = j.get<std::string>();
  if (auto label = label_from_string(text)) return *label;
  throw Error(ErrorKind::FormatError, fmt::format("unknown label '{}'", text));
}

LabeledSample parse_sample(const json& j, std::size_t sensor_count) {
  LabeledSample s;
  s.snapshot.values = j.at("values").get<std::vector<double>>();
  if (s.snapshot.size() != sensor_count) {
    throw Error(ErrorKind::FormatError,
                fmt::format("sample has {} values, header declares {}", s.snapshot.size(), sensor_count));
  }
  s.label = parse_label(j.at("label"));
  s.injected_ids = j.at("injected").get<std::vector<SensorId>>();
  s.flagged_ids = j.at("flagged").get<std::vector<SensorId>>();
  return s;
}

}  // namespace

DatasetSplit parse_dataset(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line.empty()) throw Error(ErrorKind::FormatError, "missing dataset header");

  DatasetSplit split;
  try {
    const json header = json::parse(line);
    const int version = header.at("schema_version").get<int>();
    if (version != kDatasetSchemaVersion) {
      throw Error(ErrorKind::FormatError, fmt::format("unsupported schema_version {} (this build reads {})", version,
                                                      kDatasetSchemaVersion));
    }
    auto& m = split.manifest;
    m.schema_version = version;
    m.seed = header.at("seed").get<std::uint64_t>();
    m.sensor_count = header.at("sensor_count").get<std::size_t>();
    split.rule.tau = header.at("rule").at("tau").get<double>();
    split.rule.epsilon = header.at("rule").at("epsilon").get<double>();
    split.stats.means = header.at("means").get<std::vector<double>>();
    split.stats.stds = header.at("stds").get<std::vector<double>>();
    split.stats.sample_count = header.at("stats_sample_count").get<std::size_t>();
    if (split.stats.means.size() != m.sensor_count || split.stats.stds.size() != m.sensor_count) {
      throw Error(ErrorKind::FormatError, "header statistics do not match sensor_count");
    }
    const auto& inj = header.at("injection");
    m.injection.deviation_fraction = inj.at("fraction").get<double>();
    m.injection.sensors_per_sample = inj.at("k").get<std::size_t>();
    m.injection.sign_policy = sign_policy_from_string(inj.at("sign").get<std::string>());
    const auto& splits = header.at("splits");
    m.quotas.train = quota_from(splits.at("train"));
    m.quotas.validation = quota_from(splits.at("validation"));
    m.quotas.test = quota_from(splits.at("test"));
    const auto& gen = header.at("generation");
    m.nominal_pool_size = gen.at("nominal_pool_size").get<std::size_t>();
    m.attempt_cap_factor = gen.at("attempt_cap_factor").get<std::size_t>();
    m.train_rejections = rejections_from(gen.at("rejections").at("train"));
    m.validation_rejections = rejections_from(gen.at("rejections").at("validation"));
    m.test_rejections = rejections_from(gen.at("rejections").at("test"));
    m.pool_hashes = gen.at("pool_hashes").get<std::vector<std::uint64_t>>();

    const std::pair<std::vector<LabeledSample>*, std::size_t> parts[] = {
        {&split.train, m.quotas.train.total()},
        {&split.validation, m.quotas.validation.total()},
        {&split.test, m.quotas.test.total()},
    };
    std::size_t line_no = 1;
    for (const auto& [part, expected] : parts) {
      part->reserve(expected);
      for (std::size_t i = 0; i < expected; ++i) {
        ++line_no;
        if (!std::getline(in, line) || line.empty()) {
          throw Error(ErrorKind::FormatError,
                      fmt::format("truncated dataset: expected a sample on line {}", line_no));
        }
        part->push_back(parse_sample(json::parse(line), m.sensor_count));
      }
    }
    while (std::getline(in, line)) {
      if (!line.empty()) throw Error(ErrorKind::FormatError, "trailing content after the declared samples");
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::FormatError, fmt::format("malformed dataset: {}", e.what()));
  }
  return split;
}

void write_dataset(const DatasetSplit& split, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoError, fmt::format("cannot open '{}' for writing", path.string()));
  out << serialize_dataset(split);
  if (!out) throw Error(ErrorKind::IoError, fmt::format("write to '{}' failed", path.string()));
}

DatasetSplit read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, fmt::format("cannot open '{}' for reading", path.string()));
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_dataset(buf.str());
}

std::string dataset_hash(const DatasetSplit& split) { return hex_digest(fnv1a(serialize_dataset(split))); }

}  // namespace ruleprompt
